#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "percnn/errors.hpp"

namespace percnn {

using Extents = std::vector<std::size_t>;

/// Multi-channel state on a regular Cartesian grid of rank 1, 2 or 3.
///
/// Values are stored channel-major, then row-major over the spatial axes
/// (last axis fastest). Axis naming follows array order: for rank 2 the axes
/// are (y, x), for rank 3 (z, y, x). Parameter tensors reuse this type; a
/// filter bank of `out` by `in` channels is a Field with `out*in` channels and
/// extents `{k, ..., k}`, a bias vector a Field with `out` channels and
/// extents `{1}`.
class Field {
 public:
  Field() = default;
  /// Zero-filled field; empty `spacing` means unit spacing on every axis.
  Field(std::size_t channels, Extents extents, std::vector<double> spacing = {});
  Field(std::size_t channels, Extents extents, std::vector<double> spacing,
        std::vector<double> values);

  static Field scalar(double value);
  static Field filled(std::size_t channels, Extents extents, double value,
                      std::vector<double> spacing = {});

  std::size_t channels() const { return channels_; }
  const Extents& extents() const { return extents_; }
  const std::vector<double>& spacing() const { return spacing_; }
  std::size_t rank() const { return extents_.size(); }
  std::size_t cells() const { return cells_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::vector<double>& storage() { return values_; }
  std::span<double> channel(std::size_t c) {
    return std::span<double>(values_).subspan(c * cells_, cells_);
  }
  std::span<const double> channel(std::size_t c) const {
    return std::span<const double>(values_).subspan(c * cells_, cells_);
  }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  /// Same channel count and extents (spacing is not compared).
  bool same_shape(const Field& other) const {
    return channels_ == other.channels_ && extents_ == other.extents_;
  }
  bool all_finite() const;
  void fill(double value);
  void set_spacing(std::vector<double> spacing);

  /// Zero field with this field's shape and spacing.
  Field zeros_like() const { return Field(channels_, extents_, spacing_); }

 private:
  std::size_t channels_ = 0;
  Extents extents_;
  std::vector<double> spacing_;
  std::size_t cells_ = 0;
  std::vector<double> values_;
};

bool operator==(const Field& a, const Field& b);

std::size_t product_of(const Extents& extents);

enum class PadMode { periodic, dirichlet, neumann };

/// Ghost-cell rule applied on every face of the grid.
///
/// `boundary_values` holds either one value shared by all faces or one per
/// face ordered (axis 0 low, axis 0 high, axis 1 low, ...). For dirichlet the
/// value is the ghost value; for neumann it is the outward normal gradient.
struct PadSpec {
  PadMode mode = PadMode::periodic;
  std::size_t width = 1;
  std::vector<double> boundary_values;

  static PadSpec periodic(std::size_t width = 1);
  static PadSpec dirichlet(std::size_t width, std::vector<double> values);
  static PadSpec neumann(std::size_t width, std::vector<double> gradients);

  PadSpec with_width(std::size_t w) const {
    PadSpec copy = *this;
    copy.width = w;
    return copy;
  }
  double face_value(std::size_t axis, bool high) const;
  /// Throws SpecError when the values do not fit the mode or the rank.
  void validate(std::size_t rank) const;
};

const char* to_string(PadMode mode);
PadMode pad_mode_from_string(const std::string& name);

/// Interpolation node alignment for `upsample`.
///  - corners: first and last nodes coincide (T = s*(S-1)+1 refinement).
///  - periodic: coarse node i sits on fine node i*T/S and the last interval
///    wraps back to node 0 (T = s*S refinement of a periodic tile).
enum class Alignment { corners, periodic };

// Spec-level grid operations. All are pure; none record gradients (see
// tape.hpp for the differentiable versions).

Field pad(const Field& f, const PadSpec& spec);
/// Gradient of `pad` with respect to its input, given the gradient on the
/// padded field.
Field pad_adjoint(const Field& grad_padded, const Field& input, const PadSpec& spec);

/// Same-size cross-correlation: pads by (k-1)/2 with `pad_spec`'s mode, then
/// slides the filters. `biases` may be empty.
Field conv(const Field& f, const Field& filters, const Field& biases,
           const PadSpec& pad_spec);

/// Kernel size of a filter bank (all axes share it).
std::size_t filter_size(const Field& filters);
/// Output channel count implied by a filter bank for a given input channel count.
std::size_t filter_outputs(const Field& filters, std::size_t in_channels);

/// Valid cross-correlation over an already padded input.
Field conv_valid(const Field& padded, const Field& filters, const Field& biases,
                 std::size_t out_channels);
/// Adjoint of conv_valid. Any of the gradient outputs may be null.
void conv_valid_adjoint(const Field& padded, const Field& filters,
                        const Field& grad_out, Field* grad_padded,
                        Field* grad_filters, Field* grad_biases);

/// Depthwise cross-shaped stencil over an already padded input: for every
/// channel, the sum over axes a of axis_scale[a] * sum_k taps[k] * f(p + (k-r) e_a).
Field cross_stencil_valid(const Field& padded, std::span<const double> taps,
                          std::span<const double> axis_scale);
Field cross_stencil_valid_adjoint(const Field& grad_out, const Field& padded,
                                  std::span<const double> taps,
                                  std::span<const double> axis_scale);

Field elementwise_product(std::span<const Field> fields);
Field elementwise_product(std::span<const Field* const> fields);

Field axpy(const Field& base, const Field& delta, double scale);

Field upsample(const Field& f, const Extents& target,
               Alignment alignment = Alignment::corners);
Field upsample_adjoint(const Field& grad, const Field& source,
                       Alignment alignment = Alignment::corners);
/// Alignment that makes a coarse grid's nodes coincide with stride multiples
/// of the fine grid; corners wins when both fit.
Alignment alignment_for(const Extents& coarse, const Extents& fine);

/// Samples node (s0*i0, s1*i1, ...) into coarse node (i0, i1, ...).
Field gather_strided(const Field& f, const std::vector<std::size_t>& strides,
                     const Extents& coarse);
Field gather_strided_adjoint(const Field& grad_coarse, const Field& fine,
                             const std::vector<std::size_t>& strides);

/// Filter bank and bias helpers.
Field make_filters(std::size_t out, std::size_t in, std::size_t k, std::size_t rank);
Field make_biases(std::size_t out);

}  // namespace percnn
