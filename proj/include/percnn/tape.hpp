#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "percnn/grid.hpp"

namespace percnn {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape
/// lives.
class Var {
 public:
  Var() = default;
  const Field& value() const;
  Tape* tape() const { return tape_; }
  std::size_t index() const { return index_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}
  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

/// Linear record of differentiable Field operations.
///
/// Nodes are appended in evaluation order, so the record is already a
/// topological order: `backward` walks it once from the root down, calling
/// each node's adjoint exactly once. Nodes that do not depend on a parameter
/// are never visited. Single-writer; use one tape per thread.
class Tape {
 public:
  /// Receives the node's accumulated output gradient.
  using Adjoint = std::function<void(Tape&, const Field& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf whose gradient is reported by `grad` after `backward`.
  Var parameter(Field value);
  /// Leaf that never receives a gradient.
  Var constant(Field value);

  const Field& value(Var v) const { return nodes_[v.index()].value; }
  /// Gradient of the last backward root with respect to `v`. Parameters not
  /// reachable from the root hold an exact zero field.
  const Field& grad(Var v) const;
  bool needs_grad(Var v) const { return nodes_[v.index()].needs_grad; }

  /// Reverse sweep from a one-element root. Throws SpecError otherwise.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

  /// Appends an op result. The adjoint runs only if the result depends on a
  /// parameter (any of `inputs` needs a gradient).
  Var record(Field value, std::span<const Var> inputs, Adjoint adjoint);
  /// Adds `g` into the gradient slot of `v` (no-op when v needs no gradient).
  void accumulate(Var v, const Field& g);
  /// Adds `scale * g` without materializing the scaled field.
  void accumulate_scaled(Var v, const Field& g, double scale);

 private:
  struct Node {
    Field value;
    Field grad;
    bool needs_grad = false;
    bool is_parameter = false;
    Adjoint adjoint;
  };
  Field& grad_slot(std::size_t i);

  std::deque<Node> nodes_;
};

/// Differentiable counterparts of the grid operations. Every input Var must
/// live on the same tape.
namespace ad {

Var pad(Var x, const PadSpec& spec);
/// Same-size convolution (pads by (k-1)/2 unless k == 1). `b` may be invalid
/// for a bias-free convolution.
Var conv(Var x, Var w, Var b, const PadSpec& spec);
/// Valid convolution over an already padded input.
Var conv_valid(Var padded, Var w, Var b);
Var cross_stencil(Var padded, std::vector<double> taps, std::vector<double> axis_scale);
Var product(std::span<const Var> factors);
Var axpy(Var base, Var delta, double scale);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double s);
/// Multiplies channel c of `x` by the c-th entry of `coef`.
Var channel_scale(Var x, Var coef);
Var tanh(Var x);
Var concat_channels(std::span<const Var> parts);
Var upsample(Var x, const Extents& target, Alignment alignment);
Var gather_strided(Var x, std::vector<std::size_t> strides, Extents coarse);
/// Sum of squared differences against a constant target; one-element result.
Var sum_squared_error(Var x, const Field& target);
/// Sum of all entries; one-element result.
Var sum(Var x);

}  // namespace ad

}  // namespace percnn
