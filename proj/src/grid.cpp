#include "percnn/grid.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace percnn {

namespace {

std::string describe(const Field& f) {
  std::ostringstream os;
  os << f.channels() << "x[";
  for (std::size_t a = 0; a < f.rank(); ++a) os << (a ? "," : "") << f.extents()[a];
  os << "]";
  return os.str();
}

void require_same_shape(const Field& a, const Field& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + describe(a) + " vs " +
                     describe(b));
  }
}

// Spatial extents lifted to three axes (leading axes of size 1).
struct Box {
  std::array<std::size_t, 3> n{1, 1, 1};
  std::size_t offset = 0;  // first real axis inside the box
};

Box box_of(const Extents& e) {
  if (e.empty() || e.size() > 3) throw DimensionError("grid rank must be 1, 2 or 3");
  Box b;
  b.offset = 3 - e.size();
  for (std::size_t a = 0; a < e.size(); ++a) b.n[b.offset + a] = e[a];
  return b;
}

// A field viewed along one axis as [outer][n][inner].
struct AxisView {
  std::size_t outer;
  std::size_t n;
  std::size_t inner;
};

AxisView axis_view(const Field& f, std::size_t axis) {
  const auto& e = f.extents();
  std::size_t outer = f.channels();
  for (std::size_t a = 0; a < axis; ++a) outer *= e[a];
  std::size_t inner = 1;
  for (std::size_t a = axis + 1; a < e.size(); ++a) inner *= e[a];
  return {outer, e[axis], inner};
}

Field pad_axis(const Field& src, std::size_t axis, const PadSpec& spec) {
  const std::size_t w = spec.width;
  const AxisView v = axis_view(src, axis);
  Extents ext = src.extents();
  ext[axis] += 2 * w;
  Field dst(src.channels(), ext, src.spacing());
  const std::size_t m = v.n + 2 * w;
  const double dx = src.spacing()[axis];
  const double lo = spec.mode == PadMode::periodic ? 0.0 : spec.face_value(axis, false);
  const double hi = spec.mode == PadMode::periodic ? 0.0 : spec.face_value(axis, true);
  const auto in = src.values();
  auto out = dst.values();
  for (std::size_t o = 0; o < v.outer; ++o) {
    const double* s = in.data() + o * v.n * v.inner;
    double* d = out.data() + o * m * v.inner;
    std::copy(s, s + v.n * v.inner, d + w * v.inner);
    for (std::size_t dist = 1; dist <= w; ++dist) {
      double* ghost_lo = d + (w - dist) * v.inner;
      double* ghost_hi = d + (w + v.n - 1 + dist) * v.inner;
      switch (spec.mode) {
        case PadMode::periodic: {
          const double* wrap_lo = s + (v.n - dist) * v.inner;
          const double* wrap_hi = s + (dist - 1) * v.inner;
          std::copy(wrap_lo, wrap_lo + v.inner, ghost_lo);
          std::copy(wrap_hi, wrap_hi + v.inner, ghost_hi);
          break;
        }
        case PadMode::dirichlet:
          std::fill(ghost_lo, ghost_lo + v.inner, lo);
          std::fill(ghost_hi, ghost_hi + v.inner, hi);
          break;
        case PadMode::neumann: {
          const double* first = s;
          const double* last = s + (v.n - 1) * v.inner;
          const double step = static_cast<double>(dist) * dx;
          for (std::size_t i = 0; i < v.inner; ++i) {
            ghost_lo[i] = first[i] + step * lo;
            ghost_hi[i] = last[i] + step * hi;
          }
          break;
        }
      }
    }
  }
  return dst;
}

Field unpad_axis(const Field& grad, std::size_t axis, const PadSpec& spec) {
  const std::size_t w = spec.width;
  const AxisView v = axis_view(grad, axis);
  const std::size_t n = v.n - 2 * w;
  Extents ext = grad.extents();
  ext[axis] = n;
  Field dst(grad.channels(), ext, grad.spacing());
  const auto in = grad.values();
  auto out = dst.values();
  for (std::size_t o = 0; o < v.outer; ++o) {
    const double* g = in.data() + o * v.n * v.inner;
    double* d = out.data() + o * n * v.inner;
    std::copy(g + w * v.inner, g + (w + n) * v.inner, d);
    if (spec.mode == PadMode::dirichlet) continue;
    for (std::size_t dist = 1; dist <= w; ++dist) {
      const double* ghost_lo = g + (w - dist) * v.inner;
      const double* ghost_hi = g + (w + n - 1 + dist) * v.inner;
      double* to_lo = spec.mode == PadMode::periodic ? d + (n - dist) * v.inner : d;
      double* to_hi =
          spec.mode == PadMode::periodic ? d + (dist - 1) * v.inner : d + (n - 1) * v.inner;
      for (std::size_t i = 0; i < v.inner; ++i) to_lo[i] += ghost_lo[i];
      for (std::size_t i = 0; i < v.inner; ++i) to_hi[i] += ghost_hi[i];
    }
  }
  return dst;
}

// Kernel extents (kz, ky, kx) for a filter bank applied to a rank-r field.
std::array<std::size_t, 3> kernel_box(const Field& filters) {
  const Box b = box_of(filters.extents());
  return b.n;
}

struct InterpTable {
  std::vector<std::size_t> i0, i1;
  std::vector<double> frac;
};

InterpTable interp_table(std::size_t source, std::size_t target, Alignment alignment) {
  InterpTable t;
  t.i0.resize(target);
  t.i1.resize(target);
  t.frac.resize(target);
  for (std::size_t j = 0; j < target; ++j) {
    std::size_t i0 = 0, rem = 0, den = 1;
    if (alignment == Alignment::corners) {
      if (target > 1) {
        const std::size_t num = j * (source - 1);
        den = target - 1;
        i0 = num / den;
        rem = num % den;
      }
      t.i1[j] = std::min(i0 + 1, source - 1);
    } else {
      const std::size_t num = j * source;
      den = target;
      i0 = num / den;
      rem = num % den;
      t.i1[j] = (i0 + 1) % source;
    }
    t.i0[j] = i0;
    t.frac[j] = static_cast<double>(rem) / static_cast<double>(den);
  }
  return t;
}

Field upsample_axis(const Field& src, std::size_t axis, std::size_t target,
                    Alignment alignment) {
  const AxisView v = axis_view(src, axis);
  Extents ext = src.extents();
  ext[axis] = target;
  std::vector<double> spacing = src.spacing();
  if (alignment == Alignment::corners) {
    if (target > 1)
      spacing[axis] *= static_cast<double>(v.n - 1) / static_cast<double>(target - 1);
  } else {
    spacing[axis] *= static_cast<double>(v.n) / static_cast<double>(target);
  }
  Field dst(src.channels(), ext, spacing);
  const InterpTable t = interp_table(v.n, target, alignment);
  const auto in = src.values();
  auto out = dst.values();
  for (std::size_t o = 0; o < v.outer; ++o) {
    const double* s = in.data() + o * v.n * v.inner;
    double* d = out.data() + o * target * v.inner;
    for (std::size_t j = 0; j < target; ++j) {
      const double* a = s + t.i0[j] * v.inner;
      const double* b = s + t.i1[j] * v.inner;
      const double f = t.frac[j];
      double* row = d + j * v.inner;
      for (std::size_t i = 0; i < v.inner; ++i) row[i] = (1.0 - f) * a[i] + f * b[i];
    }
  }
  return dst;
}

Field upsample_axis_adjoint(const Field& grad, std::size_t axis, std::size_t source,
                            Alignment alignment) {
  const AxisView v = axis_view(grad, axis);
  Extents ext = grad.extents();
  ext[axis] = source;
  Field dst(grad.channels(), ext, grad.spacing());
  const InterpTable t = interp_table(source, v.n, alignment);
  const auto in = grad.values();
  auto out = dst.values();
  for (std::size_t o = 0; o < v.outer; ++o) {
    const double* g = in.data() + o * v.n * v.inner;
    double* d = out.data() + o * source * v.inner;
    for (std::size_t j = 0; j < v.n; ++j) {
      double* a = d + t.i0[j] * v.inner;
      double* b = d + t.i1[j] * v.inner;
      const double f = t.frac[j];
      const double* row = g + j * v.inner;
      for (std::size_t i = 0; i < v.inner; ++i) {
        a[i] += (1.0 - f) * row[i];
        b[i] += f * row[i];
      }
    }
  }
  return dst;
}

}  // namespace

// ---------------------------------------------------------------------------
// Field

std::size_t product_of(const Extents& extents) {
  return std::accumulate(extents.begin(), extents.end(), std::size_t{1},
                         std::multiplies<>());
}

Field::Field(std::size_t channels, Extents extents, std::vector<double> spacing)
    : Field(channels, std::move(extents), std::move(spacing), {}) {}

Field::Field(std::size_t channels, Extents extents, std::vector<double> spacing,
             std::vector<double> values)
    : channels_(channels), extents_(std::move(extents)), spacing_(std::move(spacing)) {
  if (channels_ == 0) throw DimensionError("field needs at least one channel");
  if (extents_.empty() || extents_.size() > 3)
    throw DimensionError("field rank must be 1, 2 or 3");
  for (auto e : extents_)
    if (e == 0) throw DimensionError("field extents must be >= 1");
  if (spacing_.empty()) spacing_.assign(extents_.size(), 1.0);
  if (spacing_.size() != extents_.size())
    throw DimensionError("spacing must have one entry per axis");
  cells_ = product_of(extents_);
  if (values.empty()) {
    values_.assign(channels_ * cells_, 0.0);
  } else {
    if (values.size() != channels_ * cells_)
      throw ShapeError("field value count does not match channels x cells");
    values_ = std::move(values);
  }
}

Field Field::scalar(double value) { return Field(1, {1}, {}, {value}); }

Field Field::filled(std::size_t channels, Extents extents, double value,
                    std::vector<double> spacing) {
  Field f(channels, std::move(extents), std::move(spacing));
  f.fill(value);
  return f;
}

bool Field::all_finite() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v); });
}

void Field::fill(double value) { std::fill(values_.begin(), values_.end(), value); }

void Field::set_spacing(std::vector<double> spacing) {
  if (spacing.size() != extents_.size())
    throw DimensionError("spacing must have one entry per axis");
  spacing_ = std::move(spacing);
}

bool operator==(const Field& a, const Field& b) {
  return a.same_shape(b) && a.spacing() == b.spacing() &&
         std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

// ---------------------------------------------------------------------------
// PadSpec

PadSpec PadSpec::periodic(std::size_t width) { return {PadMode::periodic, width, {}}; }

PadSpec PadSpec::dirichlet(std::size_t width, std::vector<double> values) {
  return {PadMode::dirichlet, width, std::move(values)};
}

PadSpec PadSpec::neumann(std::size_t width, std::vector<double> gradients) {
  return {PadMode::neumann, width, std::move(gradients)};
}

double PadSpec::face_value(std::size_t axis, bool high) const {
  if (boundary_values.size() == 1) return boundary_values[0];
  return boundary_values.at(2 * axis + (high ? 1 : 0));
}

void PadSpec::validate(std::size_t rank) const {
  if (width == 0) throw SpecError("pad width must be >= 1");
  if (mode == PadMode::periodic) {
    if (!boundary_values.empty())
      throw SpecError("periodic padding takes no boundary values");
    return;
  }
  if (boundary_values.empty())
    throw SpecError(std::string(to_string(mode)) + " padding requires boundary values");
  if (boundary_values.size() != 1 && boundary_values.size() != 2 * rank)
    throw SpecError("boundary values must be one shared value or one per face");
}

const char* to_string(PadMode mode) {
  switch (mode) {
    case PadMode::periodic: return "periodic";
    case PadMode::dirichlet: return "dirichlet";
    case PadMode::neumann: return "neumann";
  }
  return "?";
}

PadMode pad_mode_from_string(const std::string& name) {
  if (name == "periodic") return PadMode::periodic;
  if (name == "dirichlet") return PadMode::dirichlet;
  if (name == "neumann") return PadMode::neumann;
  throw SpecError("unknown padding mode '" + name + "'");
}

// ---------------------------------------------------------------------------
// Padding

Field pad(const Field& f, const PadSpec& spec) {
  spec.validate(f.rank());
  const std::size_t smallest = *std::min_element(f.extents().begin(), f.extents().end());
  if (spec.width > smallest)
    throw DimensionError("pad width " + std::to_string(spec.width) +
                         " exceeds smallest extent " + std::to_string(smallest));
  if (!f.all_finite()) throw SpecError("pad: field contains non-finite values");
  Field cur = pad_axis(f, 0, spec);
  for (std::size_t a = 1; a < f.rank(); ++a) cur = pad_axis(cur, a, spec);
  return cur;
}

Field pad_adjoint(const Field& grad_padded, const Field& input, const PadSpec& spec) {
  Field cur = grad_padded;
  for (std::size_t a = input.rank(); a-- > 0;) cur = unpad_axis(cur, a, spec);
  cur.set_spacing(input.spacing());
  return cur;
}

// ---------------------------------------------------------------------------
// Convolution

std::size_t filter_size(const Field& filters) { return filters.extents().back(); }

std::size_t filter_outputs(const Field& filters, std::size_t in_channels) {
  if (in_channels == 0 || filters.channels() % in_channels != 0)
    throw ShapeError("filter bank channel count " + std::to_string(filters.channels()) +
                     " is not a multiple of the input channel count " +
                     std::to_string(in_channels));
  return filters.channels() / in_channels;
}

Field conv(const Field& f, const Field& filters, const Field& biases,
           const PadSpec& pad_spec) {
  const std::size_t k = filter_size(filters);
  if (k % 2 == 0) throw SpecError("filter size must be odd, got " + std::to_string(k));
  if (filters.rank() != f.rank()) throw ShapeError("filter rank differs from field rank");
  const std::size_t out = filter_outputs(filters, f.channels());
  if (k == 1) return conv_valid(f, filters, biases, out);
  return conv_valid(pad(f, pad_spec.with_width((k - 1) / 2)), filters, biases, out);
}

Field conv_valid(const Field& padded, const Field& filters, const Field& biases,
                 std::size_t out_channels) {
  const std::size_t cin = padded.channels();
  if (filters.channels() != out_channels * cin)
    throw ShapeError("filter bank expects " + std::to_string(filters.channels()) +
                     " channel pairs, input has " + std::to_string(cin) + " channels");
  if (!biases.empty() && biases.size() != out_channels)
    throw ShapeError("bias count does not match output channels");
  if (filters.rank() != padded.rank()) throw ShapeError("filter rank differs from field rank");
  for (auto e : filters.extents())
    if (e != filters.extents().back()) throw SpecError("filters must be hypercubic");
  const Box pb = box_of(padded.extents());
  const auto kb = kernel_box(filters);
  Extents out_ext(padded.rank());
  for (std::size_t a = 0; a < padded.rank(); ++a) {
    const std::size_t k = filters.extents()[a];
    if (padded.extents()[a] < k) throw DimensionError("input smaller than filter");
    out_ext[a] = padded.extents()[a] - k + 1;
  }
  Field out(out_channels, out_ext, padded.spacing());
  const Box ob = box_of(out_ext);
  const std::size_t oh = ob.n[1], ow = ob.n[2], od = ob.n[0];
  const std::size_t ph = pb.n[1], pw = pb.n[2];
  for (std::size_t co = 0; co < out_channels; ++co) {
    auto o = out.channel(co);
    if (!biases.empty()) std::fill(o.begin(), o.end(), biases[co]);
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* in = padded.channel(ci).data();
      const auto wts = filters.channel(co * cin + ci);
      for (std::size_t a = 0; a < kb[0]; ++a)
        for (std::size_t b = 0; b < kb[1]; ++b)
          for (std::size_t c = 0; c < kb[2]; ++c) {
            const double w = wts[(a * kb[1] + b) * kb[2] + c];
            if (w == 0.0) continue;
            for (std::size_t z = 0; z < od; ++z)
              for (std::size_t y = 0; y < oh; ++y) {
                double* orow = o.data() + (z * oh + y) * ow;
                const double* irow = in + ((z + a) * ph + (y + b)) * pw + c;
                for (std::size_t x = 0; x < ow; ++x) orow[x] += w * irow[x];
              }
          }
    }
  }
  return out;
}

void conv_valid_adjoint(const Field& padded, const Field& filters, const Field& grad_out,
                        Field* grad_padded, Field* grad_filters, Field* grad_biases) {
  const std::size_t cin = padded.channels();
  const std::size_t cout = grad_out.channels();
  const Box pb = box_of(padded.extents());
  const Box ob = box_of(grad_out.extents());
  const auto kb = kernel_box(filters);
  const std::size_t od = ob.n[0], oh = ob.n[1], ow = ob.n[2];
  const std::size_t ph = pb.n[1], pw = pb.n[2];
  if (grad_padded) *grad_padded = padded.zeros_like();
  if (grad_filters) *grad_filters = filters.zeros_like();
  if (grad_biases) *grad_biases = Field(cout, {1});
  for (std::size_t co = 0; co < cout; ++co) {
    const double* g = grad_out.channel(co).data();
    if (grad_biases) {
      double s = 0.0;
      for (std::size_t i = 0; i < grad_out.cells(); ++i) s += g[i];
      (*grad_biases)[co] = s;
    }
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* in = padded.channel(ci).data();
      const auto wts = filters.channel(co * cin + ci);
      double* gin = grad_padded ? grad_padded->channel(ci).data() : nullptr;
      double* gw = grad_filters ? grad_filters->channel(co * cin + ci).data() : nullptr;
      for (std::size_t a = 0; a < kb[0]; ++a)
        for (std::size_t b = 0; b < kb[1]; ++b)
          for (std::size_t c = 0; c < kb[2]; ++c) {
            const std::size_t tap = (a * kb[1] + b) * kb[2] + c;
            const double w = wts[tap];
            double acc = 0.0;
            for (std::size_t z = 0; z < od; ++z)
              for (std::size_t y = 0; y < oh; ++y) {
                const double* grow = g + (z * oh + y) * ow;
                const std::size_t off = ((z + a) * ph + (y + b)) * pw + c;
                if (gw) {
                  const double* irow = in + off;
                  for (std::size_t x = 0; x < ow; ++x) acc += grow[x] * irow[x];
                }
                if (gin && w != 0.0) {
                  double* girow = gin + off;
                  for (std::size_t x = 0; x < ow; ++x) girow[x] += w * grow[x];
                }
              }
            if (gw) gw[tap] = acc;
          }
    }
  }
}

// ---------------------------------------------------------------------------
// Cross stencil

namespace {

struct StencilGeometry {
  Box in, out;
  std::size_t radius;
  std::array<std::size_t, 3> off{};  // padding per box axis
};

StencilGeometry stencil_geometry(const Extents& padded_ext, std::size_t taps) {
  if (taps % 2 == 0) throw SpecError("stencil tap count must be odd");
  StencilGeometry g;
  g.radius = (taps - 1) / 2;
  g.in = box_of(padded_ext);
  Extents out_ext = padded_ext;
  for (auto& e : out_ext) {
    if (e < 2 * g.radius + 1) throw DimensionError("input smaller than stencil");
    e -= 2 * g.radius;
  }
  g.out = box_of(out_ext);
  for (std::size_t a = g.in.offset; a < 3; ++a) g.off[a] = g.radius;
  return g;
}

// Off-centre taps act on differences f(p + k) - f(p), so zero-sum stencils
// return exactly zero on constant fields. The centre carries whatever the taps
// sum to; sums at rounding level count as zero.
double centre_weight(std::span<const double> taps) {
  double sum = 0.0, scale = 0.0;
  for (double t : taps) {
    sum += t;
    scale = std::max(scale, std::abs(t));
  }
  return std::abs(sum) <= 1e-12 * scale ? 0.0 : sum;
}

template <class Kernel>
void for_each_stencil_row(const StencilGeometry& g, std::span<const double> taps,
                          std::span<const double> axis_scale, Kernel&& kernel) {
  const std::size_t rank = 3 - g.in.offset;
  if (axis_scale.size() != rank) throw ShapeError("one axis scale per axis required");
  const double centre = centre_weight(taps);
  for (std::size_t ra = 0; ra < rank; ++ra) {
    const std::size_t axis = g.in.offset + ra;
    for (std::size_t k = 0; k < taps.size(); ++k) {
      const bool is_centre = k == g.radius;
      const double coef = axis_scale[ra] * (is_centre ? centre : taps[k]);
      if (coef == 0.0) continue;
      std::array<std::size_t, 3> shift = g.off;
      shift[axis] = k;  // off - radius + k
      for (std::size_t z = 0; z < g.out.n[0]; ++z)
        for (std::size_t y = 0; y < g.out.n[1]; ++y) {
          const std::size_t orow = (z * g.out.n[1] + y) * g.out.n[2];
          const std::size_t irow =
              ((z + shift[0]) * g.in.n[1] + (y + shift[1])) * g.in.n[2] + shift[2];
          const std::size_t crow =
              ((z + g.off[0]) * g.in.n[1] + (y + g.off[1])) * g.in.n[2] + g.off[2];
          kernel(coef, is_centre, orow, irow, crow, g.out.n[2]);
        }
    }
  }
}

}  // namespace

Field cross_stencil_valid(const Field& padded, std::span<const double> taps,
                          std::span<const double> axis_scale) {
  const StencilGeometry g = stencil_geometry(padded.extents(), taps.size());
  Extents out_ext = padded.extents();
  for (auto& e : out_ext) e -= 2 * g.radius;
  Field out(padded.channels(), out_ext, padded.spacing());
  for (std::size_t c = 0; c < padded.channels(); ++c) {
    const double* in = padded.channel(c).data();
    double* o = out.channel(c).data();
    for_each_stencil_row(g, taps, axis_scale,
                         [&](double coef, bool is_centre, std::size_t orow, std::size_t irow,
                             std::size_t crow, std::size_t n) {
                           if (is_centre) {
                             for (std::size_t x = 0; x < n; ++x) o[orow + x] += coef * in[crow + x];
                           } else {
                             for (std::size_t x = 0; x < n; ++x)
                               o[orow + x] += coef * (in[irow + x] - in[crow + x]);
                           }
                         });
  }
  return out;
}

Field cross_stencil_valid_adjoint(const Field& grad_out, const Field& padded,
                                  std::span<const double> taps,
                                  std::span<const double> axis_scale) {
  const StencilGeometry g = stencil_geometry(padded.extents(), taps.size());
  Field grad = padded.zeros_like();
  for (std::size_t c = 0; c < padded.channels(); ++c) {
    const double* go = grad_out.channel(c).data();
    double* gi = grad.channel(c).data();
    for_each_stencil_row(g, taps, axis_scale,
                         [&](double coef, bool is_centre, std::size_t orow, std::size_t irow,
                             std::size_t crow, std::size_t n) {
                           if (!is_centre)
                             for (std::size_t x = 0; x < n; ++x) gi[irow + x] += coef * go[orow + x];
                           const double cc = is_centre ? coef : -coef;
                           for (std::size_t x = 0; x < n; ++x) gi[crow + x] += cc * go[orow + x];
                         });
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Pointwise

Field elementwise_product(std::span<const Field* const> fields) {
  if (fields.size() < 2) throw SpecError("elementwise product needs at least two fields");
  for (std::size_t i = 1; i < fields.size(); ++i)
    require_same_shape(*fields[0], *fields[i], "elementwise_product");
  Field out = *fields[0];
  auto o = out.values();
  for (std::size_t i = 1; i < fields.size(); ++i) {
    const auto v = fields[i]->values();
    for (std::size_t j = 0; j < o.size(); ++j) o[j] *= v[j];
  }
  return out;
}

Field elementwise_product(std::span<const Field> fields) {
  std::vector<const Field*> ptrs;
  ptrs.reserve(fields.size());
  for (const auto& f : fields) ptrs.push_back(&f);
  return elementwise_product(std::span<const Field* const>(ptrs));
}

Field axpy(const Field& base, const Field& delta, double scale) {
  require_same_shape(base, delta, "axpy");
  Field out = base;
  auto o = out.values();
  const auto d = delta.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += scale * d[i];
  return out;
}

// ---------------------------------------------------------------------------
// Interpolation and sampling

Field upsample(const Field& f, const Extents& target, Alignment alignment) {
  if (target.size() != f.rank()) throw ShapeError("upsample: target rank differs");
  for (std::size_t a = 0; a < f.rank(); ++a)
    if (target[a] < f.extents()[a])
      throw SpecError("upsample cannot reduce extents; use subsample");
  Field cur = f;
  for (std::size_t a = 0; a < f.rank(); ++a)
    if (target[a] != cur.extents()[a]) cur = upsample_axis(cur, a, target[a], alignment);
  return cur;
}

Field upsample_adjoint(const Field& grad, const Field& source, Alignment alignment) {
  Field cur = grad;
  for (std::size_t a = source.rank(); a-- > 0;)
    if (cur.extents()[a] != source.extents()[a])
      cur = upsample_axis_adjoint(cur, a, source.extents()[a], alignment);
  cur.set_spacing(source.spacing());
  return cur;
}

Alignment alignment_for(const Extents& coarse, const Extents& fine) {
  bool corners = true, periodic = true;
  for (std::size_t a = 0; a < coarse.size(); ++a) {
    const std::size_t c = coarse[a], f = fine[a];
    if (c == f) continue;
    if (c < 2 || (f - 1) % (c - 1) != 0) corners = false;
    if (f % c != 0) periodic = false;
  }
  if (corners || !periodic) return Alignment::corners;
  return Alignment::periodic;
}

Field gather_strided(const Field& f, const std::vector<std::size_t>& strides,
                     const Extents& coarse) {
  if (strides.size() != f.rank() || coarse.size() != f.rank())
    throw ShapeError("gather: stride/extent rank mismatch");
  const Box fb = box_of(f.extents());
  const Box cb = box_of(coarse);
  std::array<std::size_t, 3> s{1, 1, 1};
  std::vector<double> spacing(f.rank());
  for (std::size_t a = 0; a < f.rank(); ++a) {
    if (strides[a] == 0) throw SpecError("strides must be >= 1");
    if (strides[a] * (coarse[a] - 1) >= f.extents()[a])
      throw DimensionError("gather: coarse node outside the fine grid");
    s[fb.offset + a] = strides[a];
    spacing[a] = f.spacing()[a] * static_cast<double>(strides[a]);
  }
  Field out(f.channels(), coarse, spacing);
  for (std::size_t c = 0; c < f.channels(); ++c) {
    const double* in = f.channel(c).data();
    double* o = out.channel(c).data();
    std::size_t idx = 0;
    for (std::size_t z = 0; z < cb.n[0]; ++z)
      for (std::size_t y = 0; y < cb.n[1]; ++y)
        for (std::size_t x = 0; x < cb.n[2]; ++x)
          o[idx++] = in[((z * s[0]) * fb.n[1] + y * s[1]) * fb.n[2] + x * s[2]];
  }
  return out;
}

Field gather_strided_adjoint(const Field& grad_coarse, const Field& fine,
                             const std::vector<std::size_t>& strides) {
  const Box fb = box_of(fine.extents());
  const Box cb = box_of(grad_coarse.extents());
  std::array<std::size_t, 3> s{1, 1, 1};
  for (std::size_t a = 0; a < fine.rank(); ++a) s[fb.offset + a] = strides[a];
  Field out = fine.zeros_like();
  for (std::size_t c = 0; c < fine.channels(); ++c) {
    const double* g = grad_coarse.channel(c).data();
    double* o = out.channel(c).data();
    std::size_t idx = 0;
    for (std::size_t z = 0; z < cb.n[0]; ++z)
      for (std::size_t y = 0; y < cb.n[1]; ++y)
        for (std::size_t x = 0; x < cb.n[2]; ++x)
          o[((z * s[0]) * fb.n[1] + y * s[1]) * fb.n[2] + x * s[2]] += g[idx++];
  }
  return out;
}

Field make_filters(std::size_t out, std::size_t in, std::size_t k, std::size_t rank) {
  return Field(out * in, Extents(rank, k));
}

Field make_biases(std::size_t out) { return Field(out, {1}); }

}  // namespace percnn
