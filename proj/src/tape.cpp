#include "percnn/tape.hpp"

#include <cmath>

namespace percnn {

const Field& Var::value() const { return tape_->value(*this); }

Var Tape::parameter(Field value) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = true;
  n.is_parameter = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Field value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Field value, std::span<const Var> inputs, Adjoint adjoint) {
  Node n;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    if (!in.valid()) continue;
    if (in.tape() != this) throw SpecError("operands recorded on different tapes");
    n.needs_grad = n.needs_grad || nodes_[in.index()].needs_grad;
  }
  if (n.needs_grad) n.adjoint = std::move(adjoint);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Field& Tape::grad_slot(std::size_t i) {
  Node& n = nodes_[i];
  if (n.grad.empty()) n.grad = n.value.zeros_like();
  return n.grad;
}

void Tape::accumulate(Var v, const Field& g) { accumulate_scaled(v, g, 1.0); }

void Tape::accumulate_scaled(Var v, const Field& g, double scale) {
  if (!v.valid() || !nodes_[v.index()].needs_grad) return;
  Field& slot = grad_slot(v.index());
  if (slot.size() != g.size()) throw ShapeError("gradient shape mismatch");
  auto s = slot.values();
  const auto gv = g.values();
  if (scale == 1.0) {
    for (std::size_t i = 0; i < s.size(); ++i) s[i] += gv[i];
  } else {
    for (std::size_t i = 0; i < s.size(); ++i) s[i] += scale * gv[i];
  }
}

const Field& Tape::grad(Var v) const {
  const Node& n = nodes_[v.index()];
  if (n.grad.empty())
    throw SpecError("no gradient recorded for this value; call backward first");
  return n.grad;
}

void Tape::backward(Var root) {
  if (root.tape() != this) throw SpecError("backward root belongs to another tape");
  if (nodes_[root.index()].value.size() != 1)
    throw SpecError("backward requires a scalar root");
  for (auto& n : nodes_) {
    n.grad = Field();
    if (n.is_parameter) n.grad = n.value.zeros_like();
  }
  if (!nodes_[root.index()].needs_grad) return;
  grad_slot(root.index())[0] = 1.0;
  for (std::size_t i = root.index() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.adjoint || n.grad.empty()) continue;
    n.adjoint(*this, n.grad);
    // Intermediate gradients are not needed once propagated.
    if (!n.is_parameter) n.grad = Field();
  }
}

namespace ad {

namespace {

Tape& tape_of(Var v) {
  if (!v.valid()) throw SpecError("operation on an unbound Var");
  return *v.tape();
}

}  // namespace

Var pad(Var x, const PadSpec& spec) {
  Tape& t = tape_of(x);
  const Var in[] = {x};
  return t.record(percnn::pad(x.value(), spec), in,
                  [x, spec](Tape& tape, const Field& g) {
                    tape.accumulate(x, pad_adjoint(g, x.value(), spec));
                  });
}

Var conv_valid(Var padded, Var w, Var b) {
  Tape& t = tape_of(padded);
  const std::size_t out = filter_outputs(w.value(), padded.value().channels());
  const Field no_bias;
  Field y = percnn::conv_valid(padded.value(), w.value(), b.valid() ? b.value() : no_bias, out);
  const Var in[] = {padded, w, b};
  return t.record(std::move(y), in, [padded, w, b](Tape& tape, const Field& g) {
    Field gp, gw, gb;
    const bool need_p = tape.needs_grad(padded);
    const bool need_w = tape.needs_grad(w);
    const bool need_b = b.valid() && tape.needs_grad(b);
    conv_valid_adjoint(padded.value(), w.value(), g, need_p ? &gp : nullptr,
                       need_w ? &gw : nullptr, need_b ? &gb : nullptr);
    if (need_p) tape.accumulate(padded, gp);
    if (need_w) tape.accumulate(w, gw);
    if (need_b) tape.accumulate(b, gb);
  });
}

Var conv(Var x, Var w, Var b, const PadSpec& spec) {
  const std::size_t k = filter_size(w.value());
  if (k % 2 == 0) throw SpecError("filter size must be odd, got " + std::to_string(k));
  if (w.value().rank() != x.value().rank())
    throw ShapeError("filter rank differs from field rank");
  if (k == 1) return conv_valid(x, w, b);
  return conv_valid(pad(x, spec.with_width((k - 1) / 2)), w, b);
}

Var cross_stencil(Var padded, std::vector<double> taps, std::vector<double> axis_scale) {
  Tape& t = tape_of(padded);
  Field y = cross_stencil_valid(padded.value(), taps, axis_scale);
  const Var in[] = {padded};
  return t.record(std::move(y), in,
                  [padded, taps = std::move(taps), axis_scale = std::move(axis_scale)](
                      Tape& tape, const Field& g) {
                    tape.accumulate(padded, cross_stencil_valid_adjoint(
                                                g, padded.value(), taps, axis_scale));
                  });
}

Var product(std::span<const Var> factors) {
  if (factors.empty()) throw SpecError("elementwise product needs at least two fields");
  Tape& t = tape_of(factors[0]);
  std::vector<const Field*> values;
  for (const Var& f : factors) values.push_back(&f.value());
  Field y = elementwise_product(std::span<const Field* const>(values));
  std::vector<Var> fs(factors.begin(), factors.end());
  return t.record(std::move(y), factors, [fs](Tape& tape, const Field& g) {
    // d/df_i = g * prod_{j != i} f_j, via prefix/suffix products so that zero
    // factors are handled without division.
    const std::size_t n = fs.size();
    const std::size_t len = g.size();
    std::vector<double> prefix(len, 1.0);
    std::vector<std::vector<double>> suffix(n, std::vector<double>());
    std::vector<double> acc(len, 1.0);
    for (std::size_t i = n; i-- > 0;) {
      suffix[i] = acc;
      const auto v = fs[i].value().values();
      for (std::size_t j = 0; j < len; ++j) acc[j] *= v[j];
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto v = fs[i].value().values();
      if (tape.needs_grad(fs[i])) {
        Field gi = fs[i].value().zeros_like();
        auto out = gi.values();
        const auto gv = g.values();
        for (std::size_t j = 0; j < len; ++j) out[j] = gv[j] * prefix[j] * suffix[i][j];
        tape.accumulate(fs[i], gi);
      }
      for (std::size_t j = 0; j < len; ++j) prefix[j] *= v[j];
    }
  });
}

Var axpy(Var base, Var delta, double s) {
  Tape& t = tape_of(base);
  const Var in[] = {base, delta};
  return t.record(percnn::axpy(base.value(), delta.value(), s), in,
                  [base, delta, s](Tape& tape, const Field& g) {
                    tape.accumulate(base, g);
                    tape.accumulate_scaled(delta, g, s);
                  });
}

Var add(Var a, Var b) { return axpy(a, b, 1.0); }

Var sub(Var a, Var b) { return axpy(a, b, -1.0); }

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  Field y = a.value();
  for (double& v : y.values()) v *= s;
  const Var in[] = {a};
  return t.record(std::move(y), in,
                  [a, s](Tape& tape, const Field& g) { tape.accumulate_scaled(a, g, s); });
}

Var channel_scale(Var x, Var coef) {
  Tape& t = tape_of(x);
  const Field& xv = x.value();
  const Field& cv = coef.value();
  if (cv.size() != xv.channels())
    throw ShapeError("channel_scale: one coefficient per channel required");
  Field y = xv;
  for (std::size_t c = 0; c < xv.channels(); ++c)
    for (double& v : y.channel(c)) v *= cv[c];
  const Var in[] = {x, coef};
  return t.record(std::move(y), in, [x, coef](Tape& tape, const Field& g) {
    const Field& xv = x.value();
    const Field& cv = coef.value();
    if (tape.needs_grad(x)) {
      Field gx = g;
      for (std::size_t c = 0; c < xv.channels(); ++c)
        for (double& v : gx.channel(c)) v *= cv[c];
      tape.accumulate(x, gx);
    }
    if (tape.needs_grad(coef)) {
      Field gc = cv.zeros_like();
      for (std::size_t c = 0; c < xv.channels(); ++c) {
        const auto gv = g.channel(c);
        const auto xc = xv.channel(c);
        double s = 0.0;
        for (std::size_t i = 0; i < xc.size(); ++i) s += gv[i] * xc[i];
        gc[c] = s;
      }
      tape.accumulate(coef, gc);
    }
  });
}

Var tanh(Var x) {
  Tape& t = tape_of(x);
  Field y = x.value();
  for (double& v : y.values()) v = std::tanh(v);
  const Var in[] = {x};
  return t.record(std::move(y), in, [x](Tape& tape, const Field& g) {
    Field gx = g;
    const auto xv = x.value().values();
    auto gv = gx.values();
    for (std::size_t i = 0; i < gv.size(); ++i) {
      const double th = std::tanh(xv[i]);
      gv[i] *= 1.0 - th * th;
    }
    tape.accumulate(x, gx);
  });
}

Var concat_channels(std::span<const Var> parts) {
  if (parts.empty()) throw SpecError("concat needs at least one part");
  Tape& t = tape_of(parts[0]);
  const Field& first = parts[0].value();
  std::size_t channels = 0;
  for (const Var& p : parts) {
    if (p.value().extents() != first.extents())
      throw ShapeError("concat: extents differ between parts");
    channels += p.value().channels();
  }
  Field y(channels, first.extents(), first.spacing());
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const auto v = p.value().values();
    std::copy(v.begin(), v.end(), y.values().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += v.size();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return t.record(std::move(y), parts, [ps](Tape& tape, const Field& g) {
    std::size_t offset = 0;
    for (const Var& p : ps) {
      const std::size_t n = p.value().size();
      if (tape.needs_grad(p)) {
        Field gp = p.value().zeros_like();
        std::copy(g.values().begin() + static_cast<std::ptrdiff_t>(offset),
                  g.values().begin() + static_cast<std::ptrdiff_t>(offset + n),
                  gp.values().begin());
        tape.accumulate(p, gp);
      }
      offset += n;
    }
  });
}

Var upsample(Var x, const Extents& target, Alignment alignment) {
  Tape& t = tape_of(x);
  const Var in[] = {x};
  return t.record(percnn::upsample(x.value(), target, alignment), in,
                  [x, alignment](Tape& tape, const Field& g) {
                    tape.accumulate(x, upsample_adjoint(g, x.value(), alignment));
                  });
}

Var gather_strided(Var x, std::vector<std::size_t> strides, Extents coarse) {
  Tape& t = tape_of(x);
  const Var in[] = {x};
  return t.record(percnn::gather_strided(x.value(), strides, coarse), in,
                  [x, strides](Tape& tape, const Field& g) {
                    tape.accumulate(x, gather_strided_adjoint(g, x.value(), strides));
                  });
}

Var sum_squared_error(Var x, const Field& target) {
  Tape& t = tape_of(x);
  if (x.value().size() != target.size())
    throw ShapeError("sum_squared_error: size mismatch");
  const auto xv = x.value().values();
  const auto tv = target.values();
  double s = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double d = xv[i] - tv[i];
    s += d * d;
  }
  const Var in[] = {x};
  return t.record(Field::scalar(s), in, [x, target](Tape& tape, const Field& g) {
    Field gx = x.value();
    auto gv = gx.values();
    const auto tv = target.values();
    const double scale = 2.0 * g[0];
    for (std::size_t i = 0; i < gv.size(); ++i) gv[i] = scale * (gv[i] - tv[i]);
    tape.accumulate(x, gx);
  });
}

Var sum(Var x) {
  Tape& t = tape_of(x);
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  const Var in[] = {x};
  return t.record(Field::scalar(s), in, [x](Tape& tape, const Field& g) {
    Field gx = x.value().zeros_like();
    gx.fill(g[0]);
    tape.accumulate(x, gx);
  });
}

}  // namespace ad

}  // namespace percnn
