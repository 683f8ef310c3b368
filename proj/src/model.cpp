#include "percnn/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "percnn/binary_io.hpp"
#include "percnn/rng.hpp"

namespace percnn {

namespace {

std::size_t ipow(std::size_t base, std::size_t exp) {
  std::size_t r = 1;
  for (std::size_t i = 0; i < exp; ++i) r *= base;
  return r;
}

// Flat tap index of a hypercubic kernel from per-axis indices.
std::size_t tap_index(const std::vector<std::size_t>& idx, std::size_t k) {
  std::size_t off = 0;
  for (std::size_t i : idx) off = off * k + i;
  return off;
}

std::size_t centre_tap(std::size_t k, std::size_t rank) {
  return tap_index(std::vector<std::size_t>(rank, (k - 1) / 2), k);
}

std::string shape_string(const Field& f) {
  std::ostringstream os;
  os << f.channels() << "x[";
  for (std::size_t a = 0; a < f.rank(); ++a) os << (a ? "," : "") << f.extents()[a];
  os << "]";
  return os.str();
}

void fill_uniform(Field& f, Rng& rng, double bound) {
  for (double& v : f.values()) v = rng.uniform(-bound, bound);
}

std::vector<double> laplacian_axis_scale(const ModelConfig& config) {
  std::vector<double> s(config.rank());
  for (std::size_t a = 0; a < config.rank(); ++a)
    s[a] = 1.0 / (config.spacing[a] * config.spacing[a]);
  return s;
}

Var product_term_padded(const BoundParams& p, Var padded) {
  std::vector<Var> factors;
  factors.reserve(p.layer_w.size());
  for (std::size_t i = 0; i < p.layer_w.size(); ++i)
    factors.push_back(ad::conv_valid(padded, p.layer_w[i], p.layer_b[i]));
  return ad::conv_valid(ad::product(factors), p.agg_w, p.agg_b);
}

Var highway_padded(const BoundParams& p, const ModelConfig& config, Var padded2) {
  const std::vector<double> taps(kSecondDerivativeTaps.begin(), kSecondDerivativeTaps.end());
  return ad::channel_scale(ad::cross_stencil(padded2, taps, laplacian_axis_scale(config)),
                           p.diff_coef);
}

Var pad_or_self(Var x, const ModelConfig& config, std::size_t width) {
  return width == 0 ? x : ad::pad(x, config.pad_spec(width));
}

}  // namespace

const char* to_string(FilterRole role) {
  switch (role) {
    case FilterRole::free_affine: return "free";
    case FilterRole::fixed_dx: return "dx";
    case FilterRole::fixed_dy: return "dy";
    case FilterRole::fixed_dz: return "dz";
    case FilterRole::fixed_laplacian: return "lap";
  }
  return "?";
}

FilterRole filter_role_from_string(const std::string& name) {
  if (name == "free") return FilterRole::free_affine;
  if (name == "dx") return FilterRole::fixed_dx;
  if (name == "dy") return FilterRole::fixed_dy;
  if (name == "dz") return FilterRole::fixed_dz;
  if (name == "lap") return FilterRole::fixed_laplacian;
  throw SpecError("unknown filter role '" + name + "'");
}

// ---------------------------------------------------------------------------
// ModelConfig

PadSpec ModelConfig::pad_spec(std::size_t width) const { return {bc, width, bc_values}; }

void ModelConfig::validate() const {
  if (state_channels == 0) throw SpecError("state_channels must be >= 1");
  if (grid.empty() || grid.size() > 3) throw SpecError("grid rank must be 1, 2 or 3");
  if (spacing.size() != grid.size()) throw SpecError("one grid spacing per axis required");
  if (coarse_grid.size() != grid.size()) throw SpecError("coarse grid rank differs from grid");
  for (std::size_t a = 0; a < grid.size(); ++a) {
    if (coarse_grid[a] == 0 || coarse_grid[a] > grid[a])
      throw SpecError("coarse grid must not exceed the full grid");
    if (!(spacing[a] > 0.0)) throw SpecError("grid spacing must be positive");
  }
  if (n_parallel < 2) throw SpecError("n_parallel must be >= 2 to form a product");
  auto odd_small = [](std::size_t k) { return k == 1 || k == 3 || k == 5; };
  if (!odd_small(filter_size)) throw SpecError("filter_size must be 1, 3 or 5");
  if (!odd_small(isg_filter_size)) throw SpecError("isg_filter_size must be 1, 3 or 5");
  if (n_channels == 0 || isg_channels == 0) throw SpecError("channel counts must be >= 1");
  if (!(dt > 0.0)) throw SpecError("dt must be positive");
  pad_spec(1).validate(grid.size());
  const std::size_t needed = std::max<std::size_t>(
      {highway == Highway::diffusion ? 5u : 1u, filter_size, isg_filter_size});
  for (auto e : grid)
    if (e < needed)
      throw DimensionError("grid extent " + std::to_string(e) + " is smaller than " +
                           std::to_string(needed));
  for (std::size_t i = 0; i < frozen.size(); ++i) {
    const FrozenFilter& f = frozen[i];
    if (f.layer >= n_parallel || f.channel >= n_channels)
      throw SpecError("frozen filter refers to a missing layer/channel");
    if (f.state_channel >= state_channels)
      throw SpecError("frozen filter refers to a missing state channel");
    if (f.role == FilterRole::free_affine) throw SpecError("frozen filter needs a stencil role");
    if (filter_size != 5) throw SpecError("frozen stencils require filter_size 5");
    if (f.role == FilterRole::fixed_dy && rank() < 2)
      throw SpecError("dy stencil needs a rank >= 2 grid");
    if (f.role == FilterRole::fixed_dz && rank() < 3)
      throw SpecError("dz stencil needs a rank 3 grid");
    for (std::size_t j = 0; j < i; ++j)
      if (frozen[j].layer == f.layer && frozen[j].channel == f.channel)
        throw SpecError("feature channel frozen twice");
  }
}

FilterRole ModelConfig::role(std::size_t layer, std::size_t channel) const {
  for (const auto& f : frozen)
    if (f.layer == layer && f.channel == channel) return f.role;
  return FilterRole::free_affine;
}

// ---------------------------------------------------------------------------
// ModelParams

std::vector<Field*> ModelParams::tensors() {
  std::vector<Field*> t = {&isg_w1, &isg_b1, &isg_w2, &isg_b2, &isg_w3, &isg_b3};
  for (std::size_t i = 0; i < layer_w.size(); ++i) {
    t.push_back(&layer_w[i]);
    t.push_back(&layer_b[i]);
  }
  t.push_back(&agg_w);
  t.push_back(&agg_b);
  if (!diff_coef.empty()) t.push_back(&diff_coef);
  return t;
}

std::vector<const Field*> ModelParams::tensors() const {
  auto t = const_cast<ModelParams*>(this)->tensors();
  return {t.begin(), t.end()};
}

std::vector<std::string> ModelParams::names() const {
  std::vector<std::string> n = {"isg_w1", "isg_b1", "isg_w2", "isg_b2", "isg_w3", "isg_b3"};
  for (std::size_t i = 0; i < layer_w.size(); ++i) {
    n.push_back("layer" + std::to_string(i) + "_w");
    n.push_back("layer" + std::to_string(i) + "_b");
  }
  n.push_back("agg_w");
  n.push_back("agg_b");
  if (!diff_coef.empty()) n.push_back("diff_coef");
  return n;
}

Field stencil_filter(FilterRole role, std::size_t state_channel, const ModelConfig& config) {
  const std::size_t k = config.filter_size;
  const std::size_t rank = config.rank();
  const std::size_t s = config.state_channels;
  Field f = make_filters(1, s, k, rank);
  auto w = f.channel(state_channel);
  const std::size_t c = (k - 1) / 2;
  auto put_axis = [&](std::size_t axis, const std::array<double, 5>& taps, double scale) {
    for (std::size_t t = 0; t < 5; ++t) {
      std::vector<std::size_t> idx(rank, c);
      idx[axis] = c + t - 2;
      w[tap_index(idx, k)] += scale * taps[t];
    }
  };
  switch (role) {
    case FilterRole::fixed_dx:
      put_axis(rank - 1, kFirstDerivativeTaps, 1.0 / config.spacing[rank - 1]);
      break;
    case FilterRole::fixed_dy:
      put_axis(rank - 2, kFirstDerivativeTaps, 1.0 / config.spacing[rank - 2]);
      break;
    case FilterRole::fixed_dz:
      put_axis(rank - 3, kFirstDerivativeTaps, 1.0 / config.spacing[rank - 3]);
      break;
    case FilterRole::fixed_laplacian:
      for (std::size_t a = 0; a < rank; ++a)
        put_axis(a, kSecondDerivativeTaps, 1.0 / (config.spacing[a] * config.spacing[a]));
      break;
    case FilterRole::free_affine:
      throw SpecError("free_affine has no stencil");
  }
  return f;
}

namespace {

void install_frozen(ModelParams& p, const ModelConfig& config) {
  const std::size_t s = config.state_channels;
  for (const auto& fz : config.frozen) {
    const Field st = stencil_filter(fz.role, fz.state_channel, config);
    auto dst = p.layer_w[fz.layer].values().subspan(fz.channel * s * st.cells(), st.size());
    std::copy(st.values().begin(), st.values().end(), dst.begin());
    p.layer_b[fz.layer][fz.channel] = 0.0;
  }
}

}  // namespace

ModelParams zero_params(const ModelConfig& config) {
  config.validate();
  const std::size_t r = config.rank();
  const std::size_t s = config.state_channels;
  const std::size_t h = config.isg_channels;
  ModelParams p;
  p.isg_w1 = make_filters(h, s, config.isg_filter_size, r);
  p.isg_b1 = make_biases(h);
  p.isg_w2 = make_filters(h, h, config.isg_filter_size, r);
  p.isg_b2 = make_biases(h);
  p.isg_w3 = make_filters(s, s + h, 1, r);
  p.isg_b3 = make_biases(s);
  for (std::size_t i = 0; i < config.n_parallel; ++i) {
    p.layer_w.push_back(make_filters(config.n_channels, s, config.filter_size, r));
    p.layer_b.push_back(make_biases(config.n_channels));
  }
  p.agg_w = make_filters(s, config.n_channels, 1, r);
  p.agg_b = make_biases(s);
  if (config.highway == Highway::diffusion) p.diff_coef = Field(s, {1});
  install_frozen(p, config);
  return p;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p = zero_params(config);
  const std::size_t r = config.rank();
  const std::size_t s = config.state_channels;
  const std::size_t h = config.isg_channels;
  Rng rng(seed);
  auto bound = [](std::size_t fan_in) { return 0.1 / std::sqrt(static_cast<double>(fan_in)); };
  const std::size_t isg_taps = ipow(config.isg_filter_size, r);
  fill_uniform(p.isg_w1, rng, bound(s * isg_taps));
  fill_uniform(p.isg_b1, rng, bound(s * isg_taps));
  fill_uniform(p.isg_w2, rng, bound(h * isg_taps));
  fill_uniform(p.isg_b2, rng, bound(h * isg_taps));
  fill_uniform(p.isg_w3, rng, bound(s + h));
  // Skip path starts as the identity so U_0 begins at the upsampled snapshot.
  for (std::size_t o = 0; o < s; ++o)
    for (std::size_t i = 0; i < s; ++i) p.isg_w3[o * (s + h) + i] = (o == i) ? 1.0 : 0.0;
  p.isg_b3.fill(0.0);
  const std::size_t taps = ipow(config.filter_size, r);
  const std::size_t fan_in = s * (config.pointwise_free ? 1 : taps);
  for (std::size_t i = 0; i < config.n_parallel; ++i) {
    fill_uniform(p.layer_w[i], rng, bound(fan_in));
    fill_uniform(p.layer_b[i], rng, bound(fan_in));
  }
  fill_uniform(p.agg_w, rng, bound(config.n_channels));
  fill_uniform(p.agg_b, rng, bound(config.n_channels));
  if (!p.diff_coef.empty()) p.diff_coef.fill(0.05);
  // Masked entries keep their zero/stencil values.
  const auto masks = trainable_masks(config);
  const ModelParams zero = zero_params(config);
  auto dst = p.tensors();
  auto base = zero.tensors();
  for (std::size_t t = 0; t < dst.size(); ++t) {
    auto v = dst[t]->values();
    for (std::size_t j = 0; j < v.size(); ++j)
      if (masks[t][j] == 0.0) v[j] = (*base[t])[j];
  }
  return p;
}

std::vector<Field> trainable_masks(const ModelConfig& config) {
  const ModelParams shapes = zero_params(config);
  std::vector<Field> masks;
  for (const Field* t : shapes.tensors()) masks.push_back(Field::filled(t->channels(), t->extents(), 1.0));
  const std::size_t s = config.state_channels;
  const std::size_t taps = ipow(config.filter_size, config.rank());
  const std::size_t centre = centre_tap(config.filter_size, config.rank());
  for (std::size_t i = 0; i < config.n_parallel; ++i) {
    Field& w = masks[6 + 2 * i];
    Field& b = masks[7 + 2 * i];
    for (std::size_t j = 0; j < config.n_channels; ++j) {
      const bool frozen = config.role(i, j) != FilterRole::free_affine;
      for (std::size_t in = 0; in < s; ++in)
        for (std::size_t t = 0; t < taps; ++t) {
          const bool keep = !frozen && (!config.pointwise_free || t == centre);
          w[(j * s + in) * taps + t] = keep ? 1.0 : 0.0;
        }
      if (frozen) b[j] = 0.0;
    }
  }
  return masks;
}

void validate_params(const ModelParams& params, const ModelConfig& config) {
  const ModelParams expected = zero_params(config);
  const auto want = expected.tensors();
  const auto got = params.tensors();
  const auto names = expected.names();
  if (params.layer_w.size() != expected.layer_w.size() ||
      params.layer_b.size() != expected.layer_b.size())
    throw ShapeError("parameter set has " + std::to_string(params.layer_w.size()) +
                     " parallel layers, config expects " +
                     std::to_string(expected.layer_w.size()));
  if (got.size() != want.size())
    throw ShapeError("parameter set has " + std::to_string(got.size()) +
                     " tensors, config expects " + std::to_string(want.size()));
  for (std::size_t t = 0; t < want.size(); ++t)
    if (!got[t]->same_shape(*want[t]))
      throw ShapeError("tensor " + names[t] + ": have " + shape_string(*got[t]) +
                       ", config expects " + shape_string(*want[t]));
}

BoundParams bind_params(Tape& tape, const ModelParams& params, bool trainable) {
  auto leaf = [&](const Field& f) {
    Var v = trainable ? tape.parameter(f) : tape.constant(f);
    return v;
  };
  BoundParams b;
  b.isg_w1 = leaf(params.isg_w1);
  b.isg_b1 = leaf(params.isg_b1);
  b.isg_w2 = leaf(params.isg_w2);
  b.isg_b2 = leaf(params.isg_b2);
  b.isg_w3 = leaf(params.isg_w3);
  b.isg_b3 = leaf(params.isg_b3);
  b.all = {b.isg_w1, b.isg_b1, b.isg_w2, b.isg_b2, b.isg_w3, b.isg_b3};
  for (std::size_t i = 0; i < params.layer_w.size(); ++i) {
    b.layer_w.push_back(leaf(params.layer_w[i]));
    b.layer_b.push_back(leaf(params.layer_b[i]));
    b.all.push_back(b.layer_w.back());
    b.all.push_back(b.layer_b.back());
  }
  b.agg_w = leaf(params.agg_w);
  b.agg_b = leaf(params.agg_b);
  b.all.push_back(b.agg_w);
  b.all.push_back(b.agg_b);
  if (!params.diff_coef.empty()) {
    b.diff_coef = leaf(params.diff_coef);
    b.all.push_back(b.diff_coef);
  }
  return b;
}

// ---------------------------------------------------------------------------
// Forward model

Var isg_forward(const BoundParams& p, const ModelConfig& config, Var coarse) {
  if (coarse.value().channels() != config.state_channels ||
      coarse.value().extents() != config.coarse_grid)
    throw ShapeError("ISG input does not match the configured coarse grid");
  const Alignment al = alignment_for(config.coarse_grid, config.grid);
  const Var up = ad::upsample(coarse, config.grid, al);
  const PadSpec pad = config.pad_spec(1);
  const Var h1 = ad::tanh(ad::conv(up, p.isg_w1, p.isg_b1, pad));
  const Var h2 = ad::tanh(ad::conv(h1, p.isg_w2, p.isg_b2, pad));
  const Var parts[] = {up, h2};
  return ad::conv(ad::concat_channels(parts), p.isg_w3, p.isg_b3, pad);
}

Var product_term(const BoundParams& p, const ModelConfig& config, Var state) {
  return product_term_padded(p, pad_or_self(state, config, (config.filter_size - 1) / 2));
}

Var highway_diffusion(const BoundParams& p, const ModelConfig& config, Var state) {
  if (!p.diff_coef.valid()) throw SpecError("highway diffusion is disabled in this model");
  for (auto e : state.value().extents())
    if (e < 5) throw DimensionError("highway Laplacian needs every extent >= 5");
  return highway_padded(p, config, pad_or_self(state, config, 2));
}

Var pi_block_residual(const BoundParams& p, const ModelConfig& config, Var state) {
  if (state.value().channels() != config.state_channels || state.value().extents() != config.grid)
    throw ShapeError("state does not match the configured grid");
  if (p.layer_w.size() != config.n_parallel)
    throw ShapeError("parameter set does not match n_parallel");
  const std::size_t width = (config.filter_size - 1) / 2;
  const Var padded = pad_or_self(state, config, width);
  Var out = product_term_padded(p, padded);
  if (config.highway == Highway::diffusion) {
    const Var padded2 = width == 2 ? padded : pad_or_self(state, config, 2);
    out = ad::add(out, highway_padded(p, config, padded2));
  }
  return out;
}

void check_state(const Field& state, std::size_t step) {
  for (double v : state.values())
    if (!std::isfinite(v) || std::abs(v) > kDivergenceBound)
      throw DivergenceError("rollout diverged at step " + std::to_string(step), step);
}

std::vector<Var> rollout(const BoundParams& p, const ModelConfig& config, Var coarse_ic,
                         std::size_t n_steps) {
  std::vector<Var> states;
  states.reserve(n_steps + 1);
  states.push_back(isg_forward(p, config, coarse_ic));
  check_state(states.back().value(), 0);
  for (std::size_t k = 0; k < n_steps; ++k) {
    const Var residual = pi_block_residual(p, config, states.back());
    states.push_back(ad::axpy(states.back(), residual, config.dt));
    check_state(states.back().value(), k + 1);
  }
  return states;
}

Field isg_forward(const Field& coarse, const ModelParams& params, const ModelConfig& config) {
  Tape tape;
  const BoundParams b = bind_params(tape, params, false);
  return isg_forward(b, config, tape.constant(coarse)).value();
}

Field product_term(const Field& state, const ModelParams& params, const ModelConfig& config) {
  Tape tape;
  const BoundParams b = bind_params(tape, params, false);
  return product_term(b, config, tape.constant(state)).value();
}

Field highway_diffusion(const Field& state, const Field& diff_coef, const ModelConfig& config) {
  Tape tape;
  BoundParams b;
  b.diff_coef = tape.constant(diff_coef);
  return highway_diffusion(b, config, tape.constant(state)).value();
}

Field pi_block_residual(const Field& state, const ModelParams& params,
                        const ModelConfig& config) {
  Tape tape;
  const BoundParams b = bind_params(tape, params, false);
  return pi_block_residual(b, config, tape.constant(state)).value();
}

Trajectory rollout_from(const Field& state, const ModelParams& params, const ModelConfig& config,
                        std::size_t n_steps, std::size_t first_step_index) {
  Trajectory traj;
  traj.dt = config.dt;
  traj.fields.reserve(n_steps + 1);
  traj.fields.push_back(state);
  for (std::size_t k = 0; k < n_steps; ++k) {
    Tape tape;
    const BoundParams b = bind_params(tape, params, false);
    const Var x = tape.constant(traj.fields.back());
    const Var next = ad::axpy(x, pi_block_residual(b, config, x), config.dt);
    check_state(next.value(), first_step_index + k + 1);
    traj.fields.push_back(next.value());
  }
  return traj;
}

Trajectory rollout(const Field& coarse_ic, const ModelParams& params, const ModelConfig& config,
                   std::size_t n_steps) {
  Field u0 = isg_forward(coarse_ic, params, config);
  check_state(u0, 0);
  u0.set_spacing(config.spacing);
  return rollout_from(u0, params, config, n_steps);
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(std::ostream& os, const ModelConfig& config, const ModelParams& params) {
  config.validate();
  validate_params(params, config);
  BinaryWriter w(os);
  w.magic("PCCK");
  w.u32(kCheckpointVersion);
  const std::size_t rank = config.rank();
  w.u32(static_cast<std::uint32_t>(config.state_channels));
  w.u32(static_cast<std::uint32_t>(rank));
  for (auto e : config.grid) w.u64(e);
  for (double dx : config.spacing) w.f64(dx);
  for (auto e : config.coarse_grid) w.u64(e);
  w.u32(static_cast<std::uint32_t>(config.n_parallel));
  w.u32(static_cast<std::uint32_t>(config.filter_size));
  w.u32(static_cast<std::uint32_t>(config.n_channels));
  w.u32(static_cast<std::uint32_t>(config.isg_channels));
  w.u32(static_cast<std::uint32_t>(config.isg_filter_size));
  w.f64(config.dt);
  w.u32(static_cast<std::uint32_t>(config.bc));
  w.u32(static_cast<std::uint32_t>(config.bc_values.size()));
  w.f64s(config.bc_values);
  w.u32(static_cast<std::uint32_t>(config.highway));
  w.u64(config.steps_train);
  w.u64(config.steps_extrapolate);
  w.u32(config.pointwise_free ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(config.frozen.size()));
  for (const auto& f : config.frozen) {
    w.u32(static_cast<std::uint32_t>(f.layer));
    w.u32(static_cast<std::uint32_t>(f.channel));
    w.u32(static_cast<std::uint32_t>(f.role));
    w.u32(static_cast<std::uint32_t>(f.state_channel));
  }
  const auto tensors = params.tensors();
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const Field* t : tensors) {
    w.u32(static_cast<std::uint32_t>(t->channels()));
    w.u32(static_cast<std::uint32_t>(t->rank()));
    for (auto e : t->extents()) w.u64(e);
    w.raw(t->values().data(), t->size() * sizeof(double));
  }
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ModelParams& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  save_checkpoint(os, config, params);
}

Checkpoint load_checkpoint(std::istream& is) {
  BinaryReader r(is);
  r.expect_magic("PCCK");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ModelConfig& c = ck.config;
  c.state_channels = r.u32();
  const std::uint32_t rank = r.u32();
  if (rank < 1 || rank > 3) throw IoError("corrupt checkpoint header");
  c.grid.resize(rank);
  for (auto& e : c.grid) e = r.u64();
  c.spacing.resize(rank);
  for (auto& dx : c.spacing) dx = r.f64();
  c.coarse_grid.resize(rank);
  for (auto& e : c.coarse_grid) e = r.u64();
  c.n_parallel = r.u32();
  c.filter_size = r.u32();
  c.n_channels = r.u32();
  c.isg_channels = r.u32();
  c.isg_filter_size = r.u32();
  c.dt = r.f64();
  const std::uint32_t bc = r.u32();
  if (bc > 2) throw IoError("corrupt checkpoint: bad boundary mode");
  c.bc = static_cast<PadMode>(bc);
  r.f64s(c.bc_values, r.u32());
  const std::uint32_t highway = r.u32();
  if (highway > 1) throw IoError("corrupt checkpoint: bad highway flag");
  c.highway = static_cast<Highway>(highway);
  c.steps_train = r.u64();
  c.steps_extrapolate = r.u64();
  c.pointwise_free = r.u32() != 0;
  const std::uint32_t n_frozen = r.u32();
  for (std::uint32_t i = 0; i < n_frozen; ++i) {
    FrozenFilter f;
    f.layer = r.u32();
    f.channel = r.u32();
    const std::uint32_t role = r.u32();
    if (role > 4) throw IoError("corrupt checkpoint: bad filter role");
    f.role = static_cast<FilterRole>(role);
    f.state_channel = r.u32();
    c.frozen.push_back(f);
  }
  try {
    c.validate();
  } catch (const Error& e) {
    throw IoError(std::string("checkpoint holds an invalid model config: ") + e.what());
  }
  ck.params = zero_params(c);
  auto tensors = ck.params.tensors();
  const auto names = ck.params.names();
  const std::uint32_t count = r.u32();
  if (count != tensors.size())
    throw ShapeError("checkpoint stores " + std::to_string(count) + " tensors, config expects " +
                     std::to_string(tensors.size()));
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    const std::uint32_t ch = r.u32();
    const std::uint32_t tr = r.u32();
    if (tr < 1 || tr > 3) throw IoError("corrupt checkpoint tensor header");
    Extents ext(tr);
    for (auto& e : ext) e = r.u64();
    Field stored(ch, ext);
    if (!stored.same_shape(*tensors[t]))
      throw ShapeError("tensor " + names[t] + ": checkpoint has " + shape_string(stored) +
                       ", config expects " + shape_string(*tensors[t]));
    r.raw(tensors[t]->values().data(), tensors[t]->size() * sizeof(double));
  }
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return load_checkpoint(is);
}

}  // namespace percnn
