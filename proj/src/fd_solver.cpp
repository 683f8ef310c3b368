#include "percnn/fd_solver.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "percnn/rng.hpp"

namespace percnn {

namespace {

void require_periodic_extent(const Field& f, std::size_t axis) {
  if (f.extents()[axis] < 5)
    throw DimensionError("periodic stencil needs extent >= 5 on axis " +
                         std::to_string(axis) + ", got " +
                         std::to_string(f.extents()[axis]));
}

// out += scale * (taps applied along `axis` with periodic wrap).
void apply_axis_stencil(const Field& f, std::size_t axis, const std::array<double, 5>& taps,
                        double scale, Field& out) {
  require_periodic_extent(f, axis);
  const auto& e = f.extents();
  std::size_t outer = f.channels();
  for (std::size_t a = 0; a < axis; ++a) outer *= e[a];
  std::size_t inner = 1;
  for (std::size_t a = axis + 1; a < e.size(); ++a) inner *= e[a];
  const std::size_t n = e[axis];
  const auto in = f.values();
  auto o = out.values();
  // Both stencils sum to zero: off-centre taps act on differences from the
  // centre value, which keeps constants exactly in the kernel.
  for (std::size_t b = 0; b < outer; ++b) {
    const std::size_t base = b * n * inner;
    for (std::size_t i = 0; i < n; ++i) {
      double* dst = o.data() + base + i * inner;
      const double* mid = in.data() + base + i * inner;
      for (std::size_t k = 0; k < 5; ++k) {
        if (k == 2 || taps[k] == 0.0) continue;
        const std::size_t src_i = (i + n + k - 2) % n;
        const double* src = in.data() + base + src_i * inner;
        const double w = scale * taps[k];
        for (std::size_t j = 0; j < inner; ++j) dst[j] += w * (src[j] - mid[j]);
      }
    }
  }
}

void require_two_channels(const Field& state, const char* what) {
  if (state.channels() != 2)
    throw ShapeError(std::string(what) + " expects 2 channels (u, v), got " +
                     std::to_string(state.channels()));
}

}  // namespace

const char* to_string(SystemKind kind) {
  switch (kind) {
    case SystemKind::burgers2d: return "burgers2d";
    case SystemKind::grayscott2d: return "grayscott2d";
    case SystemKind::grayscott3d: return "grayscott3d";
  }
  return "?";
}

SystemKind system_kind_from_string(const std::string& name) {
  if (name == "burgers2d") return SystemKind::burgers2d;
  if (name == "grayscott2d") return SystemKind::grayscott2d;
  if (name == "grayscott3d") return SystemKind::grayscott3d;
  throw SpecError("unknown system '" + name + "'");
}

void PdeSystem::validate() const {
  if (domain.size() != rank())
    throw SpecError(std::string(to_string(kind)) + " needs " + std::to_string(rank()) +
                    " domain axes");
  for (const auto& [lo, hi] : domain)
    if (!(hi > lo)) throw SpecError("domain bounds must satisfy hi > lo");
  if (kind == SystemKind::burgers2d) {
    if (!(params.nu > 0.0)) throw SpecError("viscosity must be positive");
  } else {
    if (!(params.mu_u > 0.0) || !(params.mu_v > 0.0))
      throw SpecError("diffusion coefficients must be positive");
    if (params.kappa < 0.0 || params.feed < 0.0)
      throw SpecError("kill and feed rates must be non-negative");
  }
}

std::vector<double> PdeSystem::spacing(const Extents& extents) const {
  if (extents.size() != domain.size()) throw DimensionError("extents/domain rank mismatch");
  std::vector<double> dx(extents.size());
  for (std::size_t a = 0; a < extents.size(); ++a)
    dx[a] = (domain[a].second - domain[a].first) / static_cast<double>(extents[a]);
  return dx;
}

Trajectory Trajectory::slice(std::size_t begin, std::size_t count) const {
  if (begin + count > fields.size()) throw DimensionError("trajectory slice out of range");
  Trajectory t;
  t.dt = dt;
  t.t0 = time(begin);
  t.fields.assign(fields.begin() + static_cast<std::ptrdiff_t>(begin),
                  fields.begin() + static_cast<std::ptrdiff_t>(begin + count));
  return t;
}

void Trajectory::validate() const {
  if (fields.empty()) throw SpecError("trajectory has no snapshots");
  if (!(dt > 0.0)) throw SpecError("trajectory dt must be positive");
  for (const auto& f : fields)
    if (!f.same_shape(fields.front())) throw ShapeError("trajectory snapshots differ in shape");
}

Extents coarse_extents(const Extents& fine, const std::vector<std::size_t>& strides) {
  if (strides.size() != fine.size()) throw SpecError("one spatial stride per axis required");
  Extents out(fine.size());
  for (std::size_t a = 0; a < fine.size(); ++a) {
    const std::size_t s = strides[a], n = fine[a];
    if (s == 0) throw SpecError("strides must be >= 1");
    if ((n - 1) % s == 0) {
      out[a] = (n - 1) / s + 1;
    } else if (n % s == 0) {
      out[a] = n / s;
    } else {
      throw SpecError("stride " + std::to_string(s) + " does not divide extent " +
                      std::to_string(n));
    }
  }
  return out;
}

Field laplacian(const Field& f) {
  Field out = f.zeros_like();
  for (std::size_t a = 0; a < f.rank(); ++a) {
    const double dx = f.spacing()[a];
    apply_axis_stencil(f, a, kSecondDerivativeTaps, 1.0 / (dx * dx), out);
  }
  return out;
}

Field first_derivative(const Field& f, std::size_t axis) {
  if (axis >= f.rank()) throw DimensionError("derivative axis out of range");
  Field out = f.zeros_like();
  apply_axis_stencil(f, axis, kFirstDerivativeTaps, 1.0 / f.spacing()[axis], out);
  return out;
}

Field burgers_rhs(const Field& state, double nu) {
  require_two_channels(state, "burgers_rhs");
  if (state.rank() != 2) throw DimensionError("burgers_rhs expects a 2D grid");
  const Field lap = laplacian(state);
  const Field dx = first_derivative(state, 1);
  const Field dy = first_derivative(state, 0);
  Field out = state.zeros_like();
  const std::size_t n = state.cells();
  const auto u = state.channel(0);
  const auto v = state.channel(1);
  for (std::size_t c = 0; c < 2; ++c) {
    const auto l = lap.channel(c);
    const auto gx = dx.channel(c);
    const auto gy = dy.channel(c);
    auto o = out.channel(c);
    for (std::size_t i = 0; i < n; ++i) o[i] = nu * l[i] - (u[i] * gx[i] + v[i] * gy[i]);
  }
  return out;
}

Field grayscott_rhs(const Field& state, double mu_u, double mu_v, double kappa, double feed) {
  require_two_channels(state, "grayscott_rhs");
  const Field lap = laplacian(state);
  Field out = state.zeros_like();
  const std::size_t n = state.cells();
  const auto u = state.channel(0);
  const auto v = state.channel(1);
  const auto lu = lap.channel(0);
  const auto lv = lap.channel(1);
  auto ou = out.channel(0);
  auto ov = out.channel(1);
  for (std::size_t i = 0; i < n; ++i) {
    const double uvv = u[i] * v[i] * v[i];
    ou[i] = mu_u * lu[i] - uvv + feed * (1.0 - u[i]);
    ov[i] = mu_v * lv[i] + uvv - (feed + kappa) * v[i];
  }
  return out;
}

Field system_rhs(const PdeSystem& system, const Field& state) {
  const PdeParams& p = system.params;
  if (system.kind == SystemKind::burgers2d) return burgers_rhs(state, p.nu);
  return grayscott_rhs(state, p.mu_u, p.mu_v, p.kappa, p.feed);
}

Field rk4_step(const Field& state, const Rhs& rhs, double dt, std::size_t step_index) {
  if (!(dt > 0.0)) throw SpecError("rk4 dt must be positive");
  auto check = [step_index](const Field& f) {
    if (!f.all_finite())
      throw DivergenceError("non-finite value during RK4 step " + std::to_string(step_index),
                            step_index);
  };
  const Field k1 = rhs(state);
  check(k1);
  const Field k2 = rhs(axpy(state, k1, 0.5 * dt));
  check(k2);
  const Field k3 = rhs(axpy(state, k2, 0.5 * dt));
  check(k3);
  const Field k4 = rhs(axpy(state, k3, dt));
  check(k4);
  Field next = state;
  auto o = next.values();
  const auto a = k1.values(), b = k2.values(), c = k3.values(), d = k4.values();
  const double w = dt / 6.0;
  for (std::size_t i = 0; i < o.size(); ++i)
    o[i] += w * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]);
  check(next);
  return next;
}

Trajectory generate_trajectory(const PdeSystem& system, const Field& ic, std::size_t n_steps,
                               double dt) {
  system.validate();
  if (ic.rank() != system.rank())
    throw DimensionError(std::string(to_string(system.kind)) + " needs a rank-" +
                         std::to_string(system.rank()) + " initial condition");
  require_two_channels(ic, "generate_trajectory");
  if (!ic.all_finite()) throw SpecError("initial condition has non-finite values");
  Trajectory traj;
  traj.dt = dt;
  traj.t0 = 0.0;
  traj.fields.reserve(n_steps + 1);
  traj.fields.push_back(ic);
  const Rhs rhs = [&system](const Field& s) { return system_rhs(system, s); };
  for (std::size_t k = 0; k < n_steps; ++k) {
    try {
      traj.fields.push_back(rk4_step(traj.fields.back(), rhs, dt, k + 1));
    } catch (const DivergenceError&) {
      throw DivergenceError("trajectory diverged at step " + std::to_string(k + 1) +
                                "; last stable snapshot " + std::to_string(k),
                            k);
    }
  }
  return traj;
}

Measurement subsample(const Trajectory& traj, const std::vector<std::size_t>& spatial_stride,
                      std::size_t temporal_stride) {
  traj.validate();
  if (temporal_stride == 0) throw SpecError("temporal stride must be >= 1");
  if ((traj.size() - 1) % temporal_stride != 0)
    throw SpecError("temporal stride " + std::to_string(temporal_stride) +
                    " does not divide " + std::to_string(traj.size() - 1) + " intervals");
  const Extents& fine = traj[0].extents();
  const Extents coarse = coarse_extents(fine, spatial_stride);
  Measurement m;
  m.spatial_stride = spatial_stride;
  m.temporal_stride = temporal_stride;
  m.fine_extents = fine;
  m.data.dt = traj.dt * static_cast<double>(temporal_stride);
  m.data.t0 = traj.t0;
  for (std::size_t k = 0; k < traj.size(); k += temporal_stride)
    m.data.fields.push_back(gather_strided(traj[k], spatial_stride, coarse));
  return m;
}

Measurement add_noise(const Measurement& m, double level, std::uint64_t seed) {
  if (level < 0.0) throw SpecError("noise level must be non-negative");
  Measurement out = m;
  out.noise_level = level;
  if (level == 0.0 || m.data.fields.empty()) return out;
  const std::size_t channels = m.data[0].channels();
  std::vector<double> sigma(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& f : m.data.fields)
      for (double v : f.channel(c)) {
        sum += v;
        ++n;
      }
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const auto& f : m.data.fields)
      for (double v : f.channel(c)) ss += (v - mean) * (v - mean);
    sigma[c] = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
  }
  Rng rng(seed);
  for (auto& f : out.data.fields)
    for (std::size_t c = 0; c < channels; ++c) {
      const double s = level * sigma[c];
      for (double& v : f.channel(c)) v += s * rng.normal();
    }
  return out;
}

Field burgers_initial_condition(const PdeSystem& system, const Extents& extents,
                                std::uint64_t seed, int modes, double amplitude) {
  if (extents.size() != 2) throw DimensionError("Burgers initial condition is 2D");
  const std::vector<double> dx = system.spacing(extents);
  Field ic(2, extents, dx);
  Rng rng(seed);
  const double two_pi = 2.0 * std::numbers::pi;
  const std::size_t ny = extents[0], nx = extents[1];
  for (std::size_t c = 0; c < 2; ++c) {
    auto ch = ic.channel(c);
    for (int ky = -modes; ky <= modes; ++ky)
      for (int kx = -modes; kx <= modes; ++kx) {
        if (kx == 0 && ky == 0) continue;
        const double damp = 1.0 / (1.0 + kx * kx + ky * ky);
        const double a = damp * rng.normal();
        const double b = damp * rng.normal();
        for (std::size_t j = 0; j < ny; ++j)
          for (std::size_t i = 0; i < nx; ++i) {
            const double phase =
                two_pi * (kx * static_cast<double>(i) / static_cast<double>(nx) +
                          ky * static_cast<double>(j) / static_cast<double>(ny));
            ch[j * nx + i] += a * std::cos(phase) + b * std::sin(phase);
          }
      }
    double peak = 0.0;
    for (double v : ch) peak = std::max(peak, std::abs(v));
    if (peak > 0.0)
      for (double& v : ch) v *= amplitude / peak;
  }
  return ic;
}

Field grayscott_initial_condition(const PdeSystem& system, const Extents& extents,
                                  std::uint64_t seed, double noise) {
  const std::vector<double> dx = system.spacing(extents);
  Field ic(2, extents, dx);
  const std::size_t rank = extents.size();
  Rng rng(seed);
  auto u = ic.channel(0);
  auto v = ic.channel(1);
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t cell = 0; cell < ic.cells(); ++cell) {
    std::size_t rem = cell;
    bool inside = true;
    for (std::size_t a = rank; a-- > 0;) {
      idx[a] = rem % extents[a];
      rem /= extents[a];
      const auto [lo, hi] = system.domain[a];
      const double x = lo + dx[a] * static_cast<double>(idx[a]);
      const double centre = 0.5 * (lo + hi);
      if (std::abs(x - centre) >= 0.1 * (hi - lo)) inside = false;
    }
    u[cell] = inside ? 0.5 : 1.0;
    v[cell] = inside ? 0.25 : 0.0;
  }
  if (noise > 0.0) {
    for (double& x : u) x += noise * rng.normal();
    for (double& x : v) x += noise * rng.normal();
  }
  return ic;
}

}  // namespace percnn
