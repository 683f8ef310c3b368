#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "percnn/grid.hpp"

namespace percnn {

/// Fourth-order central stencils in cross-correlation order, without the
/// 1/dx (first derivative) or 1/dx^2 (second derivative) factor.
inline constexpr std::array<double, 5> kFirstDerivativeTaps = {
    1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0};
inline constexpr std::array<double, 5> kSecondDerivativeTaps = {
    -1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0};

enum class SystemKind : std::uint32_t { burgers2d = 1, grayscott2d = 2, grayscott3d = 3 };

const char* to_string(SystemKind kind);
SystemKind system_kind_from_string(const std::string& name);

struct PdeParams {
  double nu = 0.005;
  double mu_u = 0.2;
  double mu_v = 0.1;
  double kappa = 0.055;
  double feed = 0.025;
};

/// A reference PDE on a periodic box.
struct PdeSystem {
  SystemKind kind = SystemKind::burgers2d;
  PdeParams params;
  /// Physical bounds [lo, hi) per axis, in array axis order.
  std::vector<std::pair<double, double>> domain;

  std::size_t rank() const { return kind == SystemKind::grayscott3d ? 3 : 2; }
  void validate() const;
  /// Periodic grid spacing (hi - lo) / n per axis.
  std::vector<double> spacing(const Extents& extents) const;
};

/// Uniformly spaced sequence of same-shaped snapshots.
struct Trajectory {
  std::vector<Field> fields;
  double dt = 1.0;
  double t0 = 0.0;

  std::size_t size() const { return fields.size(); }
  const Field& operator[](std::size_t k) const { return fields[k]; }
  double time(std::size_t k) const { return t0 + dt * static_cast<double>(k); }
  /// `count` snapshots starting at `begin`.
  Trajectory slice(std::size_t begin, std::size_t count) const;
  /// Throws when empty, dt <= 0 or snapshot shapes differ.
  void validate() const;
};

/// Sparse observation of a fine trajectory: coarse node i of snapshot m is
/// fine node stride*i of fine snapshot temporal_stride*m.
struct Measurement {
  Trajectory data;
  std::vector<std::size_t> spatial_stride;
  std::size_t temporal_stride = 1;
  double noise_level = 0.0;
  Extents fine_extents;
};

/// Coarse extent per axis: (n-1)/s+1 when the last node is kept, n/s for a
/// periodic tile. Throws SpecError if neither divides.
Extents coarse_extents(const Extents& fine, const std::vector<std::size_t>& strides);

// Spatial operators on periodic grids (every axis needs extent >= 5).
Field laplacian(const Field& f);
Field first_derivative(const Field& f, std::size_t axis);

/// u_t = nu lap(u) - (u u_x + v u_y), same for v. Channel 0 is u (x-velocity).
Field burgers_rhs(const Field& state, double nu);
/// u_t = mu_u lap(u) - u v^2 + f (1 - u);  v_t = mu_v lap(v) + u v^2 - (f + kappa) v.
Field grayscott_rhs(const Field& state, double mu_u, double mu_v, double kappa,
                    double feed);
Field system_rhs(const PdeSystem& system, const Field& state);

using Rhs = std::function<Field(const Field&)>;

/// Classical four-stage Runge-Kutta. `step_index` only labels errors.
Field rk4_step(const Field& state, const Rhs& rhs, double dt, std::size_t step_index = 0);

Trajectory generate_trajectory(const PdeSystem& system, const Field& ic,
                               std::size_t n_steps, double dt);

Measurement subsample(const Trajectory& traj, const std::vector<std::size_t>& spatial_stride,
                      std::size_t temporal_stride);

/// Adds N(0, (level * sigma_c)^2) per entry, where sigma_c is channel c's
/// standard deviation over the whole measurement.
Measurement add_noise(const Measurement& m, double level, std::uint64_t seed);

/// Band-limited random Fourier field for 2D Burgers: integer wavenumbers with
/// |k_i| <= modes, Gaussian amplitudes damped by 1/(1+|k|^2), each channel
/// rescaled to peak magnitude `amplitude`.
Field burgers_initial_condition(const PdeSystem& system, const Extents& extents,
                                std::uint64_t seed, int modes = 3, double amplitude = 1.0);

/// Gray-Scott rest state (u, v) = (1, 0) with a central box of half-width 10%
/// of the domain set to (0.5, 0.25), plus Gaussian noise of std `noise`.
Field grayscott_initial_condition(const PdeSystem& system, const Extents& extents,
                                  std::uint64_t seed, double noise = 0.01);

}  // namespace percnn
