#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "percnn/fd_solver.hpp"
#include "percnn/grid.hpp"
#include "percnn/tape.hpp"

namespace percnn {

enum class Highway : std::uint32_t { none = 0, diffusion = 1 };

/// What a parallel-layer feature channel computes.
enum class FilterRole : std::uint32_t {
  free_affine = 0,
  fixed_dx = 1,
  fixed_dy = 2,
  fixed_dz = 3,
  fixed_laplacian = 4,
};

const char* to_string(FilterRole role);
FilterRole filter_role_from_string(const std::string& name);

/// A parallel-layer feature channel pinned to a finite-difference stencil of
/// one state channel. Its weights and bias never train.
struct FrozenFilter {
  std::size_t layer = 0;
  std::size_t channel = 0;
  FilterRole role = FilterRole::fixed_dx;
  std::size_t state_channel = 0;

  bool operator==(const FrozenFilter&) const = default;
};

struct ModelConfig {
  std::size_t state_channels = 2;
  Extents grid;                 ///< full-resolution extents
  std::vector<double> spacing;  ///< full-resolution grid spacing
  Extents coarse_grid;          ///< extents of the measurement fed to the ISG
  std::size_t n_parallel = 4;
  std::size_t filter_size = 5;
  std::size_t n_channels = 8;
  std::size_t isg_channels = 8;
  std::size_t isg_filter_size = 5;
  double dt = 2.5e-4;
  PadMode bc = PadMode::periodic;
  std::vector<double> bc_values;
  Highway highway = Highway::diffusion;
  std::size_t steps_train = 0;
  std::size_t steps_extrapolate = 0;
  /// Free parallel filters keep only their centre tap (1x1 behaviour inside a
  /// larger kernel); needed when frozen stencils force filter_size > 1.
  bool pointwise_free = false;
  std::vector<FrozenFilter> frozen;

  std::size_t rank() const { return grid.size(); }
  PadSpec pad_spec(std::size_t width) const;
  /// Throws SpecError/ShapeError on an inconsistent configuration.
  void validate() const;
  /// Role of feature channel `channel` of parallel layer `layer`.
  FilterRole role(std::size_t layer, std::size_t channel) const;

  bool operator==(const ModelConfig&) const = default;
};

/// Trainable tensors. Filter banks follow the grid.hpp convention
/// (out*in channels, k^rank extents); biases are {out}-channel fields.
struct ModelParams {
  Field isg_w1, isg_b1;  ///< state -> isg_channels, isg_filter_size
  Field isg_w2, isg_b2;  ///< isg_channels -> isg_channels, isg_filter_size
  Field isg_w3, isg_b3;  ///< [upsampled, hidden] -> state, 1x1
  std::vector<Field> layer_w, layer_b;  ///< W_i, b_i: state -> n_channels
  Field agg_w, agg_b;                   ///< W^(1), b^(1): n_channels -> state, 1x1
  Field diff_coef;                      ///< one per state channel; empty without highway

  /// Declaration order; this is the checkpoint order too.
  std::vector<Field*> tensors();
  std::vector<const Field*> tensors() const;
  std::vector<std::string> names() const;
};

/// Correctly shaped parameters with zero free weights and installed frozen
/// stencils.
ModelParams zero_params(const ModelConfig& config);
/// Uniform(+-0.1/sqrt(fan_in)) weights and biases, ISG output initialised to
/// pass the upsampled measurement through, diffusion coefficients at 0.05.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);
/// 1 where an entry trains, 0 where it is frozen; same order as tensors().
std::vector<Field> trainable_masks(const ModelConfig& config);
/// Throws ShapeError naming the first tensor whose shape disagrees.
void validate_params(const ModelParams& params, const ModelConfig& config);

/// Filter bank of one frozen stencil (n_in = state channels).
Field stencil_filter(FilterRole role, std::size_t state_channel, const ModelConfig& config);

/// ModelParams recorded on a tape.
struct BoundParams {
  Var isg_w1, isg_b1, isg_w2, isg_b2, isg_w3, isg_b3;
  std::vector<Var> layer_w, layer_b;
  Var agg_w, agg_b;
  Var diff_coef;
  std::vector<Var> all;  ///< tensors() order
};

/// `trainable` selects Tape::parameter versus Tape::constant leaves.
BoundParams bind_params(Tape& tape, const ModelParams& params, bool trainable);

// Differentiable building blocks.
Var isg_forward(const BoundParams& p, const ModelConfig& config, Var coarse);
/// [prod_i (U * W_i + b_i)] * W^(1) + b^(1)
Var product_term(const BoundParams& p, const ModelConfig& config, Var state);
/// diff_coef[c] * lap(U)[c] with the frozen fourth-order Laplacian.
Var highway_diffusion(const BoundParams& p, const ModelConfig& config, Var state);
Var pi_block_residual(const BoundParams& p, const ModelConfig& config, Var state);
/// Snapshots U_0 .. U_n with U_{k+1} = U_k + dt * residual(U_k).
std::vector<Var> rollout(const BoundParams& p, const ModelConfig& config, Var coarse_ic,
                         std::size_t n_steps);

// Gradient-free evaluation.
Field isg_forward(const Field& coarse, const ModelParams& params, const ModelConfig& config);
Field product_term(const Field& state, const ModelParams& params, const ModelConfig& config);
Field highway_diffusion(const Field& state, const Field& diff_coef, const ModelConfig& config);
Field pi_block_residual(const Field& state, const ModelParams& params,
                        const ModelConfig& config);
Trajectory rollout(const Field& coarse_ic, const ModelParams& params, const ModelConfig& config,
                   std::size_t n_steps);
/// Continues from a full-resolution state; the result includes `state`.
Trajectory rollout_from(const Field& state, const ModelParams& params,
                        const ModelConfig& config, std::size_t n_steps,
                        std::size_t first_step_index = 0);

/// Magnitude beyond which a rollout is declared divergent.
inline constexpr double kDivergenceBound = 1e6;
/// Throws DivergenceError(step) on non-finite or runaway values.
void check_state(const Field& state, std::size_t step);

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// "PCCK" layout: magic, version, ModelConfig, tensor count, then every
/// tensor as (channels u32, rank u32, extents u64[rank], f64 values).
void save_checkpoint(std::ostream& os, const ModelConfig& config, const ModelParams& params);
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ModelParams& params);
struct Checkpoint {
  ModelConfig config;
  ModelParams params;
};
Checkpoint load_checkpoint(std::istream& is);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace percnn
