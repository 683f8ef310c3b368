#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "percnn/fd_solver.hpp"
#include "percnn/model.hpp"

namespace percnn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Field> m, v;
  std::uint64_t step = 0;
};

/// Bias-corrected Adam. Moments are created on the first call.
void adam_step(std::span<Field* const> params, std::span<const Field> grads, AdamState& state,
               double lr, const AdamConfig& cfg = {});

inline constexpr std::size_t kAllSnapshots = std::numeric_limits<std::size_t>::max();

/// Model steps between consecutive measurement snapshots (measurement dt over
/// model dt, which must be a whole number).
std::size_t steps_per_snapshot(const Measurement& m, double model_dt);

/// MSE of the prediction at the first `n_times` measurement times and coarse
/// nodes against the measurement, plus lambda * MSE(u0_hat - P(u~_0)).
double loss(const Trajectory& prediction, const Measurement& m, const Field& u0_hat,
            double lambda, std::size_t n_times = kAllSnapshots);

struct LossGrad {
  double loss = 0.0;
  double data = 0.0;
  double ic = 0.0;
  std::vector<Field> grads;  ///< ModelParams::tensors() order
  Field final_state;         ///< last snapshot of the supervised rollout
};

/// Loss of a full rollout from the first measurement snapshot, supervised on
/// its first `n_times` snapshots, and the gradient for every tensor.
LossGrad loss_and_grad(const ModelParams& params, const Measurement& m,
                       const ModelConfig& config, double lambda,
                       std::size_t n_times = kAllSnapshots);
/// Same quantity without a tape.
double loss_value(const ModelParams& params, const Measurement& m, const ModelConfig& config,
                  double lambda, std::size_t n_times = kAllSnapshots);

struct TrainConfig {
  double lr = 0.002;
  double lambda = 1.0;
  std::size_t max_epochs = 5000;
  std::size_t patience = 200;
  AdamConfig adam;
  std::uint64_t seed = 0;
  std::size_t validation_snapshots = 2;
  /// Multiplies lr after every epoch.
  double lr_decay = 1.0;
  /// Epochs per warm-up stage (0 = off). Stage s supervises only the first
  /// s+2 snapshots; validation and early stopping start with the full window.
  std::size_t window_warmup = 0;
  /// Writes epoch_NNNNNN.pcck/.pcts every N epochs into checkpoint_dir (0 = never).
  std::size_t checkpoint_every = 0;
  std::filesystem::path checkpoint_dir;  ///< also receives best.pcck; empty = none
  std::filesystem::path log_path;        ///< CSV log; empty = none
  /// Real per-epoch timings in the log; off keeps the log byte-reproducible.
  bool log_wall_clock = false;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  double seconds = 0.0;
  bool stopped_early = false;
  /// Epoch at which a rollout diverged and lr was halved (0 = never).
  std::size_t divergence_epoch = 0;
  ModelParams params;        ///< best-validation parameters
  ModelParams final_params;  ///< parameters after the last update
};

/// Everything needed to continue a run exactly where it stopped.
struct TrainState {
  std::size_t epoch = 0;  ///< last completed epoch
  double lr = 0.0;
  AdamState adam;
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::size_t divergence_epoch = 0;
  ModelParams params;  ///< parameters entering epoch + 1
  ModelParams best_params;
};

void save_train_state(const std::filesystem::path& path, const TrainState& state);
TrainState load_train_state(const std::filesystem::path& path, const ModelConfig& config);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Supervised snapshot count at `epoch` (1-based) for a window of `n_train`.
std::size_t supervised_window(std::size_t epoch, std::size_t n_train, std::size_t warmup);

/// Holds out the last `validation_snapshots` measurement times, trains on the
/// rest with full-rollout Adam and returns the parameters of the best
/// validation epoch. Starts from init_params(config, seed) unless `resume`
/// is given.
TrainReport train(const Measurement& m, const ModelConfig& config, const TrainConfig& tc,
                  const std::optional<TrainState>& resume = std::nullopt,
                  const EpochCallback& on_epoch = {});

/// CSV header plus one line per record.
void write_train_log(std::ostream& os, std::span<const EpochRecord> epochs, bool header = true);

}  // namespace percnn
