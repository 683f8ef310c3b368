#include "percnn/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "percnn/binary_io.hpp"

namespace percnn {

namespace {

double sse(const Field& a, const Field& b) {
  const auto av = a.values();
  const auto bv = b.values();
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    s += d * d;
  }
  return s;
}

std::size_t resolve_times(const Measurement& m, std::size_t n_times) {
  if (m.data.size() == 0) throw SpecError("measurement holds no snapshots");
  if (n_times == kAllSnapshots) return m.data.size();
  if (n_times == 0 || n_times > m.data.size())
    throw SpecError("requested " + std::to_string(n_times) + " measurement times, have " +
                    std::to_string(m.data.size()));
  return n_times;
}

Field upsampled_ic(const Measurement& m, const Extents& fine) {
  const Field& u0 = m.data[0];
  return upsample(u0, fine, alignment_for(u0.extents(), fine));
}

void check_measurement(const Measurement& m, const ModelConfig& config) {
  m.data.validate();
  if (m.data[0].channels() != config.state_channels)
    throw ShapeError("measurement has " + std::to_string(m.data[0].channels()) +
                     " channels, model expects " + std::to_string(config.state_channels));
  if (m.data[0].extents() != config.coarse_grid)
    throw ShapeError("measurement grid does not match the model's coarse grid");
  if (m.spatial_stride.size() != config.rank())
    throw ShapeError("measurement strides do not match the grid rank");
  for (std::size_t a = 0; a < config.rank(); ++a)
    if (m.spatial_stride[a] * (config.coarse_grid[a] - 1) >= config.grid[a])
      throw SpecError("measurement nodes fall outside the model grid");
}

double elapsed(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

void write_tensors(BinaryWriter& w, const std::vector<const Field*>& ts) {
  w.u32(static_cast<std::uint32_t>(ts.size()));
  for (const Field* t : ts) {
    w.u64(t->size());
    w.raw(t->values().data(), t->size() * sizeof(double));
  }
}

void read_tensors(BinaryReader& r, const std::vector<Field*>& ts) {
  if (r.u32() != ts.size()) throw ShapeError("training state does not match the model config");
  for (Field* t : ts) {
    if (r.u64() != t->size()) throw ShapeError("training state does not match the model config");
    r.raw(t->values().data(), t->size() * sizeof(double));
  }
}

template <class V>
std::vector<const Field*> ptrs(const V& fields) {
  std::vector<const Field*> out;
  for (const Field& f : fields) out.push_back(&f);
  return out;
}

template <class V>
std::vector<Field*> mut_ptrs(V& fields) {
  std::vector<Field*> out;
  for (Field& f : fields) out.push_back(&f);
  return out;
}

std::string epoch_stem(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%06zu", epoch);
  return buf;
}

}  // namespace

void adam_step(std::span<Field* const> params, std::span<const Field> grads, AdamState& state,
               double lr, const AdamConfig& cfg) {
  if (params.size() != grads.size())
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " params but " +
                     std::to_string(grads.size()) + " gradients");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (!params[i]->same_shape(grads[i]))
      throw ShapeError("adam_step: gradient " + std::to_string(i) + " has the wrong shape");
  if (state.m.empty()) {
    for (const Field* p : params) {
      state.m.push_back(p->zeros_like());
      state.v.push_back(p->zeros_like());
    }
  } else if (state.m.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state belongs to a different parameter set");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->values();
    const auto g = grads[i].values();
    auto m = state.m[i].values();
    auto v = state.v[i].values();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double mh = m[j] / c1;
      const double vh = v[j] / c2;
      p[j] -= lr * mh / (std::sqrt(vh) + cfg.eps);
    }
  }
}

std::size_t steps_per_snapshot(const Measurement& m, double model_dt) {
  if (!(model_dt > 0.0)) throw SpecError("model dt must be positive");
  const double ratio = m.data.dt / model_dt;
  const double r = std::round(ratio);
  if (r < 1.0 || std::abs(ratio - r) > 1e-9 * r)
    throw SpecError("measurement spacing is not a whole number of model steps");
  return static_cast<std::size_t>(r);
}

double loss(const Trajectory& prediction, const Measurement& m, const Field& u0_hat,
            double lambda, std::size_t n_times) {
  const std::size_t n = resolve_times(m, n_times);
  if (prediction.size() == 0) throw SpecError("empty prediction");
  const std::size_t spt = steps_per_snapshot(m, prediction.dt);
  if ((n - 1) * spt >= prediction.size())
    throw SpecError("measurement time " + std::to_string(n - 1) +
                    " lies beyond the prediction");
  const Extents& coarse = m.data[0].extents();
  double data = 0.0;
  for (std::size_t j = 0; j < n; ++j)
    data += sse(gather_strided(prediction[j * spt], m.spatial_stride, coarse), m.data[j]);
  data *= 1.0 / static_cast<double>(n * m.data[0].size());
  const Field target = upsampled_ic(m, u0_hat.extents());
  const double ic = sse(u0_hat, target) * (1.0 / static_cast<double>(u0_hat.size()));
  return data + lambda * ic;
}

LossGrad loss_and_grad(const ModelParams& params, const Measurement& m,
                       const ModelConfig& config, double lambda, std::size_t n_times) {
  check_measurement(m, config);
  const std::size_t n = resolve_times(m, n_times);
  const std::size_t spt = steps_per_snapshot(m, config.dt);
  Tape tape;
  const BoundParams p = bind_params(tape, params, true);
  const std::vector<Var> states = rollout(p, config, tape.constant(m.data[0]), (n - 1) * spt);
  const Extents& coarse = m.data[0].extents();
  Var data;
  for (std::size_t j = 0; j < n; ++j) {
    const Var term =
        ad::sum_squared_error(ad::gather_strided(states[j * spt], m.spatial_stride, coarse),
                              m.data[j]);
    data = data.valid() ? ad::add(data, term) : term;
  }
  data = ad::scale(data, 1.0 / static_cast<double>(n * m.data[0].size()));
  const Field target = upsampled_ic(m, config.grid);
  const Var ic = ad::scale(ad::sum_squared_error(states[0], target),
                           1.0 / static_cast<double>(target.size()));
  const Var total = ad::add(data, ad::scale(ic, lambda));
  tape.backward(total);

  LossGrad out;
  out.data = data.value()[0];
  out.ic = ic.value()[0];
  out.loss = total.value()[0];
  for (const Var& v : p.all) out.grads.push_back(tape.grad(v));
  out.final_state = states.back().value();
  return out;
}

double loss_value(const ModelParams& params, const Measurement& m, const ModelConfig& config,
                  double lambda, std::size_t n_times) {
  check_measurement(m, config);
  const std::size_t n = resolve_times(m, n_times);
  const std::size_t spt = steps_per_snapshot(m, config.dt);
  const Trajectory pred = rollout(m.data[0], params, config, (n - 1) * spt);
  return loss(pred, m, pred[0], lambda, n);
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw SpecError("lr must be positive");
  if (!(lambda >= 0.0)) throw SpecError("lambda must be >= 0");
  if (patience < 1) throw SpecError("patience must be >= 1");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw SpecError("lr_decay must lie in (0, 1]");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    throw SpecError("Adam betas must lie in [0, 1)");
  if (!(adam.eps > 0.0)) throw SpecError("Adam eps must be positive");
}

void save_train_state(const std::filesystem::path& path, const TrainState& s) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  BinaryWriter w(os);
  w.magic("PCTS");
  w.u32(1);
  w.u64(s.epoch);
  w.f64(s.lr);
  w.u64(s.adam.step);
  w.u64(s.best_epoch);
  w.f64(s.best_val_loss);
  w.u64(s.divergence_epoch);
  write_tensors(w, s.params.tensors());
  write_tensors(w, s.best_params.tensors());
  w.u32(s.adam.m.empty() ? 0 : 1);
  if (!s.adam.m.empty()) {
    write_tensors(w, ptrs(s.adam.m));
    write_tensors(w, ptrs(s.adam.v));
  }
}

TrainState load_train_state(const std::filesystem::path& path, const ModelConfig& config) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  BinaryReader r(is);
  r.expect_magic("PCTS");
  if (r.u32() != 1) throw IoError("unsupported training state version");
  TrainState s;
  s.epoch = r.u64();
  s.lr = r.f64();
  s.adam.step = r.u64();
  s.best_epoch = r.u64();
  s.best_val_loss = r.f64();
  s.divergence_epoch = r.u64();
  s.params = zero_params(config);
  s.best_params = zero_params(config);
  read_tensors(r, s.params.tensors());
  read_tensors(r, s.best_params.tensors());
  if (r.u32() != 0) {
    for (const Field* t : std::as_const(s.params).tensors()) {
      s.adam.m.push_back(t->zeros_like());
      s.adam.v.push_back(t->zeros_like());
    }
    read_tensors(r, mut_ptrs(s.adam.m));
    read_tensors(r, mut_ptrs(s.adam.v));
  }
  return s;
}

void write_train_log(std::ostream& os, std::span<const EpochRecord> epochs, bool header) {
  if (header) os << "epoch,train_loss,val_loss,lr,seconds\n";
  char buf[160];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.6f\n", e.epoch, e.train_loss,
                  e.val_loss, e.lr, e.seconds);
    os << buf;
  }
}

std::size_t supervised_window(std::size_t epoch, std::size_t n_train, std::size_t warmup) {
  if (warmup == 0 || epoch == 0) return n_train;
  return std::min(n_train, 2 + (epoch - 1) / warmup);
}

TrainReport train(const Measurement& m, const ModelConfig& config, const TrainConfig& tc,
                  const std::optional<TrainState>& resume, const EpochCallback& on_epoch) {
  config.validate();
  tc.validate();
  check_measurement(m, config);
  const std::size_t total = m.data.size();
  if (total < tc.validation_snapshots + 2)
    throw SpecError("measurement has " + std::to_string(total) + " snapshots; need at least " +
                    std::to_string(tc.validation_snapshots + 2));
  const std::size_t n_train = total - tc.validation_snapshots;
  const std::size_t n_val = tc.validation_snapshots;
  const std::size_t spt = steps_per_snapshot(m, config.dt);
  const std::size_t steps_train = (n_train - 1) * spt;
  const Extents& coarse = m.data[0].extents();
  const std::vector<Field> masks = trainable_masks(config);

  TrainState st;
  if (resume) {
    st = *resume;
    validate_params(st.params, config);
    validate_params(st.best_params, config);
  } else {
    st.params = init_params(config, tc.seed);
    st.best_params = st.params;
    st.lr = tc.lr;
  }

  const bool checkpoints = !tc.checkpoint_dir.empty();
  if (checkpoints) std::filesystem::create_directories(tc.checkpoint_dir);
  std::ofstream log;
  if (!tc.log_path.empty()) {
    const bool append = resume.has_value() && std::filesystem::exists(tc.log_path);
    log.open(tc.log_path, append ? std::ios::app : std::ios::trunc);
    if (!log) throw IoError("cannot open " + tc.log_path.string() + " for writing");
    if (!append) write_train_log(log, {}, true);
  }

  TrainReport report;
  const auto start = std::chrono::steady_clock::now();
  std::size_t epoch = st.epoch;
  while (epoch < tc.max_epochs) {
    if (st.best_epoch > 0 && epoch - st.best_epoch >= tc.patience) {
      report.stopped_early = true;
      break;
    }
    ++epoch;
    const auto epoch_start = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = st.lr;
    const std::size_t window = supervised_window(epoch, n_train, tc.window_warmup);
    LossGrad lg;
    try {
      lg = loss_and_grad(st.params, m, config, tc.lambda, window);
      if (window < n_train) {
        rec.val_loss = std::numeric_limits<double>::quiet_NaN();
      } else if (n_val > 0) {
        const Trajectory cont =
            rollout_from(lg.final_state, st.params, config, n_val * spt, steps_train);
        double v = 0.0;
        for (std::size_t j = 1; j <= n_val; ++j)
          v += sse(gather_strided(cont[j * spt], m.spatial_stride, coarse),
                   m.data[n_train - 1 + j]);
        rec.val_loss = v * (1.0 / static_cast<double>(n_val * m.data[0].size()));
      } else {
        rec.val_loss = lg.data;
      }
      if (!std::isfinite(lg.loss) || (window == n_train && !std::isfinite(rec.val_loss)))
        throw DivergenceError("non-finite loss", steps_train);
    } catch (const DivergenceError& e) {
      if (st.divergence_epoch != 0)
        throw DivergenceError("training diverged again at epoch " + std::to_string(epoch) +
                                  " after halving lr: " + e.what(),
                              e.step());
      // Recovery: back to the best parameters seen, half the step size.
      st.divergence_epoch = epoch;
      st.params = st.best_params;
      st.lr *= 0.5;
      st.adam = {};
      continue;
    }
    rec.train_loss = lg.loss;

    if (window == n_train && rec.val_loss < st.best_val_loss) {
      st.best_val_loss = rec.val_loss;
      st.best_epoch = epoch;
      st.best_params = st.params;
      if (checkpoints) save_checkpoint(tc.checkpoint_dir / "best.pcck", config, st.params);
    }

    for (std::size_t t = 0; t < lg.grads.size(); ++t) {
      auto g = lg.grads[t].values();
      const auto mk = masks[t].values();
      for (std::size_t j = 0; j < g.size(); ++j) g[j] *= mk[j];
    }
    const auto tensors = st.params.tensors();
    adam_step(tensors, lg.grads, st.adam, st.lr, tc.adam);
    st.lr *= tc.lr_decay;
    st.epoch = epoch;

    rec.seconds = tc.log_wall_clock ? elapsed(epoch_start) : 0.0;
    report.epochs.push_back(rec);
    if (log) {
      write_train_log(log, std::span(&rec, 1), false);
      log.flush();
    }
    if (on_epoch) on_epoch(rec);
    if (checkpoints && tc.checkpoint_every > 0 && epoch % tc.checkpoint_every == 0) {
      const std::string stem = epoch_stem(epoch);
      save_checkpoint(tc.checkpoint_dir / (stem + ".pcck"), config, st.params);
      save_train_state(tc.checkpoint_dir / (stem + ".pcts"), st);
    }
  }

  report.best_epoch = st.best_epoch;
  report.best_val_loss = st.best_val_loss;
  report.divergence_epoch = st.divergence_epoch;
  report.params = st.best_params;
  report.final_params = st.params;
  report.seconds = elapsed(start);
  return report;
}

}  // namespace percnn
