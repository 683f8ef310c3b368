#include "percnn/commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "percnn/dataset_io.hpp"

namespace percnn {

using json = nlohmann::ordered_json;

namespace {

void say(std::ostream* progress, const std::string& line) {
  if (progress) *progress << line << '\n' << std::flush;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw IoError("write failed for " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void echo_config(const RunConfig& cfg, const fs::path& out) {
  write_text(out / kConfigEcho, cfg.echo());
}

std::string extents_string(const Extents& e) {
  std::string s;
  for (std::size_t i = 0; i < e.size(); ++i) s += (i ? "x" : "") + std::to_string(e[i]);
  return s;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

ModelParams teacher_params(const RunConfig& cfg, const ModelConfig& mc) {
  ModelParams t = init_params(mc, cfg.count("teacher.seed"));
  const double s = cfg.real("teacher.scale");
  for (std::size_t i = 0; i < mc.n_parallel; ++i) {
    for (double& v : t.layer_w[i].values()) v *= s;
    for (double& v : t.layer_b[i].values()) v *= s;
  }
  for (double& v : t.agg_w.values()) v *= s;
  if (!t.diff_coef.empty()) {
    const auto d = cfg.reals("teacher.diff");
    for (std::size_t c = 0; c < t.diff_coef.size(); ++c) t.diff_coef[c] = d[c];
  }
  validate_params(t, mc);
  return t;
}

// Model steps per reference step; both time steps come from the config.
std::size_t model_steps_for(const RunConfig& cfg, std::size_t reference_steps) {
  const double ratio = static_cast<double>(reference_steps) * cfg.real("solver.dt") / cfg.model_dt();
  const double r = std::round(ratio);
  if (std::abs(ratio - r) > 1e-9 * std::max(1.0, r))
    throw ConfigError("reference horizon is not a whole number of model steps");
  return static_cast<std::size_t>(r);
}

Measurement training_window(const RunConfig& cfg, const Measurement& m) {
  const std::size_t n = cfg.count("train.snapshots");
  if (n == 0) return m;
  if (n > m.data.size())
    throw ConfigError("train.snapshots = " + std::to_string(n) + " but the dataset has only " +
                      std::to_string(m.data.size()) + " measurement snapshots");
  Measurement w = m;
  w.data.fields.resize(n);
  return w;
}

void write_csv_grid(const fs::path& path, const Field& f, std::size_t channel) {
  // 3D fields export their middle slice along the first axis.
  const Extents& e = f.extents();
  const std::size_t nx = e.back();
  const std::size_t ny = e.size() >= 2 ? e[e.size() - 2] : 1;
  const std::size_t offset = e.size() == 3 ? (e[0] / 2) * ny * nx : 0;
  const auto ch = f.channel(channel);
  std::ostringstream os;
  char buf[32];
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", ch[offset + j * nx + i]);
      os << (i ? "," : "") << buf;
    }
    os << '\n';
  }
  write_text(path, os.str());
}

}  // namespace

Measurement load_measurement(const fs::path& dataset_dir) {
  const json man = read_json(dataset_dir / kManifestFile);
  Measurement m;
  try {
    m.spatial_stride = man.at("spatial_stride").get<std::vector<std::size_t>>();
    m.temporal_stride = man.at("temporal_stride").get<std::size_t>();
    m.noise_level = man.at("noise").get<double>();
    m.fine_extents = man.at("grid").get<Extents>();
  } catch (const json::exception& e) {
    throw IoError((dataset_dir / kManifestFile).string() + ": " + e.what());
  }
  m.data = read_dataset(dataset_dir / kMeasurementFile).trajectory;
  if (m.spatial_stride.size() != m.data[0].rank())
    throw IoError("manifest strides do not match the measurement rank");
  return m;
}

std::string config_mismatch(const ModelConfig& a, const ModelConfig& b, bool compare_coarse) {
  std::string out;
  auto num = [&](const char* name, double x, double y) {
    if (x != y) out += std::string(name) + ": config " + fmt(x) + ", checkpoint " + fmt(y) + "\n";
  };
  auto ext = [&](const char* name, const Extents& x, const Extents& y) {
    if (x != y)
      out += std::string(name) + ": config " + extents_string(x) + ", checkpoint " +
             extents_string(y) + "\n";
  };
  num("state_channels", static_cast<double>(a.state_channels),
      static_cast<double>(b.state_channels));
  ext("grid", a.grid, b.grid);
  if (compare_coarse) ext("coarse_grid", a.coarse_grid, b.coarse_grid);
  num("n_parallel", static_cast<double>(a.n_parallel), static_cast<double>(b.n_parallel));
  num("filter_size", static_cast<double>(a.filter_size), static_cast<double>(b.filter_size));
  num("n_channels", static_cast<double>(a.n_channels), static_cast<double>(b.n_channels));
  num("isg_channels", static_cast<double>(a.isg_channels), static_cast<double>(b.isg_channels));
  num("isg_filter_size", static_cast<double>(a.isg_filter_size),
      static_cast<double>(b.isg_filter_size));
  num("dt", a.dt, b.dt);
  if (a.bc != b.bc)
    out += std::string("bc: config ") + to_string(a.bc) + ", checkpoint " + to_string(b.bc) + "\n";
  if (a.highway != b.highway) out += "highway differs\n";
  if (a.pointwise_free != b.pointwise_free) out += "pointwise_free differs\n";
  if (a.frozen != b.frozen) out += "frozen filters differ\n";
  return out;
}

void cmd_generate(const RunConfig& cfg, const fs::path& out, std::ostream* progress) {
  cfg.validate();
  ensure_dir(out);
  const PdeSystem sys = cfg.system();
  const Extents grid = cfg.grid();
  const std::size_t steps = cfg.count("solver.steps");
  const double dt = cfg.real("solver.dt");
  const bool teacher = cfg.text("generator") == "teacher";

  Trajectory ref;
  DatasetKind kind = dataset_kind(sys.kind);
  if (teacher) {
    if (sys.rank() != 2) throw ConfigError("the teacher generator needs a 2D system");
    ModelConfig mc = cfg.model(grid);
    mc.dt = dt;
    const Field ic = burgers_initial_condition(sys, grid, cfg.ic_seed(),
                                               static_cast<int>(cfg.count("ic.modes")),
                                               cfg.real("ic.amplitude"));
    say(progress, "teacher rollout: " + std::to_string(steps) + " steps on " + extents_string(grid));
    ref = rollout_from(ic, teacher_params(cfg, mc), mc, steps);
    kind = DatasetKind::model;
  } else {
    const Field ic =
        sys.kind == SystemKind::burgers2d
            ? burgers_initial_condition(sys, grid, cfg.ic_seed(),
                                        static_cast<int>(cfg.count("ic.modes")),
                                        cfg.real("ic.amplitude"))
            : grayscott_initial_condition(sys, grid, cfg.ic_seed(), cfg.real("ic.noise"));
    say(progress, std::string(to_string(sys.kind)) + ": " + std::to_string(steps) +
                      " RK4 steps on " + extents_string(grid));
    ref = generate_trajectory(sys, ic, steps, dt);
  }

  const std::size_t s = cfg.count("measure.spatial_stride");
  const std::size_t ts = cfg.count("measure.temporal_stride");
  Measurement m = subsample(ref, std::vector<std::size_t>(grid.size(), s), ts);
  const double noise = cfg.real("measure.noise");
  if (noise > 0.0) m = add_noise(m, noise, cfg.noise_seed());

  write_dataset(out / kReferenceFile, ref, kind);
  write_dataset(out / kMeasurementFile, m.data, kind);

  json man;
  man["format"] = "percnn-dataset";
  man["version"] = 1;
  man["preset"] = cfg.text("preset");
  man["scale"] = cfg.scale();
  man["system"] = to_string(sys.kind);
  man["generator"] = cfg.text("generator");
  man["seeds"] = {{"ic", cfg.ic_seed()}, {"noise", cfg.noise_seed()}};
  if (teacher) man["seeds"]["teacher"] = cfg.count("teacher.seed");
  man["grid"] = grid;
  man["spacing"] = sys.spacing(grid);
  man["dt"] = dt;
  man["steps"] = steps;
  man["spatial_stride"] = m.spatial_stride;
  man["temporal_stride"] = ts;
  man["noise"] = noise;
  man["coarse_grid"] = m.data[0].extents();
  man["measurement_snapshots"] = m.data.size();
  man["measurement_dt"] = m.data.dt;
  man["files"] = {{"reference", kReferenceFile}, {"measurement", kMeasurementFile}};
  write_json(out / kManifestFile, man);
  echo_config(cfg, out);
  say(progress, "wrote " + std::to_string(ref.size()) + " reference and " +
                    std::to_string(m.data.size()) + " measurement snapshots to " + out.string());
}

TrainReport cmd_train(const RunConfig& cfg, const fs::path& dataset_dir, const fs::path& out,
                      std::ostream* progress, const fs::path& resume) {
  cfg.validate();
  const Measurement full = load_measurement(dataset_dir);
  const Measurement m = training_window(cfg, full);
  const ModelConfig mc = cfg.model(m.data[0].extents());
  if (mc.grid != full.fine_extents)
    throw ShapeError("config grid " + extents_string(mc.grid) + " but dataset grid " +
                     extents_string(full.fine_extents));
  mc.validate();
  ensure_dir(out);

  const TrainConfig base = cfg.training();
  const std::size_t restarts = cfg.count("train.restarts");
  if (restarts > 1 && !resume.empty())
    throw ConfigError("--resume continues a single run; set train.restarts = 1");
  std::optional<TrainState> state;
  if (!resume.empty()) state = load_train_state(resume, mc);

  say(progress, "training on " + std::to_string(m.data.size()) + " snapshots (" +
                    std::to_string(base.validation_snapshots) + " held out), lr " + fmt(base.lr) +
                    ", lambda " + fmt(base.lambda));
  const std::size_t every = std::max<std::size_t>(1, base.max_epochs / 20);
  // Restart i uses seed + i and keeps its own log; the lowest best loss wins.
  TrainReport r;
  TrainConfig tc = base;
  std::vector<double> restart_losses;
  std::size_t chosen = 0;
  for (std::size_t i = 0; i < restarts; ++i) {
    TrainConfig ti = base;
    ti.seed = base.seed + i;
    const fs::path dir = restarts > 1 ? out / ("restart_" + std::to_string(i)) : out;
    if (restarts > 1) ensure_dir(dir);
    ti.log_path = dir / "train_log.csv";
    if (ti.checkpoint_every > 0) ti.checkpoint_dir = dir / "checkpoints";
    if (restarts > 1) say(progress, "restart " + std::to_string(i) + ", seed " + std::to_string(ti.seed));
    TrainReport ri = train(m, mc, ti, state, [&](const EpochRecord& e) {
      if (e.epoch % every == 0)
        say(progress, "epoch " + std::to_string(e.epoch) + "  train " + fmt(e.train_loss) +
                          "  val " + fmt(e.val_loss));
    });
    restart_losses.push_back(ri.best_val_loss);
    if (i == 0 || ri.best_val_loss < r.best_val_loss) {
      r = std::move(ri);
      tc = ti;
      chosen = i;
    }
  }
  save_checkpoint(out / "best.pcck", mc, r.params);
  save_checkpoint(out / "final.pcck", mc, r.final_params);

  json rep;
  rep["epochs_run"] = r.epochs.size();
  rep["last_epoch"] = r.epochs.empty() ? 0 : r.epochs.back().epoch;
  rep["best_epoch"] = r.best_epoch;
  rep["best_val_loss"] = r.best_val_loss;
  double best_train = std::numeric_limits<double>::quiet_NaN();
  for (const auto& e : r.epochs)
    if (e.epoch == r.best_epoch) best_train = e.train_loss;
  rep["best_train_loss"] = best_train;
  rep["final_train_loss"] = r.epochs.empty() ? best_train : r.epochs.back().train_loss;
  rep["stopped_early"] = r.stopped_early;
  rep["divergence_epoch"] = r.divergence_epoch;
  rep["lr"] = tc.lr;
  rep["lambda"] = tc.lambda;
  rep["seed"] = tc.seed;
  if (restarts > 1) {
    rep["restart"] = chosen;
    rep["restart_best_losses"] = restart_losses;
  }
  if (!r.params.diff_coef.empty()) {
    std::vector<double> d(r.params.diff_coef.values().begin(), r.params.diff_coef.values().end());
    rep["diff_coef"] = d;
  }
  if (tc.log_wall_clock) rep["seconds"] = r.seconds;
  write_json(out / "report.json", rep);
  echo_config(cfg, out);
  say(progress, "best epoch " + std::to_string(r.best_epoch) + ", validation loss " +
                    fmt(r.best_val_loss));
  return r;
}

Trajectory cmd_predict(const RunConfig& cfg, const fs::path& checkpoint,
                       const fs::path& dataset_dir, const fs::path& out, std::ostream* progress) {
  cfg.validate();
  const Checkpoint ck = load_checkpoint(checkpoint);
  const Measurement m = load_measurement(dataset_dir);
  const std::string diff = config_mismatch(cfg.model(m.data[0].extents()), ck.config);
  if (!diff.empty()) throw ShapeError("config and checkpoint disagree:\n" + diff);

  const std::size_t steps = cfg.text("predict.steps") == "auto"
                                ? model_steps_for(cfg, cfg.count("solver.steps"))
                                : cfg.count("predict.steps");
  for (std::size_t k : cfg.counts("predict.csv_snapshots"))
    if (k > steps)
      throw ConfigError("predict.csv_snapshots: " + std::to_string(k) + " exceeds " +
                        std::to_string(steps) + " steps");
  ensure_dir(out);
  say(progress, "rolling out " + std::to_string(steps) + " steps");
  Trajectory pred = rollout(m.data[0], ck.params, ck.config, steps);
  pred.t0 = m.data.t0;
  write_dataset(out / "prediction.pcnf", pred, DatasetKind::model);
  for (std::size_t k : cfg.counts("predict.csv_snapshots"))
    for (std::size_t c = 0; c < pred[k].channels(); ++c) {
      char name[64];
      std::snprintf(name, sizeof name, "snapshot_%06zu_%s.csv", k,
                    state_name(c, pred[k].channels()).c_str());
      write_csv_grid(out / name, pred[k], c);
    }
  echo_config(cfg, out);
  return pred;
}

ErrorCurve cmd_evaluate(const RunConfig& cfg, const fs::path& prediction,
                        const fs::path& reference, const fs::path& out, std::ostream* progress) {
  cfg.validate();
  Trajectory pred = read_dataset(prediction).trajectory;
  Trajectory ref = read_dataset(reference).trajectory;
  if (std::abs(pred.dt - ref.dt) > 1e-12 * ref.dt)
    throw ShapeError("prediction dt " + fmt(pred.dt) + " differs from reference dt " +
                     fmt(ref.dt));
  pred.dt = ref.dt;
  const std::size_t n = std::min(pred.size(), ref.size());
  if (pred.size() != ref.size())
    say(progress, "comparing the first " + std::to_string(n) + " snapshots");
  pred = pred.slice(0, n);
  ref = ref.slice(0, n);

  std::size_t train_end;
  if (cfg.text("evaluate.train_end") == "auto") {
    std::size_t window = cfg.count("train.snapshots");
    const std::size_t ts = cfg.count("measure.temporal_stride");
    if (window == 0) window = cfg.count("solver.steps") / ts + 1;
    train_end = static_cast<std::size_t>(
        std::llround(static_cast<double>((window - 1) * ts) * cfg.real("solver.dt") / ref.dt));
  } else {
    train_end = cfg.count("evaluate.train_end");
  }
  const ErrorCurve curve = error_curve(pred, ref, train_end);
  ensure_dir(out);
  {
    std::ostringstream os;
    write_curve_csv(os, curve);
    write_text(out / "curve.csv", os.str());
  }
  {
    std::ostringstream os;
    write_curve_svg(os, {curve}, {"accumulative RMSE"}, "Error propagation");
    write_text(out / "curve.svg", os.str());
  }
  json s;
  s["snapshots"] = n;
  s["train_end"] = train_end;
  s["train_end_rmse"] = curve.rmse[std::min(train_end, n - 1)];
  s["final_rmse"] = curve.rmse.back();
  write_json(out / "summary.json", s);
  echo_config(cfg, out);
  say(progress, "final accumulative RMSE " + fmt(curve.rmse.back()));
  return curve;
}

std::vector<PolyExpr> cmd_interpret(const RunConfig& cfg, const fs::path& checkpoint,
                                    const fs::path& out, std::ostream* progress) {
  cfg.validate();
  const Checkpoint ck = load_checkpoint(checkpoint);
  const std::string diff =
      config_mismatch(cfg.model(ck.config.coarse_grid), ck.config, false);
  if (!diff.empty()) throw ShapeError("config and checkpoint disagree:\n" + diff);

  const std::vector<PolyExpr> exprs = ck.config.frozen.empty()
                                          ? expand_pointwise(ck.params, ck.config)
                                          : expand_with_derivatives(ck.params, ck.config);
  const double threshold = cfg.real("interpret.threshold");
  const std::vector<PolyExpr> pruned = prune(exprs, threshold);
  const std::size_t samples = cfg.count("interpret.samples");
  const double dev = verify_extraction(exprs, ck.params, ck.config, samples, cfg.verify_seed());
  const double dev_pruned =
      verify_extraction(pruned, ck.params, ck.config, samples, cfg.verify_seed());

  ensure_dir(out);
  write_text(out / "equation.txt", format_report(pruned));
  write_text(out / "equation_full.txt", format_report(exprs));
  {
    std::ostringstream os;
    write_terms_csv(os, pruned);
    write_text(out / "terms.csv", os.str());
  }
  {
    std::ostringstream os;
    write_terms_csv(os, exprs);
    write_text(out / "terms_full.csv", os.str());
  }
  json j;
  j["threshold"] = threshold;
  j["samples"] = samples;
  j["max_deviation"] = dev;
  j["max_deviation_pruned"] = dev_pruned;
  write_json(out / "interpret.json", j);
  echo_config(cfg, out);
  say(progress, format_report(pruned) + "max deviation " + fmt(dev));
  return exprs;
}

}  // namespace percnn
