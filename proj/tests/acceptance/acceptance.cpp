// One PASS/FAIL line per acceptance criterion.
// usage: acceptance <path to percnn cli> [work dir] [criterion numbers...]
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../unit/helpers.hpp"
#include "../unit/reference_conv.hpp"
#include "percnn/commands.hpp"
#include "percnn/dataset_io.hpp"
#include "percnn/interpret.hpp"
#include "percnn/model.hpp"
#include "percnn/training.hpp"

using namespace percnn;
namespace fs = std::filesystem;
using testutil::max_abs_diff;
using testutil::random_field;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

fs::path g_cli;
fs::path g_work;

// 1. Every trainable entry against central differences of the full loss.
Outcome gradient_check() {
  ModelConfig c;
  c.state_channels = 2;
  c.grid = {16, 16};
  c.spacing = {1.0 / 16, 1.0 / 16};
  c.coarse_grid = {8, 8};
  c.n_parallel = 4;
  c.filter_size = 3;
  c.n_channels = 2;
  c.isg_channels = 2;
  c.isg_filter_size = 3;
  c.dt = 0.01;

  Rng rng(11);
  ModelParams p = init_params(c, 3);
  const auto masks = trainable_masks(c);
  auto ts = p.tensors();
  for (std::size_t t = 0; t < ts.size(); ++t)
    for (std::size_t j = 0; j < ts[t]->size(); ++j)
      if (masks[t][j] != 0.0) (*ts[t])[j] = rng.uniform(-0.6, 0.6);
  for (double& d : p.diff_coef.values()) d = rng.uniform(0.01, 0.05);

  // Six snapshots one model step apart: a 5-step rollout.
  Measurement m;
  m.spatial_stride = {2, 2};
  m.temporal_stride = 1;
  m.fine_extents = c.grid;
  m.data.dt = c.dt;
  for (int k = 0; k < 6; ++k) {
    Field f = random_field(rng, 2, c.coarse_grid);
    f.set_spacing({2.0 / 16, 2.0 / 16});
    m.data.fields.push_back(f);
  }

  const LossGrad lg = loss_and_grad(p, m, c, 1.0);
  std::size_t n = 0, under_1e4 = 0;
  double worst = 0.0;
  const double h = 1e-6;
  for (std::size_t t = 0; t < ts.size(); ++t)
    for (std::size_t j = 0; j < ts[t]->size(); ++j) {
      if (masks[t][j] == 0.0) continue;
      const double x = (*ts[t])[j];
      (*ts[t])[j] = x + h;
      const double fp = loss_value(p, m, c, 1.0);
      (*ts[t])[j] = x - h;
      const double fm = loss_value(p, m, c, 1.0);
      (*ts[t])[j] = x;
      const double num = (fp - fm) / (2 * h);
      const double g = lg.grads[t][j];
      const double rel = std::abs(num - g) / std::max({std::abs(num), std::abs(g), 1e-8});
      worst = std::max(worst, rel);
      ++n;
      if (rel < 1e-4) ++under_1e4;
    }
  const double frac = static_cast<double>(under_1e4) / static_cast<double>(n);
  return {frac >= 0.99 && worst < 1e-3,
          fmt("%.0f params, %.4f below 1e-4, max rel err %.2e", static_cast<double>(n), frac, worst)};
}

// 2. conv against the nested-loop reference.
Outcome conv_oracle() {
  Rng rng(2025);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t rank = 1 + trial % 3;
    const std::size_t k = (trial / 3) % 3 * 2 + 1;
    const std::size_t cin = 1 + trial % 2, cout = 1 + (trial / 2) % 3;
    Extents ext(rank);
    for (auto& e : ext) e = 3 + static_cast<std::size_t>(rng.uniform() * (rank == 3 ? 4 : 8));
    Field f = random_field(rng, cin, ext);
    std::vector<double> dx(rank);
    for (auto& d : dx) d = rng.uniform(0.1, 2.0);
    f.set_spacing(dx);
    const Field w = random_field(rng, cout * cin, Extents(rank, k));
    const Field b = random_field(rng, cout, {1});
    PadSpec spec;
    switch ((trial / 7) % 3) {
      case 0: spec = PadSpec::periodic(); break;
      case 1: spec = PadSpec::dirichlet(1, {rng.uniform(-1, 1)}); break;
      default: spec = PadSpec::neumann(1, {rng.uniform(-1, 1)}); break;
    }
    worst = std::max(worst, max_abs_diff(conv(f, w, b, spec), testutil::naive_conv(f, w, b, spec)));
  }
  return {worst < 1e-12, fmt("200 instances, max abs diff %.2e", worst)};
}

// 3. Observed order of the stencils and of RK4.
double stencil_error(std::size_t n, bool lap) {
  const double L = 2.0 * M_PI, h = L / static_cast<double>(n);
  Field f(1, {n, n}, {h, h});
  Field exact(1, {n, n}, {h, h});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double x = static_cast<double>(i) * h, y = static_cast<double>(j) * h;
      f[i * n + j] = std::sin(x) * std::sin(2 * y);
      exact[i * n + j] = lap ? -5.0 * std::sin(x) * std::sin(2 * y) : std::cos(x) * std::sin(2 * y);
    }
  const Field g = lap ? laplacian(f) : first_derivative(f, 0);
  return max_abs_diff(g, exact);
}

double rk4_error(double dt) {
  const double a = -1.3, T = 1.0;
  Field u(1, {1});
  u[0] = 1.0;
  const Rhs rhs = [a](const Field& s) {
    Field r = s;
    r[0] *= a;
    return r;
  };
  const auto n = static_cast<std::size_t>(std::lround(T / dt));
  for (std::size_t k = 0; k < n; ++k) u = rk4_step(u, rhs, dt, k);
  return std::abs(u[0] - std::exp(a * T));
}

Outcome fd_order() {
  double lap_order = 1e9, dx_order = 1e9, rk_order = 1e9;
  for (std::size_t n : {16, 32}) {
    lap_order = std::min(lap_order, std::log2(stencil_error(n, true) / stencil_error(2 * n, true)));
    dx_order = std::min(dx_order, std::log2(stencil_error(n, false) / stencil_error(2 * n, false)));
  }
  for (double dt : {0.1, 0.05}) rk_order = std::min(rk_order, std::log2(rk4_error(dt) / rk4_error(dt / 2)));
  return {lap_order >= 3.8 && dx_order >= 3.8 && rk_order >= 3.8,
          fmt("laplacian %.3f, first derivative %.3f, rk4 %.3f", lap_order, dx_order, rk_order)};
}

// 4. Three 1x1 parallel layers carrying u*v^2, u and v.
Outcome representability() {
  const double kappa = 0.055, feed = 0.025;
  ModelConfig c;
  c.state_channels = 2;
  c.grid = {16, 16};
  c.spacing = {1.0, 1.0};
  c.coarse_grid = {16, 16};
  c.n_parallel = 3;
  c.filter_size = 1;
  c.n_channels = 3;
  c.isg_channels = 2;
  c.isg_filter_size = 1;
  c.highway = Highway::none;
  c.dt = 1.0;
  ModelParams p = zero_params(c);
  auto w = [](Field& f, std::size_t out, std::size_t in, double v) { f[out * 2 + in] = v; };
  // feature 0: u * v * v
  w(p.layer_w[0], 0, 0, 1.0);
  w(p.layer_w[1], 0, 1, 1.0);
  w(p.layer_w[2], 0, 1, 1.0);
  // feature 1: u * 1 * 1, feature 2: v * 1 * 1
  w(p.layer_w[0], 1, 0, 1.0);
  p.layer_b[1][1] = 1.0;
  p.layer_b[2][1] = 1.0;
  w(p.layer_w[0], 2, 1, 1.0);
  p.layer_b[1][2] = 1.0;
  p.layer_b[2][2] = 1.0;
  // aggregation rows: u_t = -uv^2 - f u + f, v_t = uv^2 - (f + kappa) v
  p.agg_w[0 * 3 + 0] = -1.0;
  p.agg_w[0 * 3 + 1] = -feed;
  p.agg_b[0] = feed;
  p.agg_w[1 * 3 + 0] = 1.0;
  p.agg_w[1 * 3 + 2] = -(feed + kappa);

  Rng rng(4);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    Field s = random_field(rng, 2, c.grid, -2.0, 2.0);
    s.set_spacing(c.spacing);
    worst = std::max(worst, max_abs_diff(pi_block_residual(s, p, c), grayscott_rhs(s, 0, 0, kappa, feed)));
  }
  return {worst < 1e-12, fmt("max pointwise deviation %.2e", worst)};
}

// 5 and 6 share one trained Gray-Scott model.
struct GsRun {
  bool done = false;
  std::vector<double> diff;
  std::vector<PolyExpr> pruned;
  double seconds = 0.0;
  std::string error;
};

GsRun& gs_run() {
  static GsRun run;
  if (run.done) return run;
  run.done = true;
  try {
    const RunConfig cfg = RunConfig::preset("grayscott-desk");
    const fs::path dir = g_work / "grayscott";
    fs::remove_all(dir);
    const auto t0 = std::chrono::steady_clock::now();
    cmd_generate(cfg, dir / "data", nullptr);
    const TrainReport r = cmd_train(cfg, dir / "data", dir / "run", nullptr);
    run.diff.assign(r.params.diff_coef.values().begin(), r.params.diff_coef.values().end());
    run.pruned = cmd_interpret(cfg, dir / "run" / "best.pcck", dir / "run", nullptr);
    run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  } catch (const std::exception& e) {
    run.error = e.what();
  }
  return run;
}

Outcome diffusion_recovery() {
  const GsRun& r = gs_run();
  if (!r.error.empty()) return {false, r.error};
  const double eu = std::abs(r.diff[0] - 0.2) / 0.2, ev = std::abs(r.diff[1] - 0.1) / 0.1;
  return {eu <= 0.25 && ev <= 0.25,
          fmt("diff_coef %.4f %.4f (errors %.1f%% %.1f%%)", r.diff[0], r.diff[1], 100 * eu, 100 * ev) +
              fmt(", %.0f s", r.seconds)};
}

Outcome extraction() {
  ModelConfig c;
  c.state_channels = 2;
  c.grid = {8, 8};
  c.spacing = {0.1, 0.1};
  c.coarse_grid = {8, 8};
  c.filter_size = 1;
  c.isg_channels = 2;
  c.isg_filter_size = 1;
  Rng rng(606);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    c.n_parallel = 2 + trial % 3;
    c.n_channels = 1 + (trial / 4) % 4;
    c.highway = trial % 2 ? Highway::diffusion : Highway::none;
    ModelParams p = zero_params(c);
    for (auto& w : p.layer_w) for (double& v : w.values()) v = rng.uniform(-1, 1);
    for (auto& b : p.layer_b) for (double& v : b.values()) v = rng.uniform(-1, 1);
    for (double& v : p.agg_w.values()) v = rng.uniform(-1, 1);
    for (double& v : p.agg_b.values()) v = rng.uniform(-1, 1);
    for (double& v : p.diff_coef.values()) v = rng.uniform(0, 0.1);
    const auto exprs = c.highway == Highway::none ? expand_pointwise(p, c) : expand_with_derivatives(p, c);
    worst = std::max(worst, verify_extraction(exprs, p, c, 100, static_cast<std::uint64_t>(trial)));
  }
  std::string detail = fmt("50 models, max deviation %.2e", worst);
  bool pass = worst < 1e-10;

  const GsRun& r = gs_run();
  if (!r.error.empty()) return {false, detail + "; " + r.error};
  const Monomial uvv = make_monomial({Symbol{SymbolKind::state, 0}, Symbol{SymbolKind::state, 1}, Symbol{SymbolKind::state, 1}});
  auto coef = [&](std::size_t ch) {
    const auto it = r.pruned[ch].terms.find(uvv);
    return it == r.pruned[ch].terms.end() ? 0.0 : it->second;
  };
  const double cu = coef(0), cv = coef(1);
  pass = pass && cu < 0 && cv > 0 && std::abs(std::abs(cu) - 1) <= 0.5 && std::abs(std::abs(cv) - 1) <= 0.5;
  return {pass, detail + fmt("; pruned u*v^2 coefficients %.4f %.4f", cu, cv)};
}

// 7. Trained model against persistence and a diffusion-only ablation.
Outcome extrapolation() {
  try {
    const RunConfig cfg = RunConfig::preset("burgers-desk");
    const fs::path dir = g_work / "burgers";
    fs::remove_all(dir);
    const auto t0 = std::chrono::steady_clock::now();
    cmd_generate(cfg, dir / "data", nullptr);
    const TrainReport rep = cmd_train(cfg, dir / "data", dir / "run", nullptr);
    const Trajectory ref = read_dataset(dir / "data" / kReferenceFile).trajectory;
    const Measurement full = load_measurement(dir / "data");
    const Checkpoint ck = load_checkpoint(dir / "run" / "best.pcck");
    const std::size_t steps = ref.size() - 1;
    const std::size_t train_end =
        (cfg.count("train.snapshots") - 1) * cfg.count("measure.temporal_stride");

    const Trajectory model = rollout(full.data[0], ck.params, ck.config, steps);

    Trajectory frozen = model;
    for (std::size_t k = train_end + 1; k < frozen.size(); ++k) frozen.fields[k] = model[train_end];

    // Same initial state, no Pi-block, the diffusion coefficient that best
    // fits the training window.
    Measurement window = full;
    window.data = full.data.slice(0, cfg.count("train.snapshots"));
    ModelParams abl = ck.params;
    abl.agg_w.fill(0.0);
    abl.agg_b.fill(0.0);
    double best_nu = 0.0, best_loss = 1e300;
    for (int i = 0; i <= 60; ++i) {
      const double nu = i == 0 ? 0.0 : 1e-4 * std::pow(10.0, i / 20.0);
      abl.diff_coef.fill(nu);
      const double l = loss_value(abl, window, ck.config, cfg.real("train.lambda"));
      if (l < best_loss) best_loss = l, best_nu = nu;
    }
    abl.diff_coef.fill(best_nu);
    const Trajectory ablation = rollout(full.data[0], abl, ck.config, steps);

    const std::size_t n = steps + 1;
    const double e_model = accumulative_rmse(model, ref, n);
    const double e_frozen = accumulative_rmse(frozen, ref, n);
    const double e_abl = accumulative_rmse(ablation, ref, n);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ofstream(dir / "baselines.txt") << "model " << e_model << "\npersistence " << e_frozen
                                         << "\nablation " << e_abl << " nu " << best_nu << '\n';
    return {e_model < e_frozen && e_model < e_abl,
            fmt("final accumulative rmse: model %.4e, persistence %.4e, diffusion-only %.4e", e_model,
                e_frozen, e_abl) +
                fmt(" (nu %.2e, best epoch %.0f, %.0f s)", best_nu, static_cast<double>(rep.best_epoch), secs)};
  } catch (const std::exception& e) {
    return {false, e.what()};
  }
}

// 8. Every CLI command twice; every output file byte-identical.
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int run_cli(const std::string& args) {
  const std::string cmd = "\"" + g_cli.string() + "\" " + args + " --quiet";
  return std::system(cmd.c_str());
}

Outcome determinism() {
  const fs::path base = g_work / "determinism";
  fs::remove_all(base);
  const std::string set = " --set preset=toy --set train.checkpoint_every=500";
  for (const char* run : {"a", "b"}) {
    const fs::path d = base / run;
    const std::string D = "\"" + d.string() + "\"";
    int rc = run_cli("generate" + set + " --out " + D + "/data");
    rc |= run_cli("train" + set + " --data " + D + "/data --out " + D + "/train");
    rc |= run_cli("predict" + set + " --set predict.csv_snapshots=0,8 --checkpoint " + D +
                  "/train/best.pcck --data " + D + "/data --out " + D + "/predict");
    rc |= run_cli("evaluate" + set + " --pred " + D + "/predict/prediction.pcnf --ref " + D +
                  "/data/reference.pcnf --out " + D + "/evaluate");
    rc |= run_cli("interpret" + set + " --checkpoint " + D + "/train/best.pcck --out " + D + "/interpret");
    if (rc != 0) return {false, std::string("a command failed in run ") + run};
  }
  std::size_t files = 0;
  std::vector<std::string> differ;
  for (const auto& e : fs::recursive_directory_iterator(base / "a")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), base / "a");
    ++files;
    if (!fs::exists(base / "b" / rel) || slurp(e.path()) != slurp(base / "b" / rel))
      differ.push_back(rel.string());
  }
  std::string detail = std::to_string(files) + " files compared";
  for (const auto& d : differ) detail += ", differs: " + d;
  return {differ.empty() && files > 10, detail};
}

// 9. accumulative_rmse against the pooled formula.
Outcome metrics() {
  Rng rng(99);
  double worst = 0.0;
  bool monotone = true;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t T = 2 + trial % 7, C = 1 + trial % 3;
    const Extents ext = trial % 2 ? Extents{5, 6} : Extents{3, 4, 2};
    Trajectory a, b;
    for (std::size_t k = 0; k < T; ++k) {
      a.fields.push_back(random_field(rng, C, ext, -3, 3));
      b.fields.push_back(random_field(rng, C, ext, -3, 3));
    }
    double prev = 0.0;
    for (std::size_t k = 1; k <= T; ++k) {
      double s = 0.0;
      std::size_t cnt = 0;
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < a[i].size(); ++j) {
          const double d = a[i][j] - b[i][j];
          s += d * d;
          ++cnt;
        }
      const double direct = std::sqrt(s / static_cast<double>(cnt));
      const double got = accumulative_rmse(a, b, k);
      worst = std::max(worst, std::abs(got - direct));
      const double acc = got * got * static_cast<double>(k);
      if (acc < prev - 1e-12) monotone = false;
      prev = acc;
    }
  }
  return {worst < 1e-12 && monotone,
          fmt("max deviation %.2e, k*rmse^2 non-decreasing: ", worst) + (monotone ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: acceptance <percnn cli> [work dir] [criteria...]\n");
    return 2;
  }
  g_cli = fs::absolute(argv[1]);
  g_work = argc > 2 ? fs::path(argv[2]) : fs::temp_directory_path() / "percnn_acceptance";
  fs::create_directories(g_work);
  std::set<int> only;
  for (int i = 3; i < argc; ++i) only.insert(std::atoi(argv[i]));

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradient_check},
      {"convolution oracle", conv_oracle},
      {"finite-difference order", fd_order},
      {"gray-scott representability", representability},
      {"diffusion coefficient recovery", diffusion_recovery},
      {"symbolic extraction", extraction},
      {"extrapolation beats baselines", extrapolation},
      {"cli determinism", determinism},
      {"metric correctness", metrics},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] %d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first,
                o.detail.c_str(), s);
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
