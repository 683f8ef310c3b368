#include "percnn/run_config.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace percnn {

namespace {

const std::vector<ConfigKey> kKeys = {
    {"config_version", "1", "format version of this file"},
    {"preset", "burgers", "starting point; setting it resets all other keys"},
    {"seed", "0", "base seed: ic = seed, noise = seed+1, training = seed+2, verify = seed+3"},

    {"system", "burgers2d", "burgers2d | grayscott2d | grayscott3d"},
    {"generator", "pde", "pde (finite-difference solver) | teacher (a known PeRCNN)"},
    {"pde.nu", "0.005", "Burgers viscosity"},
    {"pde.mu_u", "0.2", "Gray-Scott diffusion of u"},
    {"pde.mu_v", "0.1", "Gray-Scott diffusion of v"},
    {"pde.kappa", "0.055", "Gray-Scott kill rate"},
    {"pde.feed", "0.025", "Gray-Scott feed rate"},
    {"domain.lo", "-0.5", "lower bound of every axis"},
    {"domain.hi", "0.5", "upper bound of every axis"},
    {"grid", "101,101", "full-resolution extents (array axis order)"},
    {"solver.dt", "2.5e-4", "reference time step"},
    {"solver.steps", "1600", "reference steps after the initial state"},
    {"ic.modes", "3", "Burgers: largest Fourier wavenumber of the initial field"},
    {"ic.amplitude", "1", "Burgers: peak magnitude of the initial field"},
    {"ic.noise", "0.01", "Gray-Scott: std of the noise on the initial state"},
    {"teacher.seed", "100", "teacher generator: seed of its random parameters"},
    {"teacher.scale", "10", "teacher generator: factor on its Pi-block weights and biases"},
    {"teacher.diff", "0.02,0.01", "teacher generator: diffusion coefficient per channel"},

    {"measure.spatial_stride", "2", "fine nodes per coarse node on every axis"},
    {"measure.temporal_stride", "40", "reference steps per measurement snapshot"},
    {"measure.noise", "0.1", "Gaussian noise std relative to each channel's std"},

    {"model.n_parallel", "4", "parallel conv layers in the Pi-block"},
    {"model.filter_size", "5", "parallel-layer filter size (1, 3 or 5)"},
    {"model.n_channels", "8", "feature channels per parallel layer"},
    {"model.isg_channels", "8", "hidden channels of the initial-state generator"},
    {"model.isg_filter_size", "5", "filter size of the initial-state generator"},
    {"model.dt", "auto", "model time step; auto = solver.dt"},
    {"model.bc", "periodic", "periodic | dirichlet | neumann"},
    {"model.bc_values", "", "boundary values for dirichlet/neumann padding"},
    {"model.highway", "diffusion", "diffusion | none"},
    {"model.pointwise_free", "false", "free parallel filters keep only their centre tap"},
    {"model.frozen", "", "frozen filters as layer:channel:role:state_channel, comma separated"},

    {"train.snapshots", "11", "measurement snapshots in the training window (0 = all)"},
    {"train.validation", "2", "last snapshots of the window held out for early stopping"},
    {"train.lr", "0.002", "Adam learning rate"},
    {"train.lambda", "1", "weight of the initial-state term"},
    {"train.max_epochs", "5000", "epoch limit"},
    {"train.patience", "200", "epochs without validation improvement before stopping"},
    {"train.lr_decay", "1", "learning-rate factor applied after every epoch"},
    {"train.window_warmup", "0", "epochs per warm-up stage growing the supervised window (0 = off)"},
    {"train.restarts", "1", "independent initialisations; the lowest best loss is kept"},
    {"train.checkpoint_every", "0", "write a resumable checkpoint every N epochs (0 = never)"},
    {"train.log_wall_clock", "false", "record real epoch timings (breaks byte reproducibility)"},

    {"predict.steps", "auto", "model steps to roll out; auto = the reference horizon"},
    {"predict.csv_snapshots", "", "snapshot indices also exported as CSV grids"},
    {"evaluate.train_end", "auto", "last snapshot index of the training window; auto = from train.snapshots"},
    {"interpret.threshold", "0.05", "prune terms with smaller |coefficient|"},
    {"interpret.samples", "100", "random states used to verify the expansion"},
};

using Overrides = std::vector<std::pair<const char*, const char*>>;

const std::map<std::string, Overrides>& presets() {
  static const std::map<std::string, Overrides> p = {
      {"burgers", {}},
      {"burgers-desk",
       {{"grid", "64,64"},
        {"solver.steps", "400"},
        {"measure.temporal_stride", "20"},
        {"model.n_parallel", "3"},
        {"model.n_channels", "4"},
        {"model.isg_channels", "4"},
        {"model.isg_filter_size", "3"},
        {"train.lr", "0.005"},
        {"train.max_epochs", "600"},
        {"train.patience", "600"}}},
      {"grayscott3d",
       {{"system", "grayscott3d"},
        {"domain.lo", "-50"},
        {"domain.hi", "50"},
        {"grid", "49,49,49"},
        {"solver.dt", "0.5"},
        {"solver.steps", "1500"},
        {"measure.temporal_stride", "15"},
        {"model.n_parallel", "3"},
        {"model.filter_size", "1"},
        {"model.n_channels", "4"},
        {"model.isg_channels", "4"},
        {"model.isg_filter_size", "3"},
        {"train.snapshots", "21"},
        {"train.lr", "0.005"},
        {"train.lambda", "0.5"}}},
      {"grayscott-desk",
       {{"system", "grayscott2d"},
        {"domain.lo", "-32"},
        {"domain.hi", "32"},
        {"grid", "32,32"},
        {"solver.dt", "0.5"},
        {"solver.steps", "600"},
        {"measure.spatial_stride", "1"},
        {"measure.temporal_stride", "30"},
        {"measure.noise", "0"},
        {"model.n_parallel", "3"},
        {"model.filter_size", "1"},
        {"model.n_channels", "4"},
        {"model.isg_channels", "4"},
        {"model.isg_filter_size", "1"},
        {"model.dt", "1"},
        {"train.snapshots", "11"},
        {"train.validation", "0"},
        {"train.lr", "0.005"},
        {"train.lambda", "0.5"},
        {"train.lr_decay", "0.999"},
        {"train.window_warmup", "100"},
        {"train.max_epochs", "3000"},
        {"train.patience", "3000"},
        {"train.restarts", "3"}}},
      {"toy",
       {{"generator", "teacher"},
        {"domain.lo", "0"},
        {"domain.hi", "1.6"},
        {"grid", "16,16"},
        {"solver.dt", "0.01"},
        {"solver.steps", "40"},
        {"measure.spatial_stride", "1"},
        {"measure.temporal_stride", "5"},
        {"measure.noise", "0"},
        {"model.n_parallel", "2"},
        {"model.filter_size", "1"},
        {"model.n_channels", "2"},
        {"model.isg_channels", "2"},
        {"model.isg_filter_size", "1"},
        {"train.snapshots", "0"},
        {"train.lr", "0.01"},
        {"train.lr_decay", "0.999"},
        {"train.max_epochs", "2000"},
        {"train.patience", "2000"},
        {"seed", "1"}}},
  };
  return p;
}

bool known_key(const std::string& key) {
  return std::any_of(kKeys.begin(), kKeys.end(), [&](const ConfigKey& k) { return key == k.name; });
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

double parse_real(const std::string& key, const std::string& s) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v))
    throw ConfigError(key + ": '" + s + "' is not a finite number");
  return v;
}

std::int64_t parse_integer(const std::string& key, const std::string& s) {
  errno = 0;
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE)
    throw ConfigError(key + ": '" + s + "' is not an integer");
  return v;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() { return kKeys; }

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const auto& [name, o] : presets()) out.push_back(name);
  return out;
}

RunConfig::RunConfig() {
  for (const auto& k : kKeys) values_[k.name] = k.default_value;
}

RunConfig RunConfig::preset(const std::string& name) {
  const auto it = presets().find(name);
  if (it == presets().end()) throw ConfigError("unknown preset '" + name + "'");
  RunConfig c;
  c.values_["preset"] = name;
  for (const auto& [k, v] : it->second) c.values_[k] = v;
  return c;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!known_key(key)) throw ConfigError("unknown config key '" + key + "'");
  if (key == "preset") {
    *this = preset(value);
    return;
  }
  if (key == "config_version" && value != std::to_string(kConfigVersion))
    throw ConfigError("unsupported config_version " + value);
  values_[key] = value;
}

void RunConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::load(std::istream& is, const std::string& origin) {
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    try {
      set_assignment(line);
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path.string());
  load(is, path.string());
}

std::string RunConfig::echo() const {
  std::string out;
  // preset first: loading it resets everything else.
  out += "config_version = " + values_.at("config_version") + "\n";
  out += "preset = " + values_.at("preset") + "\n";
  for (const auto& k : kKeys) {
    const std::string name = k.name;
    if (name == "config_version" || name == "preset") continue;
    out += name + " = " + values_.at(name) + "\n";
  }
  return out;
}

const std::string& RunConfig::text(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::real(const std::string& key) const { return parse_real(key, text(key)); }

std::int64_t RunConfig::integer(const std::string& key) const {
  return parse_integer(key, text(key));
}

std::size_t RunConfig::count(const std::string& key) const {
  const std::int64_t v = integer(key);
  if (v < 0) throw ConfigError(key + " must be non-negative");
  return static_cast<std::size_t>(v);
}

bool RunConfig::flag(const std::string& key) const {
  const std::string& v = text(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::size_t> RunConfig::counts(const std::string& key) const {
  std::vector<std::size_t> out;
  for (const auto& item : split(text(key), ',')) {
    const std::int64_t v = parse_integer(key, item);
    if (v < 0) throw ConfigError(key + " entries must be non-negative");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::vector<double> RunConfig::reals(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split(text(key), ',')) out.push_back(parse_real(key, item));
  return out;
}

std::string RunConfig::scale() const {
  RunConfig base = preset(text("preset"));
  base.values_["seed"] = values_.at("seed");
  if (base != *this) return "custom";
  const std::string& p = text("preset");
  return p == "burgers" || p == "grayscott3d" ? "reference" : "scaled";
}

PdeSystem RunConfig::system() const {
  PdeSystem s;
  try {
    s.kind = system_kind_from_string(text("system"));
  } catch (const SpecError& e) {
    throw ConfigError(std::string("system: ") + e.what());
  }
  s.params.nu = real("pde.nu");
  s.params.mu_u = real("pde.mu_u");
  s.params.mu_v = real("pde.mu_v");
  s.params.kappa = real("pde.kappa");
  s.params.feed = real("pde.feed");
  s.domain.assign(s.rank(), {real("domain.lo"), real("domain.hi")});
  return s;
}

Extents RunConfig::grid() const {
  Extents g = counts("grid");
  if (g.size() != system().rank())
    throw ConfigError("grid has " + std::to_string(g.size()) + " axes but " + text("system") +
                      " needs " + std::to_string(system().rank()));
  return g;
}

double RunConfig::model_dt() const {
  return text("model.dt") == "auto" ? real("solver.dt") : real("model.dt");
}

ModelConfig RunConfig::model(const Extents& coarse_grid) const {
  ModelConfig c;
  c.state_channels = 2;
  c.grid = grid();
  c.spacing = system().spacing(c.grid);
  c.coarse_grid = coarse_grid;
  c.n_parallel = count("model.n_parallel");
  c.filter_size = count("model.filter_size");
  c.n_channels = count("model.n_channels");
  c.isg_channels = count("model.isg_channels");
  c.isg_filter_size = count("model.isg_filter_size");
  c.dt = model_dt();
  try {
    c.bc = pad_mode_from_string(text("model.bc"));
  } catch (const SpecError& e) {
    throw ConfigError(std::string("model.bc: ") + e.what());
  }
  c.bc_values = reals("model.bc_values");
  const std::string& hw = text("model.highway");
  if (hw == "diffusion")
    c.highway = Highway::diffusion;
  else if (hw == "none")
    c.highway = Highway::none;
  else
    throw ConfigError("model.highway: expected diffusion or none, got '" + hw + "'");
  c.pointwise_free = flag("model.pointwise_free");
  for (const auto& entry : split(text("model.frozen"), ',')) {
    const auto parts = split(entry, ':');
    if (parts.size() != 4)
      throw ConfigError("model.frozen: expected layer:channel:role:state_channel, got '" +
                        entry + "'");
    FrozenFilter f;
    f.layer = static_cast<std::size_t>(parse_integer("model.frozen", parts[0]));
    f.channel = static_cast<std::size_t>(parse_integer("model.frozen", parts[1]));
    try {
      f.role = filter_role_from_string(parts[2]);
    } catch (const SpecError& e) {
      throw ConfigError(std::string("model.frozen: ") + e.what());
    }
    f.state_channel = static_cast<std::size_t>(parse_integer("model.frozen", parts[3]));
    c.frozen.push_back(f);
  }
  return c;
}

TrainConfig RunConfig::training() const {
  TrainConfig t;
  t.lr = real("train.lr");
  t.lambda = real("train.lambda");
  t.max_epochs = count("train.max_epochs");
  t.patience = count("train.patience");
  t.seed = train_seed();
  t.validation_snapshots = count("train.validation");
  t.lr_decay = real("train.lr_decay");
  t.window_warmup = count("train.window_warmup");
  t.checkpoint_every = count("train.checkpoint_every");
  t.log_wall_clock = flag("train.log_wall_clock");
  return t;
}

void RunConfig::validate() const {
  const PdeSystem s = system();
  const Extents g = grid();
  try {
    s.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  const std::string& gen = text("generator");
  if (gen != "pde" && gen != "teacher")
    throw ConfigError("generator: expected pde or teacher, got '" + gen + "'");
  if (!(real("solver.dt") > 0.0)) throw ConfigError("solver.dt must be positive");
  count("solver.steps");
  count("ic.modes");
  real("ic.amplitude");
  if (real("ic.noise") < 0.0) throw ConfigError("ic.noise must be non-negative");
  count("teacher.seed");
  real("teacher.scale");
  if (reals("teacher.diff").size() != 2) throw ConfigError("teacher.diff needs two values");
  if (count("measure.spatial_stride") == 0) throw ConfigError("measure.spatial_stride must be >= 1");
  if (count("measure.temporal_stride") == 0)
    throw ConfigError("measure.temporal_stride must be >= 1");
  if (real("measure.noise") < 0.0) throw ConfigError("measure.noise must be non-negative");
  const std::size_t stride = count("measure.spatial_stride");
  Extents coarse;
  try {
    coarse = coarse_extents(g, std::vector<std::size_t>(g.size(), stride));
    model(coarse).validate();
    training().validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  count("train.snapshots");
  if (count("train.restarts") == 0) throw ConfigError("train.restarts must be >= 1");
  if (text("predict.steps") != "auto") count("predict.steps");
  counts("predict.csv_snapshots");
  if (text("evaluate.train_end") != "auto") count("evaluate.train_end");
  if (real("interpret.threshold") < 0.0) throw ConfigError("interpret.threshold must be >= 0");
  count("interpret.samples");
}

}  // namespace percnn
