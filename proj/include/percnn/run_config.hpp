#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "percnn/fd_solver.hpp"
#include "percnn/model.hpp"
#include "percnn/training.hpp"

namespace percnn {

inline constexpr int kConfigVersion = 1;

struct ConfigKey {
  const char* name;
  const char* default_value;
  const char* doc;
};

/// Every recognised key with its default and a one-line description.
const std::vector<ConfigKey>& config_keys();
std::vector<std::string> preset_names();

/// Flat `key = value` run configuration. Unknown keys are rejected; setting
/// `preset` resets every other key to that preset's values.
class RunConfig {
 public:
  RunConfig();
  static RunConfig preset(const std::string& name);

  void set(const std::string& key, const std::string& value);
  /// "key=value"
  void set_assignment(const std::string& assignment);
  /// One assignment per line, '#' starts a comment.
  void load(std::istream& is, const std::string& origin = "<config>");
  void load_file(const std::filesystem::path& path);
  /// Every key in declaration order; loading this text reproduces the config.
  std::string echo() const;

  const std::string& text(const std::string& key) const;
  double real(const std::string& key) const;
  std::int64_t integer(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<std::size_t> counts(const std::string& key) const;
  std::vector<double> reals(const std::string& key) const;

  std::uint64_t seed() const { return static_cast<std::uint64_t>(count("seed")); }
  std::uint64_t ic_seed() const { return seed(); }
  std::uint64_t noise_seed() const { return seed() + 1; }
  std::uint64_t train_seed() const { return seed() + 2; }
  std::uint64_t verify_seed() const { return seed() + 3; }

  /// "reference", "scaled" or "custom".
  std::string scale() const;
  PdeSystem system() const;
  Extents grid() const;
  double model_dt() const;
  ModelConfig model(const Extents& coarse_grid) const;
  TrainConfig training() const;
  /// Parses every value once so mistakes surface before any work starts.
  void validate() const;

  bool operator==(const RunConfig&) const = default;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace percnn
