#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "percnn/evaluation.hpp"
#include "percnn/interpret.hpp"
#include "percnn/run_config.hpp"
#include "percnn/training.hpp"

namespace percnn {

namespace fs = std::filesystem;

/// Dataset directory layout written by cmd_generate.
inline constexpr const char* kReferenceFile = "reference.pcnf";
inline constexpr const char* kMeasurementFile = "measurement.pcnf";
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kConfigEcho = "config.txt";

/// Measurement plus its sampling map, read back from a dataset directory.
Measurement load_measurement(const fs::path& dataset_dir);

/// Empty when the structural fields agree, otherwise one line per difference.
std::string config_mismatch(const ModelConfig& expected, const ModelConfig& actual,
                            bool compare_coarse_grid = true);

/// `progress` receives human-readable status lines; pass nullptr for silence.
void cmd_generate(const RunConfig& cfg, const fs::path& out, std::ostream* progress);
TrainReport cmd_train(const RunConfig& cfg, const fs::path& dataset_dir, const fs::path& out,
                      std::ostream* progress, const fs::path& resume = {});
Trajectory cmd_predict(const RunConfig& cfg, const fs::path& checkpoint,
                       const fs::path& dataset_dir, const fs::path& out, std::ostream* progress);
ErrorCurve cmd_evaluate(const RunConfig& cfg, const fs::path& prediction,
                        const fs::path& reference, const fs::path& out, std::ostream* progress);
std::vector<PolyExpr> cmd_interpret(const RunConfig& cfg, const fs::path& checkpoint,
                                    const fs::path& out, std::ostream* progress);

}  // namespace percnn
