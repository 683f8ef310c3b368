#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "percnn/commands.hpp"
#include "percnn/dataset_io.hpp"

using namespace percnn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("percnn_unit_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("defaults follow the burgers reference setup") {
  const RunConfig c;
  CHECK(c.text("preset") == "burgers");
  CHECK(c.grid() == Extents{101, 101});
  CHECK(c.real("solver.dt") == doctest::Approx(2.5e-4));
  CHECK(c.model_dt() == c.real("solver.dt"));
  CHECK(c.training().lr == doctest::Approx(0.002));
  CHECK(c.scale() == "reference");
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("unknown keys and malformed values are rejected") {
  RunConfig c;
  CHECK_THROWS_AS(c.set("train.learning_rate", "0.1"), ConfigError);
  CHECK_THROWS_AS(c.set_assignment("train.lr"), ConfigError);
  CHECK_THROWS_AS(c.set("config_version", "2"), ConfigError);
  CHECK_THROWS_AS(RunConfig::preset("nope"), ConfigError);
  c.set("train.lr", "fast");
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = RunConfig();
  c.set("train.max_epochs", "-3");
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = RunConfig();
  c.set("grid", "64,64,64");
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = RunConfig();
  c.set("train.restarts", "0");
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("setting a preset resets everything else") {
  RunConfig c;
  c.set("train.lr", "0.1");
  c.set("preset", "grayscott-desk");
  CHECK(c.text("system") == "grayscott2d");
  CHECK(c.real("train.lr") == doctest::Approx(0.005));
  CHECK(c.model_dt() == doctest::Approx(1.0));
  CHECK(c.scale() == "scaled");
  c.set("seed", "7");
  CHECK(c.scale() == "scaled");
  c.set("train.lr", "0.004");
  CHECK(c.scale() == "custom");
}

TEST_CASE("every preset validates") {
  for (const auto& name : preset_names()) {
    CAPTURE(name);
    CHECK_NOTHROW(RunConfig::preset(name).validate());
  }
}

TEST_CASE("echo reloads to the same config") {
  RunConfig c = RunConfig::preset("toy");
  c.set("train.lr", "0.03");
  c.set("model.frozen", "0:0:dx:0");
  std::istringstream in(c.echo());
  RunConfig back;
  back.load(in);
  CHECK(back == c);
  CHECK(c.echo().rfind("config_version = 1\npreset = toy\n", 0) == 0);
}

TEST_CASE("config files report the failing line") {
  std::istringstream in("# comment\ntrain.lr = 0.01  # trailing\n\nbogus = 1\n");
  RunConfig c;
  try {
    c.load(in, "run.cfg");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("run.cfg:4") != std::string::npos);
  }
  CHECK(c.real("train.lr") == doctest::Approx(0.01));
  CHECK_THROWS_AS(c.load_file("/nonexistent/percnn.cfg"), IoError);
}

TEST_CASE("seeds derive from one base seed") {
  RunConfig c;
  c.set("seed", "10");
  CHECK(c.ic_seed() == 10);
  CHECK(c.noise_seed() == 11);
  CHECK(c.train_seed() == 12);
  CHECK(c.verify_seed() == 13);
  CHECK(c.training().seed == 12);
}

TEST_CASE("model config from keys") {
  RunConfig c;
  c.set("model.frozen", "0:1:lap:1, 2:0:dy:0");
  c.set("model.highway", "none");
  const ModelConfig m = c.model({51, 51});
  CHECK(m.coarse_grid == Extents{51, 51});
  CHECK(m.highway == Highway::none);
  REQUIRE(m.frozen.size() == 2);
  CHECK(m.frozen[1].layer == 2);
  CHECK(m.frozen[1].role == FilterRole::fixed_dy);
  c.set("model.frozen", "0:1:curl:1");
  CHECK_THROWS_AS(c.model({51, 51}), ConfigError);
}

TEST_CASE("toy pipeline through the command layer") {
  const fs::path dir = scratch("toy");
  RunConfig c = RunConfig::preset("toy");
  c.set("train.max_epochs", "40");
  cmd_generate(c, dir / "data", nullptr);
  for (const char* f : {kReferenceFile, kMeasurementFile, kManifestFile, kConfigEcho})
    CHECK(fs::exists(dir / "data" / f));
  const Measurement m = load_measurement(dir / "data");
  CHECK(m.data.size() == 9);

  const TrainReport r = cmd_train(c, dir / "data", dir / "run", nullptr);
  CHECK(r.epochs.size() == 40);
  CHECK(fs::exists(dir / "run" / "best.pcck"));

  const Trajectory pred = cmd_predict(c, dir / "run" / "best.pcck", dir / "data", dir / "run", nullptr);
  CHECK(pred.size() == 41);
  const ErrorCurve curve = cmd_evaluate(c, dir / "run" / "prediction.pcnf",
                                        dir / "data" / kReferenceFile, dir / "run", nullptr);
  CHECK(curve.size() == 41);
  const auto exprs = cmd_interpret(c, dir / "run" / "best.pcck", dir / "run", nullptr);
  CHECK(exprs.size() == 2);

  SUBCASE("a mismatched model config is refused") {
    RunConfig other = c;
    other.set("model.n_channels", "3");
    CHECK_THROWS_AS(cmd_predict(other, dir / "run" / "best.pcck", dir / "data", dir / "p2", nullptr),
                    ShapeError);
    CHECK(config_mismatch(c.model(m.data[0].extents()), other.model(m.data[0].extents())) != "");
  }
  SUBCASE("restarts keep the lowest loss and cannot resume") {
    RunConfig multi = c;
    multi.set("train.restarts", "2");
    multi.set("train.max_epochs", "10");
    const TrainReport rr = cmd_train(multi, dir / "data", dir / "multi", nullptr);
    CHECK(fs::exists(dir / "multi" / "restart_0" / "train_log.csv"));
    CHECK(fs::exists(dir / "multi" / "restart_1" / "train_log.csv"));
    RunConfig one = c;
    one.set("train.max_epochs", "10");
    // restart i trains exactly like a single run whose base seed is shifted by i
    for (std::size_t i = 0; i < 2; ++i) {
      one.set("seed", std::to_string(c.seed() + i));
      const TrainReport single = cmd_train(one, dir / "data", dir / ("one" + std::to_string(i)), nullptr);
      CHECK(rr.best_val_loss <= single.best_val_loss);
    }
    CHECK_THROWS_AS(cmd_train(multi, dir / "data", dir / "m2", nullptr, dir / "x.pcts"), ConfigError);
  }
  fs::remove_all(dir);
}
