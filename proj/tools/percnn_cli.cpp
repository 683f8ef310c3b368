// percnn: generate | train | predict | evaluate | interpret | config
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "percnn/commands.hpp"

using namespace percnn;

namespace {

enum Exit { kOk = 0, kConfig = 2, kDivergence = 3, kIo = 4 };

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out = ".";
  long long seed = -1;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c, bool needs_out = true) {
  cmd->add_option("--config", c.config_path, "key = value config file");
  cmd->add_option("--set", c.sets, "override one key (K=V, repeatable)");
  if (needs_out) cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--seed", c.seed, "base seed");
  cmd->add_flag("--quiet", c.quiet, "no progress output");
}

RunConfig build_config(const Common& c) {
  RunConfig cfg;
  if (!c.config_path.empty()) cfg.load_file(c.config_path);
  for (const auto& s : c.sets) cfg.set_assignment(s);
  if (c.seed >= 0) cfg.set("seed", std::to_string(c.seed));
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PeRCNN laboratory: data generation, training, prediction, evaluation and equation extraction"};
  app.require_subcommand(1);

  Common common;
  std::string data, checkpoint, resume, pred, ref;
  bool list_keys = false;

  auto* gen = app.add_subcommand("generate", "solve the reference PDE and sample measurements");
  add_common(gen, common);

  auto* trn = app.add_subcommand("train", "fit a model to a dataset directory");
  add_common(trn, common);
  trn->add_option("--data", data, "dataset directory from generate")->required();
  trn->add_option("--resume", resume, "continue from an epoch_NNNNNN.pcts state");

  auto* prd = app.add_subcommand("predict", "roll a trained model out from the first measurement");
  add_common(prd, common);
  prd->add_option("--checkpoint", checkpoint, "model checkpoint (.pcck)")->required();
  prd->add_option("--data", data, "dataset directory from generate")->required();

  auto* evl = app.add_subcommand("evaluate", "accumulative RMSE of a prediction against a reference");
  add_common(evl, common);
  evl->add_option("--pred", pred, "prediction file (.pcnf)")->required();
  evl->add_option("--ref", ref, "reference file (.pcnf)")->required();

  auto* itp = app.add_subcommand("interpret", "extract the learned equation");
  add_common(itp, common);
  itp->add_option("--checkpoint", checkpoint, "model checkpoint (.pcck)")->required();

  auto* cfg_cmd = app.add_subcommand("config", "print the effective configuration");
  add_common(cfg_cmd, common, false);
  cfg_cmd->add_flag("--keys", list_keys, "list every key with its default and meaning");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  std::ostream* progress = common.quiet ? nullptr : &std::cerr;
  try {
    const RunConfig cfg = build_config(common);
    if (*gen) {
      cmd_generate(cfg, common.out, progress);
    } else if (*trn) {
      cmd_train(cfg, data, common.out, progress, resume);
    } else if (*prd) {
      cmd_predict(cfg, checkpoint, data, common.out, progress);
    } else if (*evl) {
      cmd_evaluate(cfg, pred, ref, common.out, progress);
    } else if (*itp) {
      cmd_interpret(cfg, checkpoint, common.out, progress);
    } else if (*cfg_cmd) {
      if (list_keys) {
        for (const auto& k : config_keys())
          std::cout << k.name << " = " << k.default_value << "    # " << k.doc << '\n';
        std::cout << "# presets:";
        for (const auto& p : preset_names()) std::cout << ' ' << p;
        std::cout << '\n';
      } else {
        std::cout << cfg.echo();
      }
    }
  } catch (const DivergenceError& e) {
    std::cerr << "percnn: diverged: " << e.what() << '\n';
    return kDivergence;
  } catch (const IoError& e) {
    std::cerr << "percnn: i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const Error& e) {
    std::cerr << "percnn: " << e.what() << '\n';
    return kConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "percnn: i/o error: " << e.what() << '\n';
    return kIo;
  }
  return kOk;
}
