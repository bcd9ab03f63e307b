// boltzseg command line: train, eval, viz-sampling, bench, ablate, gen-data.

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "boltzseg/commands.hpp"
#include "boltzseg/errors.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

std::string default_out(const std::string& command) {
  const char* root = std::getenv("BOLTZSEG_OUT_ROOT");
  return std::string(root ? root : "out") + "/" + command;
}

boltzseg::RunConfig resolve_config(const std::string& config_path,
                                   const std::vector<std::string>& sets,
                                   bool has_seed, uint64_t seed) {
  boltzseg::RunConfig cfg = config_path.empty()
                                ? boltzseg::RunConfig::defaults()
                                : boltzseg::RunConfig::from_file(config_path);
  for (const auto& s : sets) cfg.apply_override(s);
  if (has_seed) cfg.set_global_seed(seed);
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Boltzmann-sampled sparse-attention segmentation workbench"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint, split = "test", axis;
  std::vector<std::string> sets;
  std::vector<std::string> policies = {"full", "threshold", "boltzmann"};
  uint64_t seed = 0;
  bool no_pixel_correction = false;
  int example_index = 0;
  int n_examples = 100;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Configuration file");
    cmd->add_option("--set", sets, "Override: section.key=value")->take_all();
    cmd->add_option("--out", out_dir, "Output directory");
    cmd->add_option("--seed", seed, "Sets sampler, train and data seeds at once");
    cmd->add_flag("--no-pixel-correction", no_pixel_correction,
                  "Disable the pixel-grounded correction (query ensemble only)");
  };

  CLI::App* train = app.add_subcommand("train", "Train a model");
  add_common(train);

  CLI::App* eval = app.add_subcommand("eval", "Stratified Dice on a split");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint path")->required();
  eval->add_option("--split", split, "train|val|test");
  eval->add_option("--out", out_dir, "Output directory");

  CLI::App* viz = app.add_subcommand("viz-sampling", "Per-layer sampling traces");
  viz->add_option("--checkpoint", checkpoint, "Checkpoint path")->required();
  viz->add_option("--example", example_index, "Test-split example index");
  viz->add_option("--out", out_dir, "Output directory");

  CLI::App* bench = app.add_subcommand("bench", "Attention-compute accounting");
  add_common(bench);
  bench->add_option("--checkpoint", checkpoint, "Optional checkpoint (else fresh init)");
  bench->add_option("--policies", policies, "Policies to compare")->take_all();
  bench->add_option("--examples", n_examples, "Forward passes per policy");

  CLI::App* ablate = app.add_subcommand("ablate", "Ablation grid over one axis");
  add_common(ablate);
  ablate->add_option("--axis", axis,
                     "tau0|ratio|queries|text_prior|pigma_correction|policy")
      ->required();

  CLI::App* gendata = app.add_subcommand("gen-data", "Write the synthetic corpus");
  add_common(gendata);
  gendata->add_option("--split", split, "train|val|test");

  CLI11_PARSE(app, argc, argv);

  try {
    bool has_seed = train->count("--seed") || bench->count("--seed") ||
                    ablate->count("--seed") || gendata->count("--seed");
    if (no_pixel_correction) sets.push_back("pigma.correction=off");

    if (train->parsed()) {
      if (out_dir.empty()) out_dir = default_out("train");
      auto cfg = resolve_config(config_path, sets, has_seed, seed);
      auto result = boltzseg::cmd_train(cfg, out_dir);
      std::printf("trained %d epochs (best epoch %d, val loss %.6g) -> %s\n",
                  result.epochs_run, result.best_epoch, result.best_val_loss,
                  out_dir.c_str());
    } else if (eval->parsed()) {
      if (out_dir.empty()) out_dir = default_out("eval");
      auto dice = boltzseg::cmd_eval(checkpoint, split, out_dir);
      std::printf("dice %s: small %.4f (n=%d)  large %.4f (n=%d)  all %.4f (n=%d)\n",
                  split.c_str(), dice.small.mean, dice.small.n, dice.large.mean,
                  dice.large.n, dice.all.mean, dice.all.n);
    } else if (viz->parsed()) {
      if (out_dir.empty()) out_dir = default_out("viz");
      boltzseg::cmd_viz_sampling(checkpoint, example_index, out_dir);
      std::printf("sampling traces -> %s\n", out_dir.c_str());
    } else if (bench->parsed()) {
      if (out_dir.empty()) out_dir = default_out("bench");
      auto cfg = resolve_config(config_path, sets, has_seed, seed);
      auto report = boltzseg::cmd_bench(cfg, checkpoint, policies, n_examples, out_dir);
      for (const auto& pr : report.policies)
        std::printf("%-10s %12.1f pairs/forward  %6.2fx reduction  %8.3f ms\n",
                    pr.policy.c_str(), pr.pairs_mean_per_forward,
                    pr.reduction_vs_full, pr.wallclock_ms_per_forward);
    } else if (ablate->parsed()) {
      if (out_dir.empty()) out_dir = default_out("ablate");
      auto cfg = resolve_config(config_path, sets, has_seed, seed);
      auto rows = boltzseg::cmd_ablate(cfg, axis, out_dir);
      for (const auto& r : rows)
        std::printf("%s=%s  small %.4f  large %.4f  all %.4f\n", r.axis.c_str(),
                    r.value.c_str(), r.dice.small.mean, r.dice.large.mean,
                    r.dice.all.mean);
    } else if (gendata->parsed()) {
      if (out_dir.empty()) out_dir = default_out("gen-data");
      auto cfg = resolve_config(config_path, sets, has_seed, seed);
      boltzseg::cmd_gendata(cfg, split, out_dir);
      std::printf("%s split -> %s\n", split.c_str(), out_dir.c_str());
    }
  } catch (const boltzseg::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const boltzseg::InvalidArgument& e) {
    std::fprintf(stderr, "invalid argument: %s\n", e.what());
    return kExitConfig;
  } catch (const boltzseg::NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumerical;
  } catch (const boltzseg::IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
