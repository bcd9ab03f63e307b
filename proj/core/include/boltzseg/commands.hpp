#pragma once

#include <string>
#include <vector>

#include "boltzseg/config.hpp"

namespace boltzseg {

// Attention-compute accounting for one policy over a batch of forwards.
struct PolicyReport {
  std::string policy;
  std::vector<int64_t> pairs_per_layer;  // summed over forwards
  int64_t pairs_total = 0;
  double pairs_mean_per_forward = 0.0;
  double reduction_vs_full = 0.0;  // analytic full count / measured count
  double wallclock_ms_per_forward = 0.0;  // reported outside the CSV
};

struct ComputeReport {
  int64_t full_pairs_per_forward = 0;  // sum_l m * N_v(l), exact
  int forwards = 0;
  std::vector<PolicyReport> policies;
};

// Per-command entry points; all throw boltzseg errors (the CLI maps them to
// exit codes). Each writes resolved.cfg into out_dir.
TrainResult cmd_train(const RunConfig& cfg, const std::string& out_dir);

StratifiedDice cmd_eval(const std::string& checkpoint, const std::string& split,
                        const std::string& out_dir);

void cmd_viz_sampling(const std::string& checkpoint, int example_index,
                      const std::string& out_dir);

ComputeReport cmd_bench(const RunConfig& cfg, const std::string& checkpoint,
                        const std::vector<std::string>& policies, int n_examples,
                        const std::string& out_dir);

// Ablation axes: tau0, ratio, queries, text_prior, pigma_correction, policy.
struct AblationRow {
  std::string axis;
  std::string value;
  StratifiedDice dice;
};
std::vector<AblationRow> cmd_ablate(const RunConfig& base, const std::string& axis,
                                    const std::string& out_dir);

void cmd_gendata(const RunConfig& cfg, const std::string& split,
                 const std::string& out_dir);

// Shared helpers.
void ensure_dir(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);
uint32_t split_base(const std::string& split);
int split_count(const RunConfig& cfg, const std::string& split);

// Mean fraction of sampled cells inside the dilated target, per layer,
// averaged over `count` test examples (query 0). Drives the
// exploration-to-exploitation checks.
std::vector<double> sampling_target_alignment(const Model& model,
                                              const SceneConfig& data_cfg,
                                              uint32_t first_index, int count);

Model load_model(const std::string& checkpoint, RunConfig& cfg_out);

}  // namespace boltzseg
