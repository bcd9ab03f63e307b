#pragma once

#include <functional>
#include <string>
#include <vector>

#include "boltzseg/model.hpp"
#include "boltzseg/synthdata.hpp"

namespace boltzseg {

struct TrainConfig {
  double lr = 2e-4;
  double weight_decay = 1e-2;
  int batch_size = 16;
  int max_epochs = 30;
  int patience = 4;        // epochs without val-loss improvement before stopping
  double augment_prob = 0.5;
  uint64_t seed = 0;       // parameters, shuffling, augmentation
  int threads = 2;
  int train_count = 8000;
  int val_count = 1000;
  int test_count = 1000;

  void validate() const;
};

struct EpochRow {
  int epoch = 0;
  std::string split;  // "train" or "val"
  double loss_dice = 0.0;
  double loss_bce = 0.0;
  double dice_small = 0.0;
  double dice_large = 0.0;
  double dice_all = 0.0;
  double attended_pairs_mean = 0.0;
};

struct StratumStats {
  double mean = 0.0;
  double std_err = 0.0;
  int n = 0;
};

struct StratifiedDice {
  StratumStats small, large, all;  // small: area < 1%, large: area >= 1%
};

struct TrainResult {
  std::vector<EpochRow> rows;
  int best_epoch = -1;
  double best_val_loss = 0.0;
  int epochs_run = 0;
  bool early_stopped = false;
};

// CSV header shared by the metrics log and eval outputs.
extern const char* kMetricsCsvHeader;
std::string metrics_csv_row(const EpochRow& row);

// Trains with AdamW on dice+bce, early stopping on validation loss, and the
// best-epoch checkpoint written to checkpoint_path (config_text embedded).
// on_epoch, when set, fires after each epoch with (train row, val row).
TrainResult train_model(Model& model, const SceneConfig& data_cfg,
                        const TrainConfig& tcfg, const std::string& checkpoint_path,
                        const std::string& config_text,
                        const std::function<void(const EpochRow&, const EpochRow&)>&
                            on_epoch = nullptr);

// Mean Dice (with standard error) per object-size stratum.
StratifiedDice evaluate_stratified(const Model& model, const SceneConfig& data_cfg,
                                   uint32_t first_index, int count, int threads);

// Per-example Dice scores in index order (helper for eval outputs).
std::vector<double> per_example_dice(const Model& model, const SceneConfig& data_cfg,
                                     uint32_t first_index, int count, int threads);

}  // namespace boltzseg
