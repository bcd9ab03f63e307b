#include "boltzseg/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <thread>

#include "boltzseg/errors.hpp"
#include "boltzseg/losses.hpp"

namespace boltzseg {

const char* kMetricsCsvHeader =
    "epoch,split,loss_dice,loss_bce,dice_small,dice_large,dice_all,"
    "attended_pairs_mean\n";

std::string metrics_csv_row(const EpochRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%s,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                r.epoch, r.split.c_str(), r.loss_dice, r.loss_bce, r.dice_small,
                r.dice_large, r.dice_all, r.attended_pairs_mean);
  return buf;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("train: lr must be > 0");
  if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("train: patience must be >= 1");
  if (!(augment_prob >= 0.0 && augment_prob <= 1.0))
    throw ConfigError("train: augment_prob must be in [0, 1]");
  if (threads < 1) throw ConfigError("train: threads must be >= 1");
  if (train_count < 1 || val_count < 1 || test_count < 1)
    throw ConfigError("train: split counts must be >= 1");
  if (train_count > static_cast<int>(kValBase))
    throw ConfigError("train: train_count must be <= 8000");
  if (val_count > static_cast<int>(kTestBase - kValBase))
    throw ConfigError("train: val_count must be <= 1000");
}

namespace {

constexpr double kSmallStratum = 0.01;

struct ExampleStats {
  double loss_dice = 0.0;
  double loss_bce = 0.0;
  double dice = 0.0;
  double area_ratio = 0.0;
  int64_t attended_pairs = 0;
};

struct StratumAccum {
  std::vector<double> values;
  void add(double v) { values.push_back(v); }
  StratumStats stats() const {
    StratumStats s;
    s.n = static_cast<int>(values.size());
    if (s.n == 0) return s;
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / s.n;
    double var = 0.0;
    for (double v : values) var += (v - s.mean) * (v - s.mean);
    var = s.n > 1 ? var / (s.n - 1) : 0.0;
    s.std_err = std::sqrt(var / s.n);
    return s;
  }
};

StratifiedDice stratify(const std::vector<std::pair<double, double>>& area_dice) {
  StratumAccum small, large, all;
  for (const auto& [area, dice] : area_dice) {
    all.add(dice);
    if (area < kSmallStratum)
      small.add(dice);
    else
      large.add(dice);
  }
  StratifiedDice out;
  out.small = small.stats();
  out.large = large.stats();
  out.all = all.stats();
  return out;
}

// Per-worker model replica; values refreshed from the master before each
// parallel section, gradients reduced back in worker order.
struct Replica {
  explicit Replica(const Model& master)
      : model(master.config(), master.store().seed()) {
    model.store().copy_values_from(master.store());
  }
  void refresh(const Model& master) {
    model.store().copy_values_from(master.store());
  }
  Model model;
};

uint32_t forward_stream_id(int epoch, uint32_t index) {
  return static_cast<uint32_t>(epoch + 1) * 100000u + index;
}

ExampleStats run_train_example(const Model& model, const SceneConfig& data_cfg,
                               const TrainConfig& tcfg, int epoch, uint32_t index,
                               bool backward) {
  Example ex = generate_example(data_cfg, index);
  RngStream aug_rng(tcfg.seed, RngTag::kAugment, index, static_cast<uint32_t>(epoch));
  auto [image, mask] = augment(ex.image, ex.target_mask, aug_rng, tcfg.augment_prob);

  Tape tape;
  ModelForward fwd = model.forward_loss(tape, image, ex.prompt_id, mask,
                                        forward_stream_id(epoch, index), false);
  if (backward) tape.backward(fwd.loss);

  ExampleStats st;
  st.loss_dice = fwd.loss_dice;
  st.loss_bce = fwd.loss_bce;
  st.attended_pairs = fwd.decoder.trace.total_attended_pairs();
  double area = 0.0;
  for (double v : mask.data) area += v;
  st.area_ratio = area / static_cast<double>(mask.data.size());
  SpatialField probs = field_from_tensor(*fwd.probs);
  SpatialField tgt = resize_nearest(mask, probs.height, probs.width);
  st.dice = dice_score(probs, tgt);
  return st;
}

ExampleStats run_eval_example(const Model& model, const SceneConfig& data_cfg,
                              uint32_t index) {
  Example ex = generate_example(data_cfg, index);
  Tape tape;
  ModelForward fwd = model.forward_loss(tape, ex.image, ex.prompt_id,
                                        ex.target_mask, index, false);
  ExampleStats st;
  st.loss_dice = fwd.loss_dice;
  st.loss_bce = fwd.loss_bce;
  st.attended_pairs = fwd.decoder.trace.total_attended_pairs();
  st.area_ratio = ex.area_ratio;
  SpatialField probs = field_from_tensor(*fwd.probs);
  SpatialField tgt = resize_nearest(ex.target_mask, probs.height, probs.width);
  st.dice = dice_score(probs, tgt);
  return st;
}

// Runs fn(index slot) over [0, n) on `threads` workers with static
// round-robin assignment.
void parallel_for(int n, int threads, const std::function<void(int, int)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i, 0);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([n, threads, w, &fn] {
      for (int i = w; i < n; i += threads) fn(i, w);
    });
  for (auto& t : pool) t.join();
}

}  // namespace

TrainResult train_model(Model& model, const SceneConfig& data_cfg,
                        const TrainConfig& tcfg, const std::string& checkpoint_path,
                        const std::string& config_text,
                        const std::function<void(const EpochRow&, const EpochRow&)>&
                            on_epoch) {
  tcfg.validate();
  data_cfg.validate();

  const int threads = tcfg.threads;
  std::vector<Replica> replicas;
  replicas.reserve(threads);
  for (int w = 0; w < threads; ++w) replicas.emplace_back(model);

  AdamW optimizer(tcfg.lr, tcfg.weight_decay);
  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();

  std::vector<uint32_t> order(tcfg.train_count);
  for (int i = 0; i < tcfg.train_count; ++i) order[i] = static_cast<uint32_t>(i);

  for (int epoch = 0; epoch < tcfg.max_epochs; ++epoch) {
    // Deterministic shuffle per epoch.
    RngStream shuffle_rng(tcfg.seed, RngTag::kShuffle, static_cast<uint32_t>(epoch));
    for (int i = tcfg.train_count - 1; i > 0; --i) {
      int j = static_cast<int>(shuffle_rng.uniform_index(static_cast<uint32_t>(i + 1)));
      std::swap(order[i], order[j]);
    }

    double sum_dice_loss = 0.0, sum_bce_loss = 0.0;
    int64_t sum_pairs = 0;
    std::vector<std::pair<double, double>> train_area_dice;
    train_area_dice.reserve(tcfg.train_count);

    for (int start = 0; start < tcfg.train_count; start += tcfg.batch_size) {
      int bsz = std::min(tcfg.batch_size, tcfg.train_count - start);
      std::vector<ExampleStats> stats(bsz);

      for (auto& r : replicas) {
        r.refresh(model);
        r.model.store().zero_grad();
      }
      parallel_for(bsz, threads, [&](int slot, int worker) {
        stats[slot] = run_train_example(replicas[worker].model, data_cfg, tcfg,
                                        epoch, order[start + slot], true);
      });

      // Deterministic gradient reduction: workers in index order, scaled by
      // the batch size.
      model.store().zero_grad();
      const auto& master_entries = model.store().entries();
      double inv_b = 1.0 / static_cast<double>(bsz);
      for (int w = 0; w < threads; ++w) {
        const auto& rep_entries = replicas[w].model.store().entries();
        for (size_t e = 0; e < master_entries.size(); ++e) {
          auto& mg = master_entries[e].second->g;
          const auto& rg = rep_entries[e].second->g;
          for (size_t i = 0; i < mg.size(); ++i) mg[i] += inv_b * rg[i];
        }
      }
      optimizer.step(model.store());

      for (const auto& st : stats) {
        sum_dice_loss += st.loss_dice;
        sum_bce_loss += st.loss_bce;
        sum_pairs += st.attended_pairs;
        train_area_dice.emplace_back(st.area_ratio, st.dice);
      }
    }

    EpochRow train_row;
    train_row.epoch = epoch;
    train_row.split = "train";
    train_row.loss_dice = sum_dice_loss / tcfg.train_count;
    train_row.loss_bce = sum_bce_loss / tcfg.train_count;
    StratifiedDice train_strata = stratify(train_area_dice);
    train_row.dice_small = train_strata.small.mean;
    train_row.dice_large = train_strata.large.mean;
    train_row.dice_all = train_strata.all.mean;
    train_row.attended_pairs_mean =
        static_cast<double>(sum_pairs) / tcfg.train_count;

    // Validation pass.
    for (auto& r : replicas) r.refresh(model);
    std::vector<ExampleStats> val_stats(tcfg.val_count);
    parallel_for(tcfg.val_count, threads, [&](int slot, int worker) {
      val_stats[slot] = run_eval_example(replicas[worker].model, data_cfg,
                                         kValBase + static_cast<uint32_t>(slot));
    });
    EpochRow val_row;
    val_row.epoch = epoch;
    val_row.split = "val";
    std::vector<std::pair<double, double>> val_area_dice;
    int64_t val_pairs = 0;
    for (const auto& st : val_stats) {
      val_row.loss_dice += st.loss_dice;
      val_row.loss_bce += st.loss_bce;
      val_pairs += st.attended_pairs;
      val_area_dice.emplace_back(st.area_ratio, st.dice);
    }
    val_row.loss_dice /= tcfg.val_count;
    val_row.loss_bce /= tcfg.val_count;
    StratifiedDice val_strata = stratify(val_area_dice);
    val_row.dice_small = val_strata.small.mean;
    val_row.dice_large = val_strata.large.mean;
    val_row.dice_all = val_strata.all.mean;
    val_row.attended_pairs_mean = static_cast<double>(val_pairs) / tcfg.val_count;

    result.rows.push_back(train_row);
    result.rows.push_back(val_row);
    result.epochs_run = epoch + 1;
    if (on_epoch) on_epoch(train_row, val_row);

    double val_loss = val_row.loss_dice + val_row.loss_bce;
    if (val_loss < result.best_val_loss) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      if (!checkpoint_path.empty()) model.store().save(checkpoint_path, config_text);
    } else if (epoch - result.best_epoch >= tcfg.patience) {
      result.early_stopped = true;
      break;
    }
  }

  // Leave the model at its best validation epoch.
  if (!checkpoint_path.empty() && result.best_epoch >= 0)
    model.store().load(checkpoint_path);
  return result;
}

StratifiedDice evaluate_stratified(const Model& model, const SceneConfig& data_cfg,
                                   uint32_t first_index, int count, int threads) {
  std::vector<Replica> replicas;
  replicas.reserve(threads);
  for (int w = 0; w < threads; ++w) replicas.emplace_back(model);
  std::vector<std::pair<double, double>> area_dice(count);
  parallel_for(count, threads, [&](int slot, int worker) {
    ExampleStats st = run_eval_example(replicas[worker].model, data_cfg,
                                       first_index + static_cast<uint32_t>(slot));
    area_dice[slot] = {st.area_ratio, st.dice};
  });
  return stratify(area_dice);
}

std::vector<double> per_example_dice(const Model& model, const SceneConfig& data_cfg,
                                     uint32_t first_index, int count, int threads) {
  std::vector<Replica> replicas;
  replicas.reserve(threads);
  for (int w = 0; w < threads; ++w) replicas.emplace_back(model);
  std::vector<double> out(count);
  parallel_for(count, threads, [&](int slot, int worker) {
    ExampleStats st = run_eval_example(replicas[worker].model, data_cfg,
                                       first_index + static_cast<uint32_t>(slot));
    out[slot] = st.dice;
  });
  return out;
}

}  // namespace boltzseg
