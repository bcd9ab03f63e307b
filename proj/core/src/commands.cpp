#include "boltzseg/commands.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>

#include "boltzseg/errors.hpp"
#include "boltzseg/image_io.hpp"
#include "boltzseg/losses.hpp"

namespace boltzseg {

namespace fs = std::filesystem;

void ensure_dir(const std::string& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec) throw IoError("cannot create directory " + path + ": " + ec.message());
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for write");
  out << text;
  if (!out) throw IoError("write failed for " + path);
}

uint32_t split_base(const std::string& split) {
  if (split == "train") return 0;
  if (split == "val") return kValBase;
  if (split == "test") return kTestBase;
  throw InvalidArgument("unknown split '" + split + "' (train|val|test)");
}

int split_count(const RunConfig& cfg, const std::string& split) {
  if (split == "train") return cfg.train_count;
  if (split == "val") return cfg.val_count;
  if (split == "test") return cfg.test_count;
  throw InvalidArgument("unknown split '" + split + "' (train|val|test)");
}

Model load_model(const std::string& checkpoint, RunConfig& cfg_out) {
  std::string text = ParamStore::read_config(checkpoint);
  cfg_out = RunConfig::from_text(text, checkpoint + "(embedded config)");
  Model model(cfg_out.model_config(), cfg_out.train_seed);
  model.store().load(checkpoint);
  return model;
}

TrainResult cmd_train(const RunConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  ensure_dir(out_dir);
  std::string config_text = cfg.to_text();
  write_text_file(out_dir + "/resolved.cfg", config_text);

  Model model(cfg.model_config(), cfg.train_seed);
  std::ofstream metrics(out_dir + "/metrics.csv", std::ios::binary);
  if (!metrics) throw IoError("cannot open metrics.csv in " + out_dir);
  metrics << kMetricsCsvHeader;

  TrainResult result = train_model(
      model, cfg.scene_config(), cfg.train_config(), out_dir + "/model.ckpt",
      config_text, [&metrics](const EpochRow& train_row, const EpochRow& val_row) {
        metrics << metrics_csv_row(train_row) << metrics_csv_row(val_row);
        metrics.flush();
      });
  if (!metrics) throw IoError("write failed for metrics.csv in " + out_dir);
  return result;
}

namespace {

std::string stratum_csv(const StratifiedDice& d) {
  char buf[256];
  std::string out = "stratum,mean_dice,std_err,n\n";
  std::snprintf(buf, sizeof(buf), "small,%.10g,%.10g,%d\n", d.small.mean,
                d.small.std_err, d.small.n);
  out += buf;
  std::snprintf(buf, sizeof(buf), "large,%.10g,%.10g,%d\n", d.large.mean,
                d.large.std_err, d.large.n);
  out += buf;
  std::snprintf(buf, sizeof(buf), "all,%.10g,%.10g,%d\n", d.all.mean, d.all.std_err,
                d.all.n);
  out += buf;
  return out;
}

}  // namespace

StratifiedDice cmd_eval(const std::string& checkpoint, const std::string& split,
                        const std::string& out_dir) {
  RunConfig cfg;
  Model model = load_model(checkpoint, cfg);
  ensure_dir(out_dir);
  ensure_dir(out_dir + "/masks");
  write_text_file(out_dir + "/resolved.cfg", cfg.to_text());

  SceneConfig data_cfg = cfg.scene_config();
  uint32_t base = split_base(split);
  int count = split_count(cfg, split);

  StratifiedDice dice =
      evaluate_stratified(model, data_cfg, base, count, cfg.threads);
  write_text_file(out_dir + "/dice.csv", stratum_csv(dice));

  for (int i = 0; i < count; ++i) {
    Example ex = generate_example(data_cfg, base + static_cast<uint32_t>(i));
    Tape tape;
    ModelForward fwd =
        model.forward(tape, ex.image, ex.prompt_id, base + static_cast<uint32_t>(i));
    SpatialField probs = field_from_tensor(*fwd.probs);
    char name[64];
    std::snprintf(name, sizeof(name), "/masks/pred_%05d.pgm", i);
    write_pgm(probs, out_dir + name);
  }
  return dice;
}

void cmd_viz_sampling(const std::string& checkpoint, int example_index,
                      const std::string& out_dir) {
  if (example_index < 0) throw InvalidArgument("viz-sampling: bad example index");
  RunConfig cfg;
  Model model = load_model(checkpoint, cfg);
  if (example_index >= cfg.test_count)
    throw InvalidArgument("viz-sampling: example index beyond test split");
  ensure_dir(out_dir);
  write_text_file(out_dir + "/resolved.cfg", cfg.to_text());

  SceneConfig data_cfg = cfg.scene_config();
  uint32_t index = kTestBase + static_cast<uint32_t>(example_index);
  Example ex = generate_example(data_cfg, index);
  Tape tape;
  ModelForward fwd = model.forward(tape, ex.image, ex.prompt_id, index,
                                   /*record_fields=*/true);

  write_pgm(ex.image, out_dir + "/image.pgm");
  write_pbm(ex.target_mask, out_dir + "/target.pbm");

  // Target boundary at image resolution for the overlays.
  int s = ex.image.height;
  std::vector<char> boundary(static_cast<size_t>(s) * s, 0);
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      if (ex.target_mask.at(y, x, 0) == 0.0) continue;
      bool edge = y == 0 || x == 0 || y == s - 1 || x == s - 1 ||
                  ex.target_mask.at(y - 1, x, 0) == 0.0 ||
                  ex.target_mask.at(y + 1, x, 0) == 0.0 ||
                  ex.target_mask.at(y, x - 1, 0) == 0.0 ||
                  ex.target_mask.at(y, x + 1, 0) == 0.0;
      if (edge) boundary[static_cast<size_t>(y) * s + x] = 1;
    }

  int layers = model.config().decoder.layers;
  int queries = model.config().decoder.queries;
  for (int l = 0; l < layers; ++l) {
    const TraceEntry& entry = fwd.decoder.trace.entries[static_cast<size_t>(l) * queries];
    char name[64];
    std::snprintf(name, sizeof(name), "/boltz_l%02d.pgm", l);
    write_pgm(entry.field.probabilities, out_dir + name);

    // Sampled cells bright, unsampled dark, target boundary at full white.
    int lh = entry.set.level_height, lw = entry.set.level_width;
    SpatialField cells(lh, lw, 1, 0.0);
    for (int idx : entry.set.indices) cells.data[idx] = 1.0;
    SpatialField viz(s, s, 1, 0.0);
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        int cy = y * lh / s, cx = x * lw / s;
        viz.at(y, x, 0) = cells.at(cy, cx, 0) != 0.0 ? 230.0 : 40.0;
        if (boundary[static_cast<size_t>(y) * s + x]) viz.at(y, x, 0) = 255.0;
      }
    std::snprintf(name, sizeof(name), "/sampled_l%02d.pgm", l);
    write_pgm_raw(viz, out_dir + name);

    std::string sidecar = "layer = " + std::to_string(l) + "\n";
    char tbuf[64];
    std::snprintf(tbuf, sizeof(tbuf), "temperature = %.17g\n", entry.temperature);
    sidecar += tbuf;
    sidecar += "level = " + std::to_string(lh) + "x" + std::to_string(lw) + "\n";
    sidecar += "sampled =";
    for (int idx : entry.set.indices) sidecar += " " + std::to_string(idx);
    sidecar += "\n";
    std::snprintf(name, sizeof(name), "/sampled_l%02d.txt", l);
    write_text_file(out_dir + name, sidecar);
  }
}

ComputeReport cmd_bench(const RunConfig& cfg_in, const std::string& checkpoint,
                        const std::vector<std::string>& policies, int n_examples,
                        const std::string& out_dir) {
  if (n_examples < 1) throw InvalidArgument("bench: n_examples must be >= 1");
  RunConfig cfg = cfg_in;
  Model base = checkpoint.empty() ? Model(cfg.model_config(), cfg.train_seed)
                                  : load_model(checkpoint, cfg);
  ensure_dir(out_dir);
  write_text_file(out_dir + "/resolved.cfg", cfg.to_text());

  SceneConfig data_cfg = cfg.scene_config();
  ModelConfig mc = cfg.model_config();

  // Analytic full-attention count per forward.
  std::vector<int> schedule =
      mc.decoder.resolved_schedule(static_cast<int>(mc.encoder.level_sizes.size()));
  ComputeReport report;
  report.forwards = n_examples;
  for (int l : schedule) {
    int size = mc.encoder.level_sizes[l];
    report.full_pairs_per_forward +=
        static_cast<int64_t>(mc.decoder.queries) * size * size;
  }

  for (const std::string& pol : policies) {
    ModelConfig pmc = mc;
    pmc.decoder.sampler.policy = sampler_policy_from_string(pol);
    Model model(pmc, cfg.train_seed);
    model.store().copy_values_from(base.store());

    PolicyReport pr;
    pr.policy = pol;
    pr.pairs_per_layer.assign(mc.decoder.layers, 0);
    auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < n_examples; ++i) {
      Example ex = generate_example(data_cfg, kTestBase + static_cast<uint32_t>(i));
      Tape tape;
      ModelForward fwd = model.forward(tape, ex.image, ex.prompt_id,
                                       static_cast<uint32_t>(i));
      auto per_layer = fwd.decoder.trace.attended_pairs_per_layer(mc.decoder.layers);
      for (int l = 0; l < mc.decoder.layers; ++l) pr.pairs_per_layer[l] += per_layer[l];
    }
    auto t1 = std::chrono::steady_clock::now();
    for (int64_t p : pr.pairs_per_layer) pr.pairs_total += p;
    pr.pairs_mean_per_forward = static_cast<double>(pr.pairs_total) / n_examples;
    pr.reduction_vs_full =
        static_cast<double>(report.full_pairs_per_forward) * n_examples /
        static_cast<double>(pr.pairs_total);
    pr.wallclock_ms_per_forward =
        std::chrono::duration<double, std::milli>(t1 - t0).count() / n_examples;
    report.policies.push_back(std::move(pr));
  }

  // Deterministic CSV; wall-clock goes to a sidecar so repeated runs stay
  // byte-identical.
  std::string csv = "policy,scope,pairs_total,pairs_per_forward,reduction_vs_full\n";
  char buf[256];
  for (const auto& pr : report.policies) {
    for (size_t l = 0; l < pr.pairs_per_layer.size(); ++l) {
      std::snprintf(buf, sizeof(buf), "%s,layer%zu,%lld,%.10g,\n", pr.policy.c_str(),
                    l, static_cast<long long>(pr.pairs_per_layer[l]),
                    static_cast<double>(pr.pairs_per_layer[l]) / n_examples);
      csv += buf;
    }
    std::snprintf(buf, sizeof(buf), "%s,total,%lld,%.10g,%.10g\n", pr.policy.c_str(),
                  static_cast<long long>(pr.pairs_total), pr.pairs_mean_per_forward,
                  pr.reduction_vs_full);
    csv += buf;
  }
  std::snprintf(buf, sizeof(buf), "full_analytic,total,%lld,%.10g,1\n",
                static_cast<long long>(report.full_pairs_per_forward) * n_examples,
                static_cast<double>(report.full_pairs_per_forward));
  csv += buf;
  write_text_file(out_dir + "/report.csv", csv);

  std::string timing;
  for (const auto& pr : report.policies) {
    std::snprintf(buf, sizeof(buf), "%s: %.3f ms/forward\n", pr.policy.c_str(),
                  pr.wallclock_ms_per_forward);
    timing += buf;
  }
  write_text_file(out_dir + "/timing.txt", timing);
  return report;
}

std::vector<AblationRow> cmd_ablate(const RunConfig& base, const std::string& axis,
                                    const std::string& out_dir) {
  struct AxisValue {
    std::string label;
    std::function<void(RunConfig&)> apply;
  };
  std::vector<AxisValue> values;
  if (axis == "tau0") {
    for (double v : {0.25, 0.5, 1.0, 2.0})
      values.push_back({std::to_string(v).substr(0, 4),
                        [v](RunConfig& c) { c.tau0 = v; }});
  } else if (axis == "ratio") {
    for (double v : {0.05, 0.10, 0.20, 0.50})
      values.push_back({std::to_string(v).substr(0, 4),
                        [v](RunConfig& c) { c.sample_ratio = v; }});
  } else if (axis == "queries") {
    for (int v : {1, 10, 32})
      values.push_back({std::to_string(v), [v](RunConfig& c) { c.queries = v; }});
  } else if (axis == "text_prior") {
    for (bool v : {true, false})
      values.push_back({v ? "on" : "off", [v](RunConfig& c) { c.text_prior = v; }});
  } else if (axis == "pigma_correction") {
    for (bool v : {true, false})
      values.push_back(
          {v ? "on" : "off", [v](RunConfig& c) { c.pigma_correction = v; }});
  } else if (axis == "policy") {
    for (const char* v : {"full", "threshold", "boltzmann"})
      values.push_back({v, [v](RunConfig& c) { c.policy = v; }});
  } else {
    throw InvalidArgument("ablate: unknown axis '" + axis +
                          "' (tau0|ratio|queries|text_prior|pigma_correction|policy)");
  }

  ensure_dir(out_dir);
  std::vector<AblationRow> rows;
  std::string csv =
      "axis,value,dice_small,se_small,dice_large,se_large,dice_all,se_all\n";
  for (const auto& av : values) {
    RunConfig cfg = base;
    av.apply(cfg);
    std::string sub = out_dir + "/" + axis + "_" + av.label;
    cmd_train(cfg, sub);
    RunConfig loaded;
    Model model = load_model(sub + "/model.ckpt", loaded);
    StratifiedDice dice = evaluate_stratified(model, cfg.scene_config(), kTestBase,
                                              cfg.test_count, cfg.threads);
    rows.push_back({axis, av.label, dice});
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%s,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                  axis.c_str(), av.label.c_str(), dice.small.mean, dice.small.std_err,
                  dice.large.mean, dice.large.std_err, dice.all.mean,
                  dice.all.std_err);
    csv += buf;
  }
  write_text_file(out_dir + "/summary.csv", csv);
  return rows;
}

void cmd_gendata(const RunConfig& cfg, const std::string& split,
                 const std::string& out_dir) {
  cfg.validate();
  ensure_dir(out_dir);
  write_text_file(out_dir + "/resolved.cfg", cfg.to_text());
  SceneConfig data_cfg = cfg.scene_config();
  uint32_t base = split_base(split);
  int count = split_count(cfg, split);
  std::string meta = "index,prompt_id,area_ratio,area_floored\n";
  char buf[128];
  for (int i = 0; i < count; ++i) {
    Example ex = generate_example(data_cfg, base + static_cast<uint32_t>(i));
    char name[64];
    std::snprintf(name, sizeof(name), "/img_%05d.pgm", i);
    write_pgm(ex.image, out_dir + name);
    std::snprintf(name, sizeof(name), "/mask_%05d.pbm", i);
    write_pbm(ex.target_mask, out_dir + name);
    std::snprintf(buf, sizeof(buf), "%d,%d,%.10g,%d\n", i, ex.prompt_id,
                  ex.area_ratio, ex.area_floored ? 1 : 0);
    meta += buf;
  }
  write_text_file(out_dir + "/meta.csv", meta);
}

std::vector<double> sampling_target_alignment(const Model& model,
                                              const SceneConfig& data_cfg,
                                              uint32_t first_index, int count) {
  int layers = model.config().decoder.layers;
  int queries = model.config().decoder.queries;
  std::vector<double> fraction_sum(layers, 0.0);
  std::vector<int> fraction_n(layers, 0);

  for (int i = 0; i < count; ++i) {
    uint32_t index = first_index + static_cast<uint32_t>(i);
    Example ex = generate_example(data_cfg, index);
    Tape tape;
    ModelForward fwd = model.forward(tape, ex.image, ex.prompt_id, index, false);

    for (int l = 0; l < layers; ++l) {
      const TraceEntry& entry =
          fwd.decoder.trace.entries[static_cast<size_t>(l) * queries];
      int lh = entry.set.level_height, lw = entry.set.level_width;
      // Target support at level resolution, dilated by one cell.
      std::vector<char> cell(static_cast<size_t>(lh) * lw, 0);
      int s = ex.target_mask.height;
      for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x)
          if (ex.target_mask.at(y, x, 0) != 0.0)
            cell[static_cast<size_t>(y * lh / s) * lw + x * lw / s] = 1;
      std::vector<char> dilated(cell.size(), 0);
      for (int y = 0; y < lh; ++y)
        for (int x = 0; x < lw; ++x) {
          if (!cell[static_cast<size_t>(y) * lw + x]) continue;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              int ny = y + dy, nx = x + dx;
              if (ny >= 0 && ny < lh && nx >= 0 && nx < lw)
                dilated[static_cast<size_t>(ny) * lw + nx] = 1;
            }
        }
      int inside = 0;
      for (int idx : entry.set.indices) inside += dilated[idx];
      fraction_sum[l] += static_cast<double>(inside) / entry.set.size();
      fraction_n[l] += 1;
    }
  }
  std::vector<double> out(layers, 0.0);
  for (int l = 0; l < layers; ++l)
    out[l] = fraction_n[l] ? fraction_sum[l] / fraction_n[l] : 0.0;
  return out;
}

}  // namespace boltzseg
