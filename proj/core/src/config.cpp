#include "boltzseg/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "boltzseg/errors.hpp"

namespace boltzseg {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

int parse_int(const std::string& v, const std::string& where) {
  try {
    size_t pos = 0;
    int x = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return x;
  } catch (...) {
    throw ConfigError(where + ": expected integer, got '" + v + "'");
  }
}

uint64_t parse_u64(const std::string& v, const std::string& where) {
  try {
    size_t pos = 0;
    uint64_t x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return x;
  } catch (...) {
    throw ConfigError(where + ": expected unsigned integer, got '" + v + "'");
  }
}

double parse_double(const std::string& v, const std::string& where) {
  try {
    size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return x;
  } catch (...) {
    throw ConfigError(where + ": expected number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& v, const std::string& where) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ConfigError(where + ": expected on/off, got '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& v, const std::string& where) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int(trim(item), where));
  if (out.empty()) throw ConfigError(where + ": expected comma-separated integers");
  return out;
}

std::string fmt_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_int_list(const std::vector<int>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

struct Key {
  const char* section;
  const char* name;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<Key>& schema() {
  static const std::vector<Key> keys = {
      {"encoder", "feature_dim",
       [](RunConfig& c, const std::string& v, const std::string& w) { c.feature_dim = parse_int(v, w); },
       [](const RunConfig& c) { return std::to_string(c.feature_dim); }},
      {"encoder", "levels",
       [](RunConfig& c, const std::string& v, const std::string& w) { c.level_sizes = parse_int_list(v, w); },
       [](const RunConfig& c) { return fmt_int_list(c.level_sizes); }},
      {"encoder", "semantic_size",
       [](RunConfig& c, const std::string& v, const std::string& w) { c.semantic_size = parse_int(v, w); },
       [](const RunConfig& c) { return std::to_string(c.semantic_size); }},

      {"decoder", "layers",
       [](RunConfig& c, const std::string& v, const std::string& w) { c.layers = parse_int(v, w); },
       [](const RunConfig& c) { return std::to_string(c.layers); }},
      {"decoder", "queries",
       [](RunConfig& c, const std::string& v, const std::string& w) { c.queries = parse_int(v, w); },
       [](const RunConfig& c) { return std::to_string(c.queries); }},
      {"decoder", "heads",
       [](RunConfig& c, const std::string& v, const std::string& w) { c.heads = parse_int(v, w); },
       [](const RunConfig& c) { return std::to_string(c.heads); }},
      {"decoder", "mlp_hidden",
       [](RunConfig& c, const std::string& v, const std::string& w) { c.mlp_hidden = parse_int(v, w); },
       [](const RunConfig& c) { return std::to_string(c.mlp_hidden); }},
      {"decoder", "ffn_hidden",
       [](RunConfig& c, const std::string& v, const std::string& w) { c.ffn_hidden = parse_int(v, w); },
       [](const RunConfig& c) { return std::to_string(c.ffn_hidden); }},
      {"decoder", "score_scale",
       [](RunConfig& c, const std::string& v, const std::string& w) {
         if (v != "d" && v != "sqrt_d") throw ConfigError(w + ": score_scale must be d or sqrt_d");
         c.score_scale = v;
       },
       [](const RunConfig& c) { return c.score_scale; }},
      {"decoder", "text_update",
       [](RunConfig& c, const std::string& v, const std::string& w) { c.text_update = parse_bool(v, w); },
       [](const RunConfig& c) { return c.text_update ? "on" : "off"; }},
      {"decoder", "text_prior",
       [](RunConfig& c, const std::string& v, const std::string& w) { c.text_prior = parse_bool(v, w); },
       [](const RunConfig& c) { return c.text_prior ? "on" : "off"; }},
      {"decoder", "schedule",
       [](RunConfig& c, const std::string& v, const std::string& w) {
         if (v != "auto") parse_int_list(v, w);  // syntax check
         c.schedule = v;
       },
       [](const RunConfig& c) { return c.schedule; }},

      {"sampler", "policy",
       [](RunConfig& c, const std::string& v, const std::string& w) {
         (void)w;
         sampler_policy_from_string(v);
         c.policy = v;
       },
       [](const RunConfig& c) { return c.policy; }},
      {"sampler", "tau0",
       [](RunConfig& c, const std::string& v, const std::string& w) { c.tau0 = parse_double(v, w); },
       [](const RunConfig& c) { return fmt_double(c.tau0); }},
      {"sampler", "sample_ratio",
       [](RunConfig& c, const std::string& v, const std::string& w) { c.sample_ratio = parse_double(v, w); },
       [](const RunConfig& c) { return fmt_double(c.sample_ratio); }},
      {"sampler", "threshold",
       [](RunConfig& c, const std::string& v, const std::string& w) { c.threshold = parse_double(v, w); },
       [](const RunConfig& c) { return fmt_double(c.threshold); }},
      {"sampler", "seed",
       [](RunConfig& c, const std::string& v, const std::string& w) { c.sampler_seed = parse_u64(v, w); },
       [](const RunConfig& c) { return std::to_string(c.sampler_seed); }},

      {"pigma", "correction",
       [](RunConfig& c, const std::string& v, const std::string& w) { c.pigma_correction = parse_bool(v, w); },
       [](const RunConfig& c) { return c.pigma_correction ? "on" : "off"; }},
      {"pigma", "channels",
       [](RunConfig& c, const std::string& v, const std::string& w) { c.pigma_channels = parse_int(v, w); },
       [](const RunConfig& c) { return std::to_string(c.pigma_channels); }},

      {"train", "lr",
       [](RunConfig& c, const std::string& v, const std::string& w) { c.lr = parse_double(v, w); },
       [](const RunConfig& c) { return fmt_double(c.lr); }},
      {"train", "weight_decay",
       [](RunConfig& c, const std::string& v, const std::string& w) { c.weight_decay = parse_double(v, w); },
       [](const RunConfig& c) { return fmt_double(c.weight_decay); }},
      {"train", "batch_size",
       [](RunConfig& c, const std::string& v, const std::string& w) { c.batch_size = parse_int(v, w); },
       [](const RunConfig& c) { return std::to_string(c.batch_size); }},
      {"train", "max_epochs",
       [](RunConfig& c, const std::string& v, const std::string& w) { c.max_epochs = parse_int(v, w); },
       [](const RunConfig& c) { return std::to_string(c.max_epochs); }},
      {"train", "patience",
       [](RunConfig& c, const std::string& v, const std::string& w) { c.patience = parse_int(v, w); },
       [](const RunConfig& c) { return std::to_string(c.patience); }},
      {"train", "augment_prob",
       [](RunConfig& c, const std::string& v, const std::string& w) { c.augment_prob = parse_double(v, w); },
       [](const RunConfig& c) { return fmt_double(c.augment_prob); }},
      {"train", "threads",
       [](RunConfig& c, const std::string& v, const std::string& w) { c.threads = parse_int(v, w); },
       [](const RunConfig& c) { return std::to_string(c.threads); }},
      {"train", "seed",
       [](RunConfig& c, const std::string& v, const std::string& w) { c.train_seed = parse_u64(v, w); },
       [](const RunConfig& c) { return std::to_string(c.train_seed); }},
      {"train", "train_count",
       [](RunConfig& c, const std::string& v, const std::string& w) { c.train_count = parse_int(v, w); },
       [](const RunConfig& c) { return std::to_string(c.train_count); }},
      {"train", "val_count",
       [](RunConfig& c, const std::string& v, const std::string& w) { c.val_count = parse_int(v, w); },
       [](const RunConfig& c) { return std::to_string(c.val_count); }},
      {"train", "test_count",
       [](RunConfig& c, const std::string& v, const std::string& w) { c.test_count = parse_int(v, w); },
       [](const RunConfig& c) { return std::to_string(c.test_count); }},

      {"data", "image_size",
       [](RunConfig& c, const std::string& v, const std::string& w) { c.image_size = parse_int(v, w); },
       [](const RunConfig& c) { return std::to_string(c.image_size); }},
      {"data", "classes",
       [](RunConfig& c, const std::string& v, const std::string& w) { c.classes = parse_int(v, w); },
       [](const RunConfig& c) { return std::to_string(c.classes); }},
      {"data", "tokens_per_class",
       [](RunConfig& c, const std::string& v, const std::string& w) { c.tokens_per_class = parse_int(v, w); },
       [](const RunConfig& c) { return std::to_string(c.tokens_per_class); }},
      {"data", "max_distractors",
       [](RunConfig& c, const std::string& v, const std::string& w) { c.max_distractors = parse_int(v, w); },
       [](const RunConfig& c) { return std::to_string(c.max_distractors); }},
      {"data", "noise_sigma",
       [](RunConfig& c, const std::string& v, const std::string& w) { c.noise_sigma = parse_double(v, w); },
       [](const RunConfig& c) { return fmt_double(c.noise_sigma); }},
      {"data", "area_min",
       [](RunConfig& c, const std::string& v, const std::string& w) { c.area_min = parse_double(v, w); },
       [](const RunConfig& c) { return fmt_double(c.area_min); }},
      {"data", "area_max",
       [](RunConfig& c, const std::string& v, const std::string& w) { c.area_max = parse_double(v, w); },
       [](const RunConfig& c) { return fmt_double(c.area_max); }},
      {"data", "seed",
       [](RunConfig& c, const std::string& v, const std::string& w) { c.data_seed = parse_u64(v, w); },
       [](const RunConfig& c) { return std::to_string(c.data_seed); }},
  };
  return keys;
}

const Key* find_key(const std::string& section, const std::string& name) {
  for (const auto& k : schema())
    if (section == k.section && name == k.name) return &k;
  return nullptr;
}

bool known_section(const std::string& section) {
  for (const auto& k : schema())
    if (section == k.section) return true;
  return false;
}

}  // namespace

RunConfig RunConfig::from_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string where = origin + ":" + std::to_string(lineno);
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!known_section(section))
        throw ConfigError(where + ": unknown section '" + section + "'");
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(where + ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (section.empty())
      throw ConfigError(where + ": key '" + key + "' outside any section");
    const Key* k = find_key(section, key);
    if (!k)
      throw ConfigError(where + ": unknown key '" + key + "' in section [" +
                        section + "]");
    k->set(cfg, value, where);
  }
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str(), path);
}

void RunConfig::apply_override(const std::string& spec) {
  size_t eq = spec.find('=');
  if (eq == std::string::npos)
    throw ConfigError("--set expects section.key=value, got '" + spec + "'");
  std::string path = trim(spec.substr(0, eq));
  std::string value = trim(spec.substr(eq + 1));
  size_t dot = path.find('.');
  if (dot == std::string::npos)
    throw ConfigError("--set expects section.key=value, got '" + spec + "'");
  std::string section = path.substr(0, dot);
  std::string key = path.substr(dot + 1);
  const Key* k = find_key(section, key);
  if (!k)
    throw ConfigError("--set: unknown key '" + section + "." + key + "'");
  k->set(*this, value, "--set " + path);
}

void RunConfig::set_global_seed(uint64_t seed) {
  sampler_seed = seed;
  train_seed = seed;
  data_seed = seed;
}

std::string RunConfig::to_text() const {
  std::string out;
  std::string current;
  for (const auto& k : schema()) {
    if (current != k.section) {
      if (!current.empty()) out += "\n";
      current = k.section;
      out += "[" + current + "]\n";
    }
    out += std::string(k.name) + " = " + k.get(*this) + "\n";
  }
  return out;
}

ModelConfig RunConfig::model_config() const {
  ModelConfig mc;
  mc.encoder.image_size = image_size;
  mc.encoder.image_channels = 1;
  mc.encoder.feature_dim = feature_dim;
  mc.encoder.level_sizes = level_sizes;
  mc.encoder.semantic_size = semantic_size;

  mc.decoder.layers = layers;
  mc.decoder.queries = queries;
  mc.decoder.heads = heads;
  mc.decoder.feature_dim = feature_dim;
  mc.decoder.mlp_hidden = mlp_hidden;
  mc.decoder.ffn_hidden = ffn_hidden;
  mc.decoder.score_scale =
      score_scale == "sqrt_d" ? ScoreScale::kSqrtDim : ScoreScale::kDim;
  mc.decoder.text_update = text_update;
  mc.decoder.text_prior = text_prior;
  mc.decoder.sampler.policy = sampler_policy_from_string(policy);
  mc.decoder.sampler.tau0 = tau0;
  mc.decoder.sampler.sample_ratio = sample_ratio;
  mc.decoder.sampler.threshold_value = threshold;
  mc.decoder.sampler.seed = sampler_seed;
  if (schedule != "auto")
    mc.decoder.schedule = parse_int_list(schedule, "decoder.schedule");

  mc.pigma.channels = pigma_channels;
  mc.pigma.correction = pigma_correction;
  mc.prompt_classes = classes;
  mc.prompt_tokens = tokens_per_class;
  mc.validate();
  return mc;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig tc;
  tc.lr = lr;
  tc.weight_decay = weight_decay;
  tc.batch_size = batch_size;
  tc.max_epochs = max_epochs;
  tc.patience = patience;
  tc.augment_prob = augment_prob;
  tc.seed = train_seed;
  tc.threads = threads;
  tc.train_count = train_count;
  tc.val_count = val_count;
  tc.test_count = test_count;
  tc.validate();
  return tc;
}

SceneConfig RunConfig::scene_config() const {
  SceneConfig sc;
  sc.image_size = image_size;
  sc.area_min = area_min;
  sc.area_max = area_max;
  sc.max_distractors = max_distractors;
  sc.noise_sigma = noise_sigma;
  sc.classes = classes;
  sc.seed = data_seed;
  sc.validate();
  return sc;
}

void RunConfig::validate() const {
  model_config();
  train_config();
  scene_config();
}

}  // namespace boltzseg
