#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "boltzseg/tensor.hpp"

namespace boltzseg {

enum class Init { kZero, kOne, kUniformFanIn };

// Named parameter arrays with gradient buffers. Names are unique; lookup of
// an undeclared name throws. Initialization is a pure function of
// (seed, registration index), so a given construction order is reproducible.
class ParamStore {
 public:
  explicit ParamStore(uint64_t seed = 0) : seed_(seed) {}

  TensorPtr declare(const std::string& name, std::vector<int> shape, Init init,
                    int fan_in = 0);
  TensorPtr get(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) > 0; }

  const std::vector<std::pair<std::string, TensorPtr>>& entries() const {
    return entries_;
  }
  int64_t total_params() const;
  uint64_t seed() const { return seed_; }

  void zero_grad();
  // Copies values from a store with the identical schema (names and shapes
  // in the same order).
  void copy_values_from(const ParamStore& other);

  // Checkpoint: version header + embedded config text + named f64 records.
  // Round-trips bit-exactly.
  void save(const std::string& path, const std::string& config_text) const;
  // Loads values into the declared schema; throws ConfigError on mismatch.
  // Returns the embedded config text.
  std::string load(const std::string& path);
  // Reads just the embedded config text of a checkpoint.
  static std::string read_config(const std::string& path);

 private:
  uint64_t seed_;
  std::vector<std::pair<std::string, TensorPtr>> entries_;
  std::unordered_map<std::string, size_t> index_;
};

// AdamW with decoupled weight decay, applied to every entry of a store.
class AdamW {
 public:
  AdamW(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8)
      : lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore& store);

 private:
  double lr_, wd_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace boltzseg
