#include "boltzseg/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "boltzseg/errors.hpp"
#include "boltzseg/rng.hpp"

namespace boltzseg {

TensorPtr ParamStore::declare(const std::string& name, std::vector<int> shape,
                              Init init, int fan_in) {
  if (index_.count(name))
    throw ConfigError("ParamStore: duplicate parameter '" + name + "'");
  auto t = make_tensor(std::move(shape), true);
  switch (init) {
    case Init::kZero:
      break;
    case Init::kOne:
      std::fill(t->v.begin(), t->v.end(), 1.0);
      break;
    case Init::kUniformFanIn: {
      if (fan_in <= 0) fan_in = t->rank() >= 2 ? t->shape.back() : t->dim(0);
      double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      RngStream rng(seed_, RngTag::kParamInit, static_cast<uint32_t>(entries_.size()));
      for (auto& v : t->v) v = rng.uniform(-bound, bound);
      break;
    }
  }
  index_[name] = entries_.size();
  entries_.emplace_back(name, t);
  return t;
}

TensorPtr ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end())
    throw ConfigError("ParamStore: unknown parameter '" + name + "'");
  return entries_[it->second].second;
}

int64_t ParamStore::total_params() const {
  int64_t n = 0;
  for (const auto& [name, t] : entries_) n += t->numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : entries_) std::fill(t->g.begin(), t->g.end(), 0.0);
}

void ParamStore::copy_values_from(const ParamStore& other) {
  if (other.entries_.size() != entries_.size())
    throw ConfigError("ParamStore: schema mismatch in copy_values_from");
  for (size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].first != other.entries_[i].first ||
        entries_[i].second->shape != other.entries_[i].second->shape)
      throw ConfigError("ParamStore: schema mismatch at '" + entries_[i].first + "'");
    entries_[i].second->v = other.entries_[i].second->v;
  }
}

namespace {

constexpr char kMagic[8] = {'B', 'Z', 'S', 'G', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_pod<uint32_t>(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  uint32_t n = read_pod<uint32_t>(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  return s;
}

void read_header(std::istream& in, const std::string& path) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw IoError("checkpoint: bad magic in " + path);
  uint32_t version = read_pod<uint32_t>(in);
  if (version != kVersion)
    throw IoError("checkpoint: unsupported version in " + path);
}

}  // namespace

void ParamStore::save(const std::string& path, const std::string& config_text) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("checkpoint: cannot open " + path + " for write");
  out.write(kMagic, 8);
  write_pod<uint32_t>(out, kVersion);
  write_string(out, config_text);
  write_pod<uint32_t>(out, static_cast<uint32_t>(entries_.size()));
  for (const auto& [name, t] : entries_) {
    write_string(out, name);
    write_pod<uint32_t>(out, static_cast<uint32_t>(t->shape.size()));
    for (int d : t->shape) write_pod<uint32_t>(out, static_cast<uint32_t>(d));
    out.write(reinterpret_cast<const char*>(t->v.data()),
              static_cast<std::streamsize>(t->v.size() * sizeof(double)));
  }
  if (!out) throw IoError("checkpoint: write failed for " + path);
}

std::string ParamStore::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open " + path);
  read_header(in, path);
  std::string config_text = read_string(in);
  uint32_t count = read_pod<uint32_t>(in);
  if (count != entries_.size())
    throw ConfigError("checkpoint: parameter count mismatch in " + path);
  for (auto& [name, t] : entries_) {
    std::string rec_name = read_string(in);
    if (rec_name != name)
      throw ConfigError("checkpoint: expected parameter '" + name + "', found '" +
                        rec_name + "'");
    uint32_t rank = read_pod<uint32_t>(in);
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(read_pod<uint32_t>(in));
    if (shape != t->shape)
      throw ConfigError("checkpoint: shape mismatch for '" + name + "'");
    in.read(reinterpret_cast<char*>(t->v.data()),
            static_cast<std::streamsize>(t->v.size() * sizeof(double)));
  }
  if (!in) throw IoError("checkpoint: truncated file " + path);
  return config_text;
}

std::string ParamStore::read_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open " + path);
  read_header(in, path);
  std::string text = read_string(in);
  if (!in) throw IoError("checkpoint: truncated file " + path);
  return text;
}

void AdamW::step(ParamStore& store) {
  const auto& entries = store.entries();
  if (m_.empty()) {
    m_.resize(entries.size());
    v_.resize(entries.size());
    for (size_t i = 0; i < entries.size(); ++i) {
      m_[i].assign(entries[i].second->numel(), 0.0);
      v_[i].assign(entries[i].second->numel(), 0.0);
    }
  }
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < entries.size(); ++i) {
    Tensor& t = *entries[i].second;
    for (int64_t j = 0; j < t.numel(); ++j) {
      double g = t.g[j];
      m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g;
      v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g * g;
      double mhat = m_[i][j] / bc1;
      double vhat = v_[i][j] / bc2;
      t.v[j] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + wd_ * t.v[j]);
    }
  }
}

}  // namespace boltzseg
