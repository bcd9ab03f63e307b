#include "boltzseg/rng.hpp"

#include <cmath>

#include "boltzseg/errors.hpp"

namespace boltzseg {

namespace {

constexpr uint32_t kMul0 = 0xD2511F53u;
constexpr uint32_t kMul1 = 0xCD9E8D57u;
constexpr uint32_t kWeyl0 = 0x9E3779B9u;
constexpr uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(uint32_t a, uint32_t b, uint32_t& hi, uint32_t& lo) {
  uint64_t p = static_cast<uint64_t>(a) * b;
  hi = static_cast<uint32_t>(p >> 32);
  lo = static_cast<uint32_t>(p);
}

}  // namespace

std::array<uint32_t, 4> Philox::block(const std::array<uint32_t, 4>& counter,
                                      const std::array<uint32_t, 2>& key) {
  uint32_t c0 = counter[0], c1 = counter[1], c2 = counter[2], c3 = counter[3];
  uint32_t k0 = key[0], k1 = key[1];
  for (int round = 0; round < 10; ++round) {
    uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, c0, hi0, lo0);
    mulhilo(kMul1, c2, hi1, lo1);
    uint32_t n0 = hi1 ^ c1 ^ k0;
    uint32_t n1 = lo1;
    uint32_t n2 = hi0 ^ c3 ^ k1;
    uint32_t n3 = lo0;
    c0 = n0;
    c1 = n1;
    c2 = n2;
    c3 = n3;
    k0 += kWeyl0;
    k1 += kWeyl1;
  }
  return {c0, c1, c2, c3};
}

RngStream::RngStream(uint64_t seed, RngTag tag, uint32_t stream, uint32_t lane_a,
                     uint32_t lane_b) {
  key_ = {static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32)};
  base_ = {0, lane_a, lane_b, (stream << 4) | static_cast<uint32_t>(tag)};
}

std::array<uint32_t, 4> RngStream::counter_at(uint32_t draw) const {
  std::array<uint32_t, 4> c = base_;
  c[0] = draw;
  return c;
}

double RngStream::uniform_at(uint32_t draw) const {
  auto out = Philox::block(counter_at(draw), key_);
  uint64_t u = (static_cast<uint64_t>(out[0]) << 32) | out[1];
  return static_cast<double>(u >> 11) * 0x1.0p-53;
}

double RngStream::uniform() { return uniform_at(draw_++); }

double RngStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

uint32_t RngStream::uniform_index(uint32_t n) {
  if (n == 0) throw InvalidArgument("uniform_index: n must be >= 1");
  auto out = Philox::block(counter_at(draw_++), key_);
  uint64_t u = (static_cast<uint64_t>(out[0]) << 32) | out[1];
  return static_cast<uint32_t>(u % n);
}

uint64_t RngStream::bits() {
  auto out = Philox::block(counter_at(draw_++), key_);
  return (static_cast<uint64_t>(out[0]) << 32) | out[1];
}

double RngStream::normal() {
  if (have_spare_normal_) {
    have_spare_normal_ = false;
    return spare_normal_;
  }
  // Box-Muller; u1 shifted away from 0 so log stays finite.
  double u1 = uniform();
  double u2 = uniform();
  u1 = u1 < 1e-300 ? 1e-300 : u1;
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * M_PI * u2;
  spare_normal_ = r * std::sin(theta);
  have_spare_normal_ = true;
  return r * std::cos(theta);
}

}  // namespace boltzseg
