#pragma once

#include <array>
#include <cstdint>

namespace boltzseg {

// Philox4x32-10 counter-based generator (Salmon et al., "Parallel Random
// Numbers: As Easy as 1, 2, 3"). Pure function of (counter, key), so streams
// are addressable: the same (seed, stream, lane, draw) always yields the same
// value, independent of call order or threading.
struct Philox {
  static std::array<uint32_t, 4> block(const std::array<uint32_t, 4>& counter,
                                       const std::array<uint32_t, 2>& key);
};

// Stream purposes. Kept in the counter so distinct subsystems never collide.
enum class RngTag : uint32_t {
  kParamInit = 0,
  kSampling = 1,
  kDataGen = 2,
  kAugment = 3,
  kShuffle = 4,
  kMisc = 5,
};

// A deterministic substream: key = 64-bit seed, counter lanes identify
// (purpose, stream, lane_a, lane_b), and draws advance lane 0.
class RngStream {
 public:
  RngStream(uint64_t seed, RngTag tag, uint32_t stream, uint32_t lane_a = 0,
            uint32_t lane_b = 0);

  // Uniform double in [0, 1) built from 53 bits of one Philox block.
  double uniform();
  // Uniform double in [lo, hi).
  double uniform(double lo, double hi);
  // Integer in [0, n), n >= 1.
  uint32_t uniform_index(uint32_t n);
  // Standard normal via Box-Muller.
  double normal();
  // Raw 64-bit draw.
  uint64_t bits();

  // Value for a fixed draw index, independent of the stream's own cursor.
  double uniform_at(uint32_t draw) const;

 private:
  std::array<uint32_t, 4> counter_at(uint32_t draw) const;

  std::array<uint32_t, 2> key_;
  std::array<uint32_t, 4> base_;
  uint32_t draw_ = 0;
  bool have_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace boltzseg
