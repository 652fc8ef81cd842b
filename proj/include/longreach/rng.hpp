#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace longreach {

// Counter-based splittable PRNG (a splitmix64 stream over a keyed counter).
// Substreams are derived by name, so adding a new consumer never shifts the
// values an existing consumer sees. All distributions are implemented here
// rather than with <random> so streams are identical across platforms.
class Rng {
 public:
  explicit Rng(uint64_t seed) : key_(mix(seed ^ kKeySalt)) {}

  // Independent stream; deterministic in (this stream's key, name).
  Rng substream(std::string_view name) const;

  uint64_t next_u64() { return mix(key_ + (++counter_) * kGolden); }
  uint32_t next_u32() { return static_cast<uint32_t>(next_u64() >> 32); }

  // Uniform in [0, 1), 24 bits of precision.
  float uniform() { return static_cast<float>(next_u32() >> 8) * 0x1.0p-24f; }
  float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be > 0.
  uint64_t below(uint64_t n);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  static uint64_t mix(uint64_t x);

 private:
  static constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ull;
  static constexpr uint64_t kKeySalt = 0x5851F42D4C957F2Dull;
  Rng(uint64_t key, int) : key_(key) {}

  uint64_t key_ = 0;
  uint64_t counter_ = 0;
};

}  // namespace longreach
