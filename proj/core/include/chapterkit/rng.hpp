#pragma once

#include <cstdint>
#include <vector>

namespace chapterkit {

// SplitMix64 generator. Used everywhere instead of <random> engines and
// distributions so that seeded runs produce identical streams on every
// platform and standard library.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64();

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform();

  // Uniform integer in [0, n). n must be > 0.
  uint64_t uniform_int(uint64_t n);

  // Standard normal via Box-Muller.
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    if (items.size() < 2) return;
    for (size_t i = items.size() - 1; i > 0; --i) {
      size_t j = static_cast<size_t>(uniform_int(i + 1));
      std::swap(items[i], items[j]);
    }
  }

 private:
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Mixes a seed with stream tags (epoch, step, document index, ...) into an
// independent child seed. Deterministic and order-sensitive.
uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0);

}  // namespace chapterkit
