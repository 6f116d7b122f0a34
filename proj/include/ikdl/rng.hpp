#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace ikdl {

// Seeded generator with portable uniform/normal draws. std distributions are
// implementation-defined, so they are not used where outputs must be
// reproducible across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);
  double normal();

  // First `count` entries of a Fisher-Yates shuffle of [0, n).
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count);
  void shuffle(std::vector<std::size_t>& items);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Derives an independent stream seed, e.g. one per class.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace ikdl
