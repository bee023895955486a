#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace entfact {

// Seeded random source. The engine is std::mt19937_64 (bit-exact across
// standard libraries); the distributions are implemented here because the
// std:: ones are implementation-defined and would break reproducible datasets.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);

  // Uniform double in [0, 1) with 53 random bits.
  double uniform01();

  double normal(double mean = 0.0, double stddev = 1.0);

  bool bernoulli(double p) { return uniform01() < p; }

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

// Sub-seed for a labeled stream, e.g. derive_seed(master, "split") or
// derive_seed(master, "doc:" + id). Stable across platforms.
std::uint64_t derive_seed(std::uint64_t master, std::string_view label);
std::uint64_t derive_seed(std::uint64_t master, std::string_view label, std::uint64_t index);

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace entfact
