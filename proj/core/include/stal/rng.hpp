#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace stal {

// splitmix64 finalizer; used to derive independent seeds for sub-streams.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// FNV-1a, for deriving per-name sub-streams (e.g. parameter initializers)
// that do not depend on enumeration order.
inline std::uint64_t hash_name(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Seeded generator with self-owned mappings so sampled values depend only on
// the seed, not on the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix_seed(seed, 0x51a1c0deULL)) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n); n must be positive.
  int uniform_int(int n) {
    auto v = static_cast<int>(uniform() * static_cast<double>(n));
    return v < n ? v : n - 1;
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Fisher-Yates with this generator; stable across platforms.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      std::swap(v[i], v[static_cast<std::size_t>(uniform_int(i + 1))]);
    }
  }

  // Draws k distinct indices from [0, n) in random order (k <= n).
  std::vector<int> sample_without_replacement(int n, int k) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    shuffle(idx);
    idx.resize(static_cast<std::size_t>(k < n ? k : n));
    return idx;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace stal
