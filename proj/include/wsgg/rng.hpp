#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace wsgg {

// SplitMix64 generator with hand-rolled distributions. std:: distributions
// are implementation-defined, so every draw the pipeline makes goes through
// this type to keep runs byte-reproducible.
struct Rng {
  std::uint64_t state;

  explicit Rng(std::uint64_t seed) : state(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [0, n).
  int next_int(int n) { return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n)); }

  // Box-Muller, cosine branch only.
  double normal();

  // Uniform over the (n-1)-simplex, i.e. a flat Dirichlet draw.
  std::vector<double> dirichlet_flat(int n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      int j = next_int(i + 1);
      std::swap(v[i], v[j]);
    }
  }
};

// Derives the seed of a named substream from the root seed. Stage-level
// determinism: every consumer owns a stream keyed by its name.
std::uint64_t substream_seed(std::uint64_t root, std::string_view name);

}  // namespace wsgg
