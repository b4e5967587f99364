#include "wsgg/rng.hpp"

#include <cmath>

namespace wsgg {

double Rng::normal() {
  // Guard against log(0); next_double() is in [0, 1).
  double u1 = 1.0 - next_double();
  double u2 = next_double();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

std::vector<double> Rng::dirichlet_flat(int n) {
  std::vector<double> w(n);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    w[i] = -std::log(1.0 - next_double());
    total += w[i];
  }
  for (int i = 0; i < n; ++i) w[i] /= total;
  return w;
}

std::uint64_t substream_seed(std::uint64_t root, std::string_view name) {
  // FNV-1a over the name, mixed with the root through one SplitMix64 round.
  std::uint64_t h = 14695981039346656037ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  Rng mix(root ^ h);
  mix.next_u64();
  return mix.next_u64();
}

}  // namespace wsgg
