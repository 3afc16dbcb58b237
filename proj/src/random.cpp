#include "wave/random.hpp"

#include <cmath>

namespace wave {

double truncated_normal(Rng& rng, double std) {
  std::normal_distribution<double> dist(0.0, std);
  for (;;) {
    const double v = dist(rng);
    if (std::abs(v) <= 2.0 * std) return v;
  }
}

void fill_truncated_normal(Matrix& m, Rng& rng, double std) {
  for (double& v : m.data()) v = truncated_normal(rng, std);
}

void fill_normal(Matrix& m, Rng& rng, double std) {
  std::normal_distribution<double> dist(0.0, std);
  for (double& v : m.data()) v = dist(rng);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  // splitmix64 finalizer over the combined words
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace wave
