#include "gradcritic/rng.hpp"

#include <random>

namespace gradcritic {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : key_(mix64(mix64(seed + kGolden) ^ (stream * 0xD1B54A32D192ED03ULL + 0x632BE59BD9B4E019ULL))) {}

Rng::result_type Rng::operator()() { return mix64(key_ + (++counter_) * kGolden); }

double Rng::uniform() { return std::generate_canonical<double, 53>(*this); }

double Rng::normal() {
  std::normal_distribution<double> dist;
  return dist(*this);
}

int Rng::categorical(const double* probs, int n) {
  double u = uniform();
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // Rounding left u above the total; return the last action with mass.
  for (int i = n - 1; i >= 0; --i)
    if (probs[i] > 0.0) return i;
  return n - 1;
}

int Rng::uniform_int(int n) { return static_cast<int>(uniform() * n); }

Rng Rng::fork(std::uint64_t id) const { return Rng(key_, id + 1); }

}  // namespace gradcritic
