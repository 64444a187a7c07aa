#pragma once

#include <cstdint>
#include <limits>
#include <vector>

namespace gradcritic {

// Counter-based generator keyed by (seed, stream). Output k is a SplitMix64
// finalizer applied to key + k * golden-gamma, so any stream can be forked
// without touching the parent's state.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  // Uniform in [0, 1).
  double uniform();
  double normal();
  // Index drawn from a discrete distribution by inverse CDF.
  int categorical(const double* probs, int n);
  int uniform_int(int n);

  // Independent child stream; deterministic in (this key, id).
  Rng fork(std::uint64_t id) const;

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace gradcritic
