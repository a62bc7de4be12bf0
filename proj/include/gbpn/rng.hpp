#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "gbpn/errors.hpp"

namespace gbpn {

// Deterministic random stream. mt19937_64 output is pinned by the standard
// and the distributions below are implemented by hand, so a seed produces
// the same sequence on every platform (std::uniform_* make no such promise).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Lemire multiply-shift; bias is < 2^-64.
  int uniform_int(int n) {
    if (n <= 0) throw InputError("Rng::uniform_int: n must be positive");
    const auto x = static_cast<unsigned __int128>(gen_());
    return static_cast<int>((x * static_cast<std::uint64_t>(n)) >> 64);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      std::swap(v[i], v[uniform_int(i + 1)]);
    }
  }

  // Independent child stream; distinct tags give distinct streams.
  Rng fork(std::uint64_t tag) { return Rng(mix(next_u64() + tag)); }

  // splitmix64 finalizer; used to derive well-separated seeds.
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace gbpn
