#pragma once

#include <cstdint>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace ilde {

// Deterministic counter-free PRNG (splitmix64). All stochastic code in the
// library draws from streams derived from a root seed plus a purpose tag, so
// identical seeds reproduce identical results bit-for-bit regardless of how
// many independent streams run in parallel.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  int uniform_int(int n) {
    if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
    return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
  }

  // Sample an index from a probability vector by CDF inversion.
  int categorical(const std::vector<double>& probs) {
    const double u = uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
  }

  int categorical(const double* probs, int n) {
    const double u = uniform();
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    return n - 1;
  }

 private:
  std::uint64_t state_;
};

// 64-bit FNV-1a over an arbitrary byte tag; used to derive sub-stream seeds.
inline std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t mix_u64(std::uint64_t x) {
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Sub-stream derived from (root seed, purpose tag, index).
inline Rng derive_rng(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) {
  return Rng(mix_u64(seed ^ mix_u64(hash_tag(tag)) ^ mix_u64(index * 0x9e3779b97f4a7c15ULL + 1)));
}

}  // namespace ilde
