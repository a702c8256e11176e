#pragma once
// Seeded RNG helpers. mt19937_64 keeps streams portable across platforms;
// the distributions are hand-rolled because libstdc++/libc++ disagree on
// std::uniform_real_distribution output for identical engines.

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace procomp {

class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : eng_(seed) {}

  uint64_t raw() { return eng_(); }

  // uniform in [0,1)
  double uniform() {
    // 53 random bits -> double mantissa
    return static_cast<double>(eng_() >> 11) * (1.0 / 9007199254740992.0);
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  float uniformf(float lo, float hi) { return static_cast<float>(uniform(lo, hi)); }

  // integer in [0, n)
  uint64_t below(uint64_t n) {
    // modulo bias is irrelevant here (n << 2^64), keep it simple and portable
    return eng_() % n;
  }
  int range(int lo, int hi) {  // inclusive lo, exclusive hi
    return lo + static_cast<int>(below(static_cast<uint64_t>(hi - lo)));
  }

  // standard normal, Box-Muller (polar rejection avoided for determinism
  // across the pair boundary: plain trig form, consumes exactly 2 draws)
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }
  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  template <typename It>
  void shuffle(It first, It last) {
    // Fisher-Yates with our own index draws (std::shuffle is unspecified)
    auto n = static_cast<uint64_t>(last - first);
    for (uint64_t i = n; i > 1; --i) {
      uint64_t j = below(i);
      std::swap(first[i - 1], first[j]);
    }
  }

  // engine state round-trips through text; used by training resume
  std::string save_state() const {
    std::ostringstream os;
    os << eng_;
    return os.str();
  }
  void load_state(const std::string& s) {
    std::istringstream is(s);
    is >> eng_;
  }

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

// FNV-1a over bytes; used to derive per-image noise seeds from content.
inline uint64_t fnv1a(const void* bytes, size_t n, uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace procomp
