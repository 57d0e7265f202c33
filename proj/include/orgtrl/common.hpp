#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace orgtrl {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// malformed header / container
struct FormatError : Error {
  using Error::Error;
};
// payload shorter than the header promises
struct CorruptionError : Error {
  using Error::Error;
};
// well-formed but invalid content (non-finite values, bad ranges)
struct ValidationError : Error {
  using Error::Error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct IndexError : Error {
  using Error::Error;
};
struct LoadError : Error {
  using Error::Error;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic RNG with hand-rolled draws so output bytes do not depend on
// libstdc++ distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : s_(splitmix64(seed ^ 0x5851f42d4c957f2dULL)) {}

  std::uint64_t next() {
    // xorshift64* on a splitmix-initialized state
    s_ ^= s_ >> 12;
    s_ ^= s_ << 25;
    s_ ^= s_ >> 27;
    return s_ * 0x2545f4914f6cdd1dULL;
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    double u1 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next() % n; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[static_cast<std::size_t>(below(i))]);
    }
  }

  // Independent deterministic substream, e.g. one per epoch.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64(seed ^ splitmix64(stream + 0x153bULL));
  }

 private:
  std::uint64_t s_;
};

}  // namespace orgtrl
