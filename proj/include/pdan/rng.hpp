#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <string>

#include "pdan/common.hpp"

namespace pdan {

/// Deterministic random stream. mt19937_64 supplies raw bits; every derived
/// draw (uniform, normal, bounded int) is implemented here so the sequence
/// depends only on the seed, never on the standard library's distribution
/// internals. One normal() consumes exactly two raw draws, uniform() exactly
/// one, so streams can be reasoned about and replayed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in (0, 1], 53 significant bits. The open lower end keeps log()
  /// finite in Box-Muller.
  double uniform() {
    return static_cast<double>((gen_() >> 11) + 1) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t uniform_below(std::uint64_t n) {
    if (n == 0) throw ValidationError("uniform_below: n must be positive");
    const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t limit = max - max % n;
    std::uint64_t v = gen_();
    while (v >= limit) v = gen_();
    return v % n;
  }

  /// Standard normal via Box-Muller, no caching.
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  /// Textual engine state, for exact training resume.
  std::string state() const {
    std::ostringstream os;
    os << gen_;
    return os.str();
  }

  void restore(const std::string& s) {
    std::istringstream is(s);
    is >> gen_;
    if (is.fail()) throw IoError("Rng::restore: malformed state string");
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace pdan
