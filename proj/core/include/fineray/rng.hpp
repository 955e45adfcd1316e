#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace fineray {

/// Deterministic RNG. The raw generator is std::mt19937_64; the uniform and
/// normal transforms are implemented here so draws are reproducible
/// independent of standard-library distribution internals.
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(uint64_t seed) : gen_(seed) {}

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (one value per two uniforms; no caching,
  /// so the draw count is predictable).
  double normal() {
    double u1 = uniform(), u2 = uniform();
    while (u1 == 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  uint64_t next_u64() { return gen_(); }

  /// Integer in [0, n).
  uint64_t below(uint64_t n) { return static_cast<uint64_t>(uniform() * static_cast<double>(n)); }

  /// Derive an independent stream, e.g. one per parameter tensor; keyed by a
  /// string so adding unrelated modules does not shift existing init draws.
  static Rng derive(uint64_t seed, const std::string& key) {
    // FNV-1a
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : key) {
      h ^= c;
      h *= 1099511628211ull;
    }
    return Rng(seed ^ h);
  }

  std::string serialize() const {
    std::ostringstream os;
    os << gen_;
    return os.str();
  }
  void deserialize(const std::string& s) {
    std::istringstream is(s);
    is >> gen_;
  }

  bool operator==(const Rng& o) const { return gen_ == o.gen_; }

 private:
  std::mt19937_64 gen_;
};

}  // namespace fineray
