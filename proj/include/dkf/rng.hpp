#pragma once

#include <cstdint>
#include <cmath>

namespace dkf {

// Counter-free splittable PRNG. A stream is identified by a chain of ids
// hashed into the seed, so parallel Monte Carlo trials draw independent,
// reproducible sequences regardless of scheduling. Core generator is
// SplitMix64; Gaussians come from Box-Muller on the raw uniforms, which keeps
// the sequence identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix(seed ^ 0x9e3779b97f4a7c15ull)) {}

  // Derive an independent stream, e.g. fork(seed, trial_id) or
  // fork(seed, trial_id, sensor_id).
  template <typename... Ids>
  static Rng fork(std::uint64_t seed, Ids... ids) {
    std::uint64_t h = mix(seed ^ 0x9e3779b97f4a7c15ull);
    ((h = mix(h ^ (0xbf58476d1ce4e5b9ull * (static_cast<std::uint64_t>(ids) + 1)))), ...);
    Rng r(0);
    r.state_ = h;
    r.have_spare_ = false;
    return r;
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix(state_);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1]; avoids log(0) in Box-Muller.
  double uniform_pos() { return 1.0 - uniform(); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::uint64_t uniform_int(std::uint64_t bound) { return next_u64() % bound; }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u = uniform_pos();
    const double v = uniform();
    const double r = std::sqrt(-2.0 * std::log(u));
    const double a = 6.283185307179586476925286766559 * v;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace dkf
