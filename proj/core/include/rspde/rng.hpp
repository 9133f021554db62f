#pragma once

#include <cmath>
#include <cstdint>

namespace rspde {

// splitmix64 step: increments the state by the golden-gamma and returns a
// mixed output word. Used both as the core generator and as the seed mixer.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Documented seed-splitting: stream tags keep independent noise sources
// (driver, lift, initial data, ...) decoupled, the sample index makes
// ensemble generation embarrassingly parallel and scheduling-independent.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                 std::uint64_t sample) {
  std::uint64_t s = master;
  std::uint64_t a = splitmix64(s);
  s ^= 0x5851f42d4c957f2dULL * (stream + 1);
  std::uint64_t b = splitmix64(s);
  s ^= 0xd1342543de82ef95ULL * (sample + 1);
  std::uint64_t c = splitmix64(s);
  return a ^ (b + 0x9e3779b97f4a7c15ULL * (sample + 1)) ^ c;
}

// Stream tags for derive_seed.
enum : std::uint64_t {
  kStreamBrownianDriver = 1,
  kStreamLift = 2,
  kStreamInitialData = 3,
  kStreamProbe = 4,
};

// Minimal deterministic generator. Box-Muller is spelled out explicitly so
// Gaussian draws are bitwise stable across standard-library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return splitmix64(state_); }

  // uniform on (0, 1]
  double next_unit() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = next_unit();
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace rspde
