#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace micromotion {

// Defaults shared across the pipeline.
inline constexpr double kDefaultConfThreshold = 0.3;
inline constexpr double kMinBBoxHeight = 1.0;  // pixels
inline constexpr double kMinHipWidth = 2.0;    // pixels; below this 0.25*H is used
inline constexpr double kBnEpsilon = 1e-5;
inline constexpr double kBnMomentum = 0.9;
inline constexpr double kProbFloor = 1e-12;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegeneratePose : Error {
  using Error::Error;
};
struct ParseError : Error {
  using Error::Error;
};
struct DuplicateFrame : Error {
  using Error::Error;
};
struct ChecksumMismatch : Error {
  using Error::Error;
};
struct VersionUnsupported : Error {
  using Error::Error;
};
struct InsufficientData : Error {
  using Error::Error;
};
struct NonFinite : Error {
  using Error::Error;
};
struct LengthMismatch : Error {
  using Error::Error;
};
struct EmptyMatrix : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};

/// Seeded random source. All draws go through explicit bit manipulation of
/// the mt19937_64 stream so that results do not depend on the standard
/// library's distribution implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1).
  double next_double() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  /// Uniform integer in [0, n). n must be > 0.
  uint64_t uniform_int(uint64_t n) {
    const uint64_t bound = n == 0 ? 0 : UINT64_MAX - UINT64_MAX % n;
    uint64_t v = engine_();
    while (v >= bound) v = engine_();
    return v % n;
  }

  bool bernoulli(double p) { return next_double() < p; }

  /// Box-Muller; draws two uniforms per call and discards the pair's sine leg.
  double normal(double mean, double sigma) {
    double u1 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    const double u2 = next_double();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    return mean + sigma * mag * std::cos(2.0 * M_PI * u2);
  }

  uint64_t raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

/// Shortest round-trip decimal form (std::to_chars).
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

/// Maps an angle to (-pi, pi].
inline double wrap_to_pi(double a) {
  a = std::fmod(a, 2.0 * M_PI);
  if (a <= -M_PI) a += 2.0 * M_PI;
  if (a > M_PI) a -= 2.0 * M_PI;
  return a;
}

/// Maps a pi-normalized angle to (-1, 1].
inline double wrap_unit(double a) {
  a = std::fmod(a, 2.0);
  if (a <= -1.0) a += 2.0;
  if (a > 1.0) a -= 2.0;
  return a;
}

}  // namespace micromotion
