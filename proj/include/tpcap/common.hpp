#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tpcap {

// Error hierarchy. The CLI maps ConfigError to exit code 2 (usage),
// everything else to 1 (runtime failure).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};
class ShapeError : public Error {
 public:
  using Error::Error;
};
class InputError : public Error {
 public:
  using Error::Error;
};
class ParseError : public Error {
 public:
  using Error::Error;
};
class IoError : public Error {
 public:
  using Error::Error;
};
class TrainingError : public Error {
 public:
  using Error::Error;
};
class CorruptionError : public Error {
 public:
  using Error::Error;
};

inline uint64_t fnv1a64(const void* data, size_t n,
                        uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64(std::string_view s,
                        uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a64(s.data(), s.size(), h);
}

std::string hex64(uint64_t v);

// Derives a sub-seed for a named role so independent streams never collide.
inline uint64_t derive_seed(uint64_t seed, std::string_view role) {
  uint64_t h = fnv1a64(role);
  h ^= seed + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  // splitmix64 finalizer
  h += 0x9e3779b97f4a7c15ull;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
  return h ^ (h >> 31);
}

// Rounds a double through float32. Parameters are kept on the float32 grid so
// checkpoints (stored as little-endian f32) round-trip bit-exactly.
inline double quantize_f32(double x) {
  return static_cast<double>(static_cast<float>(x));
}

// Deterministic RNG. Gaussian via Box-Muller so draws do not depend on the
// standard library's distribution implementation.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  double uniform() {
    // 53-bit uniform in [0, 1)
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double gauss(double mean = 0.0, double std = 1.0) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + spare_ * std;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return mean + r * std::cos(theta) * std;
  }

  // Uniform integer in [0, n).
  uint64_t below(uint64_t n) { return n == 0 ? 0 : gen_() % n; }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace tpcap
