#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace aura {

using Vector = Eigen::VectorXd;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid arguments, malformed configuration or files. The CLI maps this to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Filter specification that cannot be met with the requested length.
class DesignError : public Error {
 public:
  using Error::Error;
};

/// Training failure: empty class, divergence, no convergence.
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Uniformly sampled real signal.
struct SampleBuffer {
  Vector samples;
  double sample_rate_hz = 96000.0;
  double start_time_s = 0.0;

  SampleBuffer() = default;
  SampleBuffer(Vector s, double rate, double start = 0.0)
      : samples(std::move(s)), sample_rate_hz(rate), start_time_s(start) {}

  Eigen::Index size() const { return samples.size(); }
  bool empty() const { return samples.size() == 0; }
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate_hz; }
  double time_at(Eigen::Index n) const {
    return start_time_s + static_cast<double>(n) / sample_rate_hz;
  }

  /// Throws ConfigError when the rate is non-positive or any sample is NaN/Inf.
  void validate() const;
};

inline double rms(const Eigen::Ref<const Vector>& x) {
  if (x.size() == 0) return 0.0;
  return std::sqrt(x.squaredNorm() / static_cast<double>(x.size()));
}

// Platform-stable random numbers. The standard distributions are
// implementation-defined, so seeded outputs would differ between toolchains.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Child seed for stream `index` of a master seed (counter-based split).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(master ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

/// xoshiro256** with splitmix64 seeding and Box-Muller normals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) { reseed(seed); }

  void reseed(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& word : state_) {
      x += 0x9E3779B97F4A7C15ULL;
      word = splitmix64(x);
    }
    has_spare_ = false;
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) return 0;
    // Lemire's multiply-shift; bias is negligible for the ranges used here.
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t state_[4]{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// 64-bit FNV-1a, used for file checksums and dataset fingerprints.
std::uint64_t fnv1a(const void* data, std::size_t size,
                    std::uint64_t seed = 0xCBF29CE484222325ULL);
std::string hex64(std::uint64_t value);

}  // namespace aura
