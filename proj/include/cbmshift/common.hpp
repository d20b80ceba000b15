#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cbmshift {

/// Raised for bad user input: malformed files, out-of-range values,
/// inconsistent configuration. The CLI maps this to exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Small dense matrix, row-major. All model math in this project is desk-scale
// (dimensions in the tens), so a flat vector beats pulling in a linalg
// dependency and keeps the manual gradients transparent.
// ---------------------------------------------------------------------------
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

  bool same_shape(const Matrix& other) const {
    return rows == other.rows && cols == other.cols;
  }
};

// ---------------------------------------------------------------------------
// Deterministic RNG. std::mt19937_64 with hand-rolled transforms so streams
// are bit-stable across standard library implementations; std::*_distribution
// is implementation-defined.
// ---------------------------------------------------------------------------
namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}
}  // namespace detail

/// Per-stage offsets for deriving independent streams from one run seed.
enum class SeedStream : std::uint64_t {
  scenario_setup = 1,
  id_data = 2,
  ood_identify = 3,
  ood_test = 4,
  oracle_table = 5,
  param_init = 6,
  train_shuffle = 7,
  finetune_shuffle = 8,
};

inline std::uint64_t derive_seed(std::uint64_t base, SeedStream stream,
                                 std::uint64_t salt = 0) {
  std::uint64_t mixed = detail::splitmix64(base ^ (static_cast<std::uint64_t>(stream) * 0x9E3779B97F4A7C15ULL));
  return detail::splitmix64(mixed ^ detail::splitmix64(salt + 0x632BE59BD9B4E019ULL));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(detail::splitmix64(seed)) {}

  std::uint64_t next_u64() {
    // xorshift64* keeps the generator header-only and platform-stable.
    std::uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545F4914F6CDD1DULL;
  }

  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller; two uniforms per draw, no cached state.
  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool bernoulli(double p) { return uniform01() < p; }

  /// Uniform integer in [0, n). Rejection sampling avoids modulo bias.
  std::uint64_t uniform_int(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  /// In-place Fisher-Yates shuffle with this generator.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Numeric helpers shared across modules.
// ---------------------------------------------------------------------------
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double logit(double p) {
  const double eps = 1e-12;
  p = std::min(std::max(p, eps), 1.0 - eps);
  return std::log(p / (1.0 - p));
}

inline double clamp01(double x) { return std::min(std::max(x, 0.0), 1.0); }

/// Population standard deviation: divide by the count, not count-1.
inline double population_std(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) {
    const double d = v - mean;
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(values.size()));
}

/// Argmax with ties broken toward the lowest index.
inline int argmax_lowest(std::span<const double> values) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

inline bool all_finite(std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Logging, controlled by CBMSHIFT_LOG in {quiet, info, debug}.
// ---------------------------------------------------------------------------
enum class LogLevel { quiet = 0, info = 1, debug = 2 };

LogLevel log_level();
void log_info(const std::string& message);
void log_debug(const std::string& message);

}  // namespace cbmshift
