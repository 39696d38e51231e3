#pragma once

#include <cstdint>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace drgr {

using Vec = std::vector<double>;

/// Dense row-major matrix. All linear algebra in this project is written
/// against this one type; shapes are checked at the call sites that care.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vec a;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return a[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return a[r * cols + c]; }
  std::size_t size() const { return a.size(); }

  void zero() { std::fill(a.begin(), a.end(), 0.0); }
};

inline bool all_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline bool all_finite(const Mat& m) { return all_finite(m.a); }

[[noreturn]] inline void fail(const std::string& msg) { throw std::runtime_error(msg); }

std::uint64_t splitmix64(std::uint64_t x);

/// Seeded random source. The engine is mt19937_64 (bit-exact by the standard)
/// and every distribution is implemented here by hand, so identical seeds give
/// identical streams on any platform. Substreams keyed by (seed, stream id)
/// make per-group / per-candidate draws independent of processing order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  static Rng substream(std::uint64_t seed, std::uint64_t stream) {
    return Rng(splitmix64(seed ^ splitmix64(stream + 0x9e3779b97f4a7c15ULL)));
  }

  std::uint64_t next_u64() { return eng_(); }

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi], inclusive. Rejection sampling, no modulo bias.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (lo > hi) fail("uniform_int: lo > hi");
    std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return lo + static_cast<std::int64_t>(next_u64());
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return lo + static_cast<std::int64_t>(x % span);
  }

  /// Box-Muller; one draw consumes two engine outputs.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// k distinct values from [0, n) with excluded(x) == false. The caller must
  /// guarantee the admissible pool has at least k elements.
  template <class Excluded>
  std::vector<int> sample_distinct(std::int64_t n, std::size_t k, Excluded excluded) {
    std::vector<int> out;
    out.reserve(k);
    std::vector<bool> taken;  // lazily sized; n stays modest in this project
    taken.assign(static_cast<std::size_t>(n), false);
    while (out.size() < k) {
      int x = static_cast<int>(uniform_int(0, n - 1));
      if (taken[static_cast<std::size_t>(x)] || excluded(x)) continue;
      taken[static_cast<std::size_t>(x)] = true;
      out.push_back(x);
    }
    return out;
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace drgr
