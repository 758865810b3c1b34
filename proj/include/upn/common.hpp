#ifndef UPN_COMMON_HPP
#define UPN_COMMON_HPP

#include <cstdint>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace upn {

using Real = double;

// Dense user index (0..n-1). Scenario-level ids are mapped at graph build.
using UserIx = int;
using ChannelIx = int;
using LinkIx = int;

constexpr Real kInf = std::numeric_limits<Real>::infinity();

/// Scenario or argument rejected before any solve ran.
struct ScenarioError : std::runtime_error {
  explicit ScenarioError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical domain violated (pole crossed, guard breached).
struct DomainError : std::runtime_error {
  explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Deterministic RNG. std::distributions are implementation-defined, so the
// uniform draws are derived from raw mt19937_64 output to keep emitted files
// reproducible across standard libraries.
// ---------------------------------------------------------------------------
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : s_(splitmix(seed)) {}

  std::uint64_t next_u64() {
    // xorshift* keeps the state tiny; quality is ample for scenario sampling.
    std::uint64_t x = s_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    s_ = x;
    return x * 0x2545F4914F6CDD1DULL;
  }

  /// Uniform in [0,1).
  Real uniform() { return static_cast<Real>(next_u64() >> 11) * 0x1.0p-53; }

  Real uniform(Real lo, Real hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
  }

  /// Derive an independent stream (run seeds inside sweeps).
  std::uint64_t fork(std::uint64_t salt) { return splitmix(s_ ^ (salt * 0x9E3779B97F4A7C15ULL)); }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    x = x ^ (x >> 31);
    return x ? x : 0x853C49E6748FEA9BULL;
  }
  std::uint64_t s_;
};

inline bool nearly_equal(Real a, Real b, Real tol) { return std::abs(a - b) <= tol; }

}  // namespace upn

#endif  // UPN_COMMON_HPP
