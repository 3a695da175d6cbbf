#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace fsmix {

// Error taxonomy. The CLI maps these onto exit codes:
//   ConfigError -> 2, DegenerateMetricError -> 3, DivergedError -> 4.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvalidInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvalidArgumentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegenerateMetricError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DivergedError : std::runtime_error {
  DivergedError(const std::string& msg, int64_t iteration)
      : std::runtime_error(msg), iteration(iteration) {}
  int64_t iteration = -1;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Counter-style generator (splitmix64). State is a single word, so
// checkpoints restore the stream bit-exactly on any platform.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; the second value is discarded to keep the state one word.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Unbiased draw from [0, n).
  int64_t uniform_int(int64_t n) {
    if (n <= 0) throw InvalidArgumentError("uniform_int: n must be positive");
    uint64_t un = static_cast<uint64_t>(n);
    uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return static_cast<int64_t>(v % un);
  }

  // Independent stream derived from the current state.
  Rng split() { return Rng(next_u64() ^ 0xD1B54A32D192ED03ULL); }

  uint64_t state() const { return state_; }
  void set_state(uint64_t s) { state_ = s; }

 private:
  uint64_t state_;
};

}  // namespace fsmix
