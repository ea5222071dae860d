#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>

namespace irlab {

/// Seeded generator with hand-rolled draws so that identical seeds give
/// identical streams on every platform (std distributions are
/// implementation-defined). Pass by value to give a callee its own stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n).
  int uniform_int(int n) {
    return static_cast<int>(static_cast<std::uint64_t>(uniform01() * n));
  }

  /// Index drawn from a probability vector (assumed to sum to ~1).
  int categorical(const Eigen::VectorXd& probs) {
    double u = uniform01();
    double acc = 0.0;
    const Eigen::Index n = probs.size();
    for (Eigen::Index i = 0; i < n; ++i) {
      acc += probs[i];
      if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(n - 1);  // guard against rounding at the tail
  }

  /// Derive an independent stream; stable given (seed, salt).
  Rng split(std::uint64_t salt) {
    std::uint64_t s = engine_();
    return Rng(s ^ (salt * 0x9e3779b97f4a7c15ULL));
  }

  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace irlab
