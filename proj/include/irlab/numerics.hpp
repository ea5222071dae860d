#pragma once

#include <Eigen/Core>
#include <cmath>
#include <limits>

namespace irlab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// log(sum(exp(x))) with max subtraction; safe for widely spread inputs.
template <typename Derived>
double logsumexp(const Eigen::MatrixBase<Derived>& x) {
  const double m = x.maxCoeff();
  if (!std::isfinite(m)) return m;  // all -inf (empty support) or an inf entry
  return m + std::log((x.array() - m).exp().sum());
}

/// log(sum(w * exp(x))) with max subtraction. Weights must be >= 0.
/// Row and column vectors mix freely; both are flattened.
template <typename DerivedX, typename DerivedW>
double weighted_logsumexp(const Eigen::MatrixBase<DerivedX>& x,
                          const Eigen::MatrixBase<DerivedW>& w) {
  const double m = x.maxCoeff();
  if (!std::isfinite(m)) return m;
  const double s =
      (w.reshaped().array() * (x.reshaped().array() - m).exp()).sum();
  return m + std::log(s);
}

/// softmax(x), numerically stable; accepts row or column vectors.
template <typename Derived>
Vec softmax(const Eigen::MatrixBase<Derived>& x) {
  const double m = x.maxCoeff();
  Vec e = (x.reshaped().array() - m).exp();
  return e / e.sum();
}

/// log softmax(x) = x - logsumexp(x); accepts row or column vectors.
template <typename Derived>
Vec log_softmax(const Eigen::MatrixBase<Derived>& x) {
  return x.reshaped().array() - logsumexp(x);
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(1 + exp(x)) without overflow; equals -log(sigmoid(-x)).
inline double log1pexp(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kPi = 3.14159265358979323846;

}  // namespace irlab
