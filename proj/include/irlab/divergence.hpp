#pragma once

/// f-divergence registry.
///
/// Each entry carries the generator f (convex, f(1) = 0), its convex
/// conjugate f*, the conjugate's domain, and the asymptotic slope
/// f'(inf) = lim f(u)/u used when the second measure vanishes. The pairing
/// (f, f*) is never trusted on faith: conjugate_check() recomputes
/// f(x) = max_t { x t - f*(t) } on a grid and reports the worst residual.

#include <functional>
#include <string>
#include <vector>

#include "irlab/numerics.hpp"

namespace irlab {

enum class LossKind { tv_mle, pearson, hellinger, kl, reverse_kl, js };

/// Clipping applied inside loss evaluation for numerically hostile
/// divergences (log/exp forms). Disabled entries pass values through.
struct StabilityFlags {
  bool enabled = false;
  double log_lo = 1e-6;
  double log_hi = 1e6;
  double exp_lo = -30.0;
  double exp_hi = 30.0;
};

struct Interval {
  double lo = -kInf;
  double hi = kInf;
  bool open_lo = false;
  bool open_hi = false;
};

/// Grid for the duality residual check.
struct GridSpec {
  double x_lo = 0.05;
  double x_hi = 5.0;
  int x_points = 200;
  double t_lo = -8.0;   // intersected with dom(f*)
  double t_hi = 10.0;
  int t_points = 8001;
};

struct FDivergenceSpec {
  std::string name;
  std::function<double(double)> f;        // generator, on u >= 0
  std::function<double(double)> f_star;   // convex conjugate
  std::function<double(double)> f_star_prime;
  Interval dom_f_star;
  double slope_at_infinity = kInf;        // f'(inf); finite => extension slope
  LossKind loss_kind = LossKind::tv_mle;
  StabilityFlags stability;
  double duality_bound = 1e-4;            // documented conjugate_check bound
  GridSpec default_grid;
};

/// The built-in table: total_variation, pearson_chi2, squared_hellinger,
/// kl, reverse_kl, jensen_shannon. The last three have stability clipping on.
const std::vector<FDivergenceSpec>& builtin_divergences();

/// Lookup by name; throws Error if unknown.
const FDivergenceSpec& find_divergence(const std::string& name);

/// Max over the x grid of |f(x) - max_t (x t - f*(t))|, t gridded over
/// dom(f*) intersected with [grid.t_lo, grid.t_hi].
double conjugate_check(const FDivergenceSpec& spec, const GridSpec& grid);
inline double conjugate_check(const FDivergenceSpec& spec) {
  return conjugate_check(spec, spec.default_grid);
}

}  // namespace irlab
