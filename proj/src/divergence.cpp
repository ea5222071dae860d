#include "irlab/divergence.hpp"

#include <algorithm>
#include <cmath>

#include "irlab/errors.hpp"

namespace irlab {

namespace {

std::vector<FDivergenceSpec> make_builtins() {
  std::vector<FDivergenceSpec> out;

  {
    FDivergenceSpec s;
    s.name = "total_variation";
    s.f = [](double u) { return 0.5 * std::abs(u - 1.0); };
    s.f_star = [](double t) { return t; };
    s.f_star_prime = [](double) { return 1.0; };
    s.dom_f_star = {-0.5, 0.5, false, false};
    s.slope_at_infinity = 0.5;
    s.loss_kind = LossKind::tv_mle;
    s.duality_bound = 1e-4;
    out.push_back(std::move(s));
  }
  {
    FDivergenceSpec s;
    s.name = "pearson_chi2";
    s.f = [](double u) { return (u - 1.0) * (u - 1.0); };
    s.f_star = [](double t) { return 0.25 * t * t + t; };
    s.f_star_prime = [](double t) { return 0.5 * t + 1.0; };
    s.dom_f_star = {};  // all of R
    s.slope_at_infinity = kInf;
    s.loss_kind = LossKind::pearson;
    s.duality_bound = 1e-4;
    s.default_grid.t_lo = -12.0;
    s.default_grid.t_hi = 12.0;
    s.default_grid.t_points = 24001;
    out.push_back(std::move(s));
  }
  {
    FDivergenceSpec s;
    s.name = "squared_hellinger";
    s.f = [](double u) {
      const double d = std::sqrt(u) - 1.0;
      return d * d;
    };
    s.f_star = [](double t) { return t / (1.0 - t); };
    s.f_star_prime = [](double t) {
      const double d = 1.0 - t;
      return 1.0 / (d * d);
    };
    s.dom_f_star = {-kInf, 1.0, false, true};
    s.slope_at_infinity = 1.0;
    s.loss_kind = LossKind::hellinger;
    s.duality_bound = 1e-4;
    s.default_grid.t_lo = -40.0;
    s.default_grid.t_hi = 1.0 - 1e-6;
    s.default_grid.t_points = 120001;
    out.push_back(std::move(s));
  }
  {
    FDivergenceSpec s;
    s.name = "kl";
    s.f = [](double u) { return u <= 0.0 ? 0.0 : u * std::log(u); };
    s.f_star = [](double t) { return std::exp(t - 1.0); };
    s.f_star_prime = [](double t) { return std::exp(t - 1.0); };
    s.dom_f_star = {};  // all of R
    s.slope_at_infinity = kInf;
    s.loss_kind = LossKind::kl;
    s.stability.enabled = true;
    s.duality_bound = 1e-3;
    s.default_grid.t_lo = -12.0;
    s.default_grid.t_hi = 4.0;
    s.default_grid.t_points = 32001;
    out.push_back(std::move(s));
  }
  {
    FDivergenceSpec s;
    s.name = "reverse_kl";
    s.f = [](double u) { return -std::log(u); };
    s.f_star = [](double t) { return -1.0 - std::log(-t); };
    s.f_star_prime = [](double t) { return -1.0 / t; };
    s.dom_f_star = {-kInf, 0.0, false, true};
    s.slope_at_infinity = 0.0;
    s.loss_kind = LossKind::reverse_kl;
    s.stability.enabled = true;
    s.duality_bound = 1e-3;
    s.default_grid.t_lo = -40.0;
    s.default_grid.t_hi = -1e-6;
    s.default_grid.t_points = 120001;
    out.push_back(std::move(s));
  }
  {
    FDivergenceSpec s;
    s.name = "jensen_shannon";
    s.f = [](double u) {
      if (u <= 0.0) return std::log(2.0);
      return u * std::log(u) - (u + 1.0) * std::log(0.5 * (u + 1.0));
    };
    s.f_star = [](double t) { return -std::log(2.0 - std::exp(t)); };
    s.f_star_prime = [](double t) {
      const double e = std::exp(t);
      return e / (2.0 - e);
    };
    s.dom_f_star = {-kInf, std::log(2.0), false, true};
    s.slope_at_infinity = std::log(2.0);
    s.loss_kind = LossKind::js;
    s.stability.enabled = true;
    s.duality_bound = 1e-3;
    s.default_grid.t_lo = -40.0;
    s.default_grid.t_hi = std::log(2.0) - 1e-6;
    s.default_grid.t_points = 120001;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

const std::vector<FDivergenceSpec>& builtin_divergences() {
  static const std::vector<FDivergenceSpec> table = make_builtins();
  return table;
}

const FDivergenceSpec& find_divergence(const std::string& name) {
  for (const auto& s : builtin_divergences()) {
    if (s.name == name) return s;
  }
  throw Error("unknown divergence: " + name);
}

double conjugate_check(const FDivergenceSpec& spec, const GridSpec& grid) {
  if (grid.x_points < 2 || grid.t_points < 2) {
    throw Error("conjugate_check: grid needs at least 2 points per axis");
  }
  const double t_lo = std::max(grid.t_lo, spec.dom_f_star.lo);
  const double t_hi = std::min(grid.t_hi, spec.dom_f_star.hi);
  if (!(t_lo < t_hi)) throw Error("conjugate_check: empty t grid");

  std::vector<double> ts(static_cast<std::size_t>(grid.t_points));
  for (int i = 0; i < grid.t_points; ++i) {
    ts[static_cast<std::size_t>(i)] =
        t_lo + (t_hi - t_lo) * static_cast<double>(i) /
                   static_cast<double>(grid.t_points - 1);
  }

  double worst = 0.0;
  for (int j = 0; j < grid.x_points; ++j) {
    const double x = grid.x_lo + (grid.x_hi - grid.x_lo) *
                                     static_cast<double>(j) /
                                     static_cast<double>(grid.x_points - 1);
    double best = -kInf;
    for (const double t : ts) {
      const double v = x * t - spec.f_star(t);
      if (std::isfinite(v) && v > best) best = v;
    }
    worst = std::max(worst, std::abs(spec.f(x) - best));
  }
  return worst;
}

}  // namespace irlab
