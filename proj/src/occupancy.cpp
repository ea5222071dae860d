#include "irlab/occupancy.hpp"

#include <cmath>

#include "irlab/errors.hpp"

namespace irlab {

Vec path_probs(const StateSpace& space, const Mat& probs) {
  const auto n = static_cast<Eigen::Index>(space.size());
  if (probs.rows() != n || probs.cols() != space.vocab()) {
    throw LengthMismatch("path_probs: probs shape mismatch");
  }
  Vec out = Vec::Zero(n);
  const double root_mass = 1.0 / static_cast<double>(space.num_prompts());
  for (int p = 0; p < space.num_prompts(); ++p) out[space.root(p)] = root_mass;
  // Ids are BFS order, so parents precede children.
  for (Eigen::Index s = 0; s < n; ++s) {
    if (space.terminal(static_cast<int>(s))) continue;
    for (int a = 0; a < space.vocab(); ++a) {
      const int c = space.child(static_cast<int>(s), a);
      out[c] += out[s] * probs(s, a);
    }
  }
  return out;
}

OccupancyMeasure occupancy(const StateSpace& space, const Mat& probs) {
  const double gamma = space.gamma();
  if (gamma >= 1.0) {
    throw GammaOne("occupancy: gamma == 1 has no normalizable occupancy");
  }
  const Vec reach = path_probs(space, probs);
  const auto n = static_cast<Eigen::Index>(space.size());

  OccupancyMeasure out;
  out.rho = Vec::Zero(n);
  out.mu = Mat::Zero(n, space.vocab());
  out.sink_mass = 0.0;
  for (Eigen::Index s = 0; s < n; ++s) {
    const int id = static_cast<int>(s);
    const double disc = std::pow(gamma, space.depth(id));
    if (space.terminal(id)) {
      out.sink_mass += disc * reach[s];
      continue;
    }
    out.rho[s] = (1.0 - gamma) * disc * reach[s];
    out.mu.row(s) = out.rho[s] * probs.row(s);
  }
  return out;
}

double expected_return(const StateSpace& space, const Mat& reward,
                       const Mat& probs) {
  const Vec reach = path_probs(space, probs);
  const double gamma = space.gamma();
  double j = 0.0;
  for (int id : space.nonterminal_ids()) {
    const double disc = std::pow(gamma, space.depth(id));
    j += disc * reach[id] * probs.row(id).dot(reward.row(id));
  }
  return j;
}

namespace {

// Accumulates q * f(p / q) with the measure-theoretic edge cases.
struct FAccumulator {
  const FDivergenceSpec& spec;
  double sum = 0.0;
  bool infinite = false;

  void add(double p, double q) {
    if (infinite) return;
    if (q > 0.0) {
      sum += q * spec.f(p / q);
    } else if (p > 0.0) {
      if (!std::isfinite(spec.slope_at_infinity)) {
        infinite = true;
        return;
      }
      sum += spec.slope_at_infinity * p;
    }
  }
};

}  // namespace

double f_divergence_between(const FDivergenceSpec& spec,
                            const OccupancyMeasure& mu_pi,
                            const OccupancyMeasure& mu_e) {
  if (mu_pi.mu.rows() != mu_e.mu.rows() ||
      mu_pi.mu.cols() != mu_e.mu.cols()) {
    throw LengthMismatch("f_divergence_between: measure shape mismatch");
  }
  FAccumulator acc{spec};
  for (Eigen::Index s = 0; s < mu_pi.mu.rows(); ++s) {
    for (Eigen::Index a = 0; a < mu_pi.mu.cols(); ++a) {
      acc.add(mu_pi.mu(s, a), mu_e.mu(s, a));
      if (acc.infinite) return kInf;
    }
  }
  acc.add(mu_pi.sink_mass, mu_e.sink_mass);
  return acc.infinite ? kInf : acc.sum;
}

}  // namespace irlab
