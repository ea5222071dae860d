#pragma once

/// Discounted state and state-action occupancy over a token MDP.
///
/// rho(s) = (1 - gamma) * sum_i gamma^i P(s_i = s | pi). Because every
/// trajectory in the forest is a single root-to-leaf path, the sums are
/// closed-form: a non-terminal state s contributes
/// (1 - gamma) * gamma^depth(s) * path_prob(s). Terminal states transition
/// to an absorbing sink; their geometric tail gamma^depth * path_prob is
/// reported as sink_mass rather than spread over per-state entries. With
/// that convention sum(rho) + sink_mass == 1 and sum(mu) + sink_mass == 1.
///
/// gamma == 1 has no normalizable occupancy; occupancy() throws GammaOne.

#include "irlab/mdp.hpp"
#include "irlab/divergence.hpp"
#include "irlab/numerics.hpp"

namespace irlab {

struct OccupancyMeasure {
  Vec rho;           // per state; zero at terminal states
  Mat mu;            // state x action, mu(s,a) = rho(s) * pi(a|s)
  double sink_mass;  // mass absorbed past terminal states
};

/// Probability of reaching each state under `probs` (rows = action
/// distributions per non-terminal state). Roots get 1 / num_prompts.
Vec path_probs(const StateSpace& space, const Mat& probs);

/// Throws GammaOne when space.gamma() == 1.
OccupancyMeasure occupancy(const StateSpace& space, const Mat& probs);

/// J(pi) = E[sum_t gamma^t r(s_t, a_t)]; exact, valid for gamma in (0, 1].
double expected_return(const StateSpace& space, const Mat& reward,
                       const Mat& probs);

/// D_f(mu_pi || mu_e) over state-action pairs plus the sink pseudo-pair.
/// Zero-vs-zero entries contribute nothing; mass where mu_e vanishes is
/// charged at slope_at_infinity, so the result may be +inf.
double f_divergence_between(const FDivergenceSpec& spec,
                            const OccupancyMeasure& mu_pi,
                            const OccupancyMeasure& mu_e);

}  // namespace irlab
