#pragma once

/// Entropy-regularized control on token MDPs, solved exactly by backward
/// induction, plus the reward <-> policy correspondence built on it:
///
///   Q(s,a) = r(s,a) + gamma * V(s + a)          (terminal V = 0)
///   V(s)   = beta * log sum_a pi_ref(a|s) exp(Q(s,a) / beta)
///   pi*(a|s) = pi_ref(a|s) * exp((Q(s,a) - V(s)) / beta)
///
/// The reference-weighted V above is the primary convention; the entropy
/// form V = beta * log sum_a exp(Q/beta) sits behind VForm::entropy and
/// differs by exactly beta * log k when pi_ref is uniform over k actions.
///
/// implicit rewards invert the map: r_hat(s,a) = beta * log(pi/pi_ref)
/// + V(s) - gamma * V(s + a). Summing gamma^t * r_hat along a trajectory
/// telescopes to beta * sum gamma^t log-ratio + V(s0) - gamma^T V(s_T).

#include <span>
#include <vector>

#include "irlab/mdp.hpp"
#include "irlab/numerics.hpp"
#include "irlab/policy.hpp"

namespace irlab {

enum class VForm { reference_weighted, entropy };

struct SoftSolution {
  double beta = 1.0;
  double gamma = 1.0;
  VForm form = VForm::reference_weighted;
  Mat q;         // zero rows at terminal states
  Vec v;         // zero at terminal states
  Mat pi_star;   // zero rows at terminal states
  Mat ref_probs;
  Vec j_star;    // per prompt, V at the prompt's root
};

/// Exact solve. Throws NonPositiveBeta, ZeroReferenceProbability (the
/// latter only for the reference-weighted form, which divides by pi_ref).
SoftSolution solve_soft(const StateSpace& space, const Mat& reward,
                        double beta, const Mat& ref_probs,
                        VForm form = VForm::reference_weighted);

struct FixedPointReport {
  double value_residual = 0.0;          // |V - beta log sum pi_ref exp(Q/beta)|
  double bellman_residual = 0.0;        // |Q - r - gamma V(child)|
  double normalization_residual = 0.0;  // |sum_a pi* - 1|
  double max_residual() const;
};

FixedPointReport verify_fixed_point(const StateSpace& space,
                                    const SoftSolution& sol,
                                    const Mat& reward);

/// Reads a policy as if its logits were Q up to the unidentifiable
/// per-state constant C(s): v(s) = beta * log sum_a pi_ref(a|s)
/// exp(l_a / beta), and q(s,a) = beta * log(pi/pi_ref) + v(s), which is
/// the unique representative with reference-weighted log-sum-exp equal
/// to v. Terminal rows are zero.
struct PolicyQ {
  Mat q;
  Vec v;
};
PolicyQ policy_to_q(const StateSpace& space, const PolicyModel& policy,
                    double beta, const Mat& ref_probs);

/// Per-step implicit rewards for all non-terminal (s, a); `v` must be 0 at
/// terminal states. Throws ZeroProbability when either policy vanishes.
Mat implicit_step_rewards(const StateSpace& space, const Mat& probs,
                          const Mat& ref_probs, double beta, const Vec& v);

struct SequenceReward {
  double total = 0.0;          // sum_t gamma^t r_hat(s_t, a_t)
  double logratio_part = 0.0;  // beta * sum_t gamma^t log(pi/pi_ref)
  double v0 = 0.0;
  double v_tail = 0.0;         // gamma^T * V(s_T)
  Vec per_step;
  // |total - (logratio_part + v0 - v_tail)|, two independent summations.
  double consistency = 0.0;
};

SequenceReward implicit_sequence_reward(const StateSpace& space,
                                        const Mat& probs, const Mat& ref_probs,
                                        double beta, const Vec& v,
                                        int prompt_id,
                                        std::span<const int> response);

/// Every terminal sequence of the space, evaluated at once.
struct ImplicitRewardReport {
  double beta = 1.0;
  Mat per_step;
  std::vector<int> terminal_ids;
  std::vector<double> per_sequence;  // aligned with terminal_ids
  Vec v0_per_prompt;
  double max_consistency = 0.0;
};

ImplicitRewardReport implicit_reward(const StateSpace& space, const Mat& probs,
                                     const Mat& ref_probs, double beta,
                                     const Vec& v);

}  // namespace irlab
