#pragma once

/// Read-only measurement suite over trained checkpoints: logits-vs-Q
/// decomposition, value-ranking Kendall correlations, DPO loss on held-out
/// pairs, V(s0) traces, and the value-dominance statistic.
///
/// Value rankings use the reference-weighted V(s) = beta * log sum_a
/// pi_ref(a|s) exp(l_a / beta); the raw unweighted log-sum-exp of logits
/// is emitted alongside since rank statistics are nearly but not exactly
/// invariant to the weighting.

#include <cstdint>
#include <utility>
#include <vector>

#include "irlab/mdp.hpp"
#include "irlab/numerics.hpp"
#include "irlab/policy.hpp"
#include "irlab/sampling.hpp"
#include "irlab/soft_rl.hpp"
#include "irlab/train.hpp"

namespace irlab {

/// tau-a: (concordant - discordant) / C(n,2); ties contribute to neither
/// count and the denominator is unadjusted. Throws LengthMismatch.
double kendall_tau(const std::vector<double>& a, const std::vector<double>& b);

/// Per non-terminal state, d_a = l_a - (tau/beta) Q(s,a): c_value is the
/// action mean (the constant C(s) when the policy is exactly soft-optimal)
/// and c_spread = max_a d_a - min_a d_a (0 iff logits are an exact
/// per-state shift of the scaled Q). Terminal entries are NaN.
struct LogitsQProbe {
  Vec c_value;
  Vec c_spread;
};
LogitsQProbe logits_q_probe(const StateSpace& space, const PolicyModel& policy,
                            const SoftSolution& sol);

/// Deterministic depth-stratified draw of non-terminal states.
std::vector<int> select_probe_states(const StateSpace& space, int count,
                                     std::uint64_t seed);

/// values(c, i): V at probe state i under checkpoint c; kendall(c, c') is
/// the rank correlation of the two value rows. raw_values holds the
/// unweighted log-sum-exp of raw logits.
struct ValueRankingProbe {
  Mat values;
  Mat raw_values;
  Mat kendall;
};
ValueRankingProbe value_ranking_probe(const StateSpace& space,
                                      const std::vector<Checkpoint>& ckpts,
                                      const std::vector<int>& probe_states,
                                      const Mat& ref_probs, double beta);

/// Mean DPO loss on held-out pairs per checkpoint, paired with the exact
/// expected true return of the checkpoint policy as the task metric.
struct DpoEvalProbe {
  std::vector<int> steps;
  Vec loss;
  Vec expected_ret;
};
DpoEvalProbe dpo_eval_probe(const StateSpace& space,
                            const std::vector<Checkpoint>& ckpts,
                            const Mat& ref_probs,
                            const std::vector<PreferencePair>& eval_pairs,
                            double beta, const Mat& reward);

/// v0(c, p): reference-weighted V at prompt p's root for checkpoint c;
/// convergence_step[p] is the first checkpoint step with
/// |V - V_final| <= 0.05 * max(|V_final|, 1e-12).
struct V0Trace {
  std::vector<int> steps;
  Mat v0;
  std::vector<int> convergence_step;
};
V0Trace v0_trace_probe(const StateSpace& space,
                       const std::vector<Checkpoint>& ckpts,
                       const Mat& ref_probs, double beta);

/// Fraction of probe-state pairs with |C(s1) - C(s2)| < |V*(s1) - V*(s2)|,
/// C from logits_q_probe against sol, V from the exact solution. Reported
/// as evidence, never asserted.
struct ValueDominanceProbe {
  double fraction = 0.0;
  std::vector<std::pair<double, double>> entries;  // (|dC|, |dV|) per pair
};
ValueDominanceProbe value_dominance_probe(const StateSpace& space,
                                          const PolicyModel& policy,
                                          const SoftSolution& sol,
                                          const std::vector<int>& probe_states);

}  // namespace irlab
