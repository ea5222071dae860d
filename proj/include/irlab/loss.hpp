#pragma once

/// Per-example training losses.
///
/// The f-divergence SFT loss evaluates, for a demonstration (x, y),
///
///   L(x, y) = f*(-r_hat) + V(s0),
///   r_hat   = beta * log(pi(y|x) / pi_ref(y|x)) + V(s0),
///
/// with V(s0) recomputed from the current logits at the root as
/// beta * log sum_a pi_ref(a|s0) exp(l_a / beta) and differentiated
/// through (the stop-gradient variant sits behind a flag). The additive
/// V(s0) term makes the objective the per-example form of the occupancy
/// min-max bound; reported loss values retain all constants so curves
/// from different divergences are comparable.
///
/// For total_variation, f* is the identity, both V(s0) terms cancel
/// exactly, and the loss collapses to -beta log pi(y|x) + beta log
/// pi_ref(y|x): MLE times beta plus a policy-independent constant. Its
/// gradient carries no reference dependence at all.
///
/// Conjugates are evaluated through a guarded wrapper that clamps
/// arguments to the spec's domain (with a margin) and applies the spec's
/// log/exp stability clips. The wrapper's derivative is the derivative
/// of the clamped value, so finite differences agree everywhere except
/// exactly at clamp boundaries. Total variation is never clamped; out of
/// band |t| > 1/2 is only counted.

#include <vector>

#include "irlab/divergence.hpp"
#include "irlab/mdp.hpp"
#include "irlab/numerics.hpp"
#include "irlab/policy.hpp"
#include "irlab/sampling.hpp"

namespace irlab {

struct LossStats {
  long long domain_clips = 0;    // t clamped into dom(f*)
  long long stability_clips = 0; // log/exp argument clipped
  long long tv_out_of_band = 0;  // TV only: |t| > 1/2 observed (not clamped)

  void merge(const LossStats& other);
};

struct ConjugateEval {
  double value = 0.0;
  double deriv = 0.0;  // derivative of the clamped value (0 when clamped)
};

/// f*(t) with the spec's domain and stability guards applied.
ConjugateEval guarded_conjugate(const FDivergenceSpec& spec, double t,
                                LossStats* stats);

class PerExampleLoss {
 public:
  PerExampleLoss(const FDivergenceSpec& spec, double beta,
                 bool differentiate_v0 = true);

  /// Loss for one demonstration; when grad != nullptr, accumulates
  /// dL/dparams (weighted by demo.weight is the caller's business; this
  /// adds the raw per-example gradient). Throws ZeroProbability.
  double evaluate(const StateSpace& space, const PolicyModel& policy,
                  const Mat& ref_probs, const Demonstration& demo, Vec* grad,
                  LossStats* stats) const;

  const FDivergenceSpec& spec() const { return *spec_; }
  double beta() const { return beta_; }

 private:
  const FDivergenceSpec* spec_;
  double beta_;
  bool differentiate_v0_;
};

/// Plain -log pi(y|x); the beta-free MLE baseline.
double mle_example_loss(const StateSpace& space, const PolicyModel& policy,
                        const Demonstration& demo, Vec* grad);

/// -log sigmoid(beta * (logratio_chosen - logratio_rejected)).
struct DpoPairResult {
  double loss = 0.0;
  double margin = 0.0;  // implicit-reward margin h
};
DpoPairResult dpo_pair_loss(const StateSpace& space, const PolicyModel& policy,
                            const Mat& ref_probs, const PreferencePair& pair,
                            double beta, Vec* grad);

/// Mean pair loss and accuracy; exact ties in the implicit-reward margin
/// count one half.
struct DpoBatchResult {
  double loss = 0.0;
  double accuracy = 0.0;
};
DpoBatchResult dpo_batch_loss(const StateSpace& space,
                              const PolicyModel& policy, const Mat& ref_probs,
                              const std::vector<PreferencePair>& pairs,
                              double beta, Vec* grad);

/// Weighted batch mean of PerExampleLoss over demonstrations; gradient of
/// the mean accumulated into grad when non-null.
double sft_batch_loss(const StateSpace& space, const PolicyModel& policy,
                      const Mat& ref_probs,
                      const std::vector<Demonstration>& batch,
                      const PerExampleLoss& loss, Vec* grad, LossStats* stats);

}  // namespace irlab
