#pragma once

/// Differentiable policies over a StateSpace.
///
/// A policy maps every non-terminal state to a logit vector over the vocab;
/// action probabilities are softmax(logits / tau). Two parameterizations:
///
///  - tabular: one independent logit row per non-terminal state.
///  - featurized: a one-hidden-layer tanh network from fixed state features
///    (prompt one-hot ++ per-position token one-hots) to logits.
///
/// Parameters live in one flat vector so gradient checks can walk them, and
/// accumulate_logit_grad() chains d loss / d logits into d loss / d params
/// for either parameterization.

#include <Eigen/Core>
#include <cstdint>

#include "irlab/mdp.hpp"
#include "irlab/numerics.hpp"

namespace irlab {

class PolicyModel {
 public:
  enum class Kind { tabular, featurized };

  PolicyModel() = default;

  /// Tabular policy with all-zero logits (uniform distribution).
  static PolicyModel tabular(const StateSpace& space, double tau = 1.0);

  /// Tabular policy with seeded uniform logits in [lo, hi].
  static PolicyModel tabular_random(const StateSpace& space, double lo, double hi,
                                    std::uint64_t seed, double tau = 1.0);

  static PolicyModel featurized(const StateSpace& space, int hidden, std::uint64_t seed,
                                double tau = 1.0);

  Kind kind() const { return kind_; }
  double tau() const { return tau_; }
  const StateSpace& space() const { return *space_; }

  Eigen::Index param_count() const { return params_.size(); }
  const Vec& params() const { return params_; }
  Vec& params() { return params_; }
  void set_params(const Vec& p);

  /// Logit vector at a non-terminal state.
  Vec logits(int state_id) const;

  /// softmax(logits / tau); strictly positive.
  Vec probs(int state_id) const { return softmax(logits(state_id) / tau_); }

  double log_prob(int state_id, int action) const;

  /// log pi(response | prompt) summed over steps.
  double sequence_log_prob(int prompt_id, std::span<const int> response) const;

  /// Dense action-probability matrix (terminal rows zero).
  Mat action_probs() const;

  /// Chain rule: given d loss / d logits at `state_id`, add d loss / d params
  /// into `grad` (same length as params()).
  void accumulate_logit_grad(int state_id, const Vec& dlogits, Vec& grad) const;

  /// Tabular only: overwrite one state's logit row (used to build expert
  /// policies and probe fixtures).
  void set_logits(int state_id, const Vec& l);

  /// Row in the tabular logit table for a non-terminal state; -1 at terminals.
  int logit_row(int state_id) const { return row_of_state_[state_id]; }

 private:
  PolicyModel(const StateSpace& space, Kind kind, double tau);
  void build_features();

  const StateSpace* space_ = nullptr;
  Kind kind_ = Kind::tabular;
  double tau_ = 1.0;
  Vec params_;

  std::vector<int> row_of_state_;  // non-terminal state -> dense row
  int num_rows_ = 0;

  // featurized: logits = W2 * tanh(W1 * phi + b1) + b2
  int hidden_ = 0;
  int feat_dim_ = 0;
  Mat features_;  // num_rows x feat_dim
};

/// Tabular policy whose probabilities equal `probs` rows (logits = log probs).
/// Rows must be strictly positive on non-terminal states.
PolicyModel policy_from_probs(const StateSpace& space, const Mat& probs, double tau = 1.0);

}  // namespace irlab
