#include "irlab/loss.hpp"

#include <cmath>

#include "irlab/errors.hpp"

namespace irlab {

void LossStats::merge(const LossStats& other) {
  domain_clips += other.domain_clips;
  stability_clips += other.stability_clips;
  tv_out_of_band += other.tv_out_of_band;
}

ConjugateEval guarded_conjugate(const FDivergenceSpec& spec, double t,
                                LossStats* stats) {
  auto note_domain = [&] {
    if (stats) ++stats->domain_clips;
  };
  auto note_stability = [&] {
    if (stats) ++stats->stability_clips;
  };
  switch (spec.loss_kind) {
    case LossKind::tv_mle: {
      if (std::abs(t) > 0.5 && stats) ++stats->tv_out_of_band;
      return {t, 1.0};
    }
    case LossKind::pearson:
      return {0.25 * t * t + t, 0.5 * t + 1.0};
    case LossKind::hellinger: {
      constexpr double kMargin = 1e-3;
      const double hi = 1.0 - kMargin;
      const bool clipped = t > hi;
      if (clipped) note_domain();
      const double tc = clipped ? hi : t;
      const double d = 1.0 - tc;
      return {tc / d, clipped ? 0.0 : 1.0 / (d * d)};
    }
    case LossKind::kl: {
      double e = t - 1.0;
      bool clipped = false;
      if (e < spec.stability.exp_lo) {
        e = spec.stability.exp_lo;
        clipped = true;
      } else if (e > spec.stability.exp_hi) {
        e = spec.stability.exp_hi;
        clipped = true;
      }
      if (clipped) note_stability();
      const double v = std::exp(e);
      return {v, clipped ? 0.0 : v};
    }
    case LossKind::reverse_kl: {
      const double hi = -spec.stability.log_lo;
      const double lo = -spec.stability.log_hi;
      bool domain_clipped = false;
      bool range_clipped = false;
      double tc = t;
      if (tc > hi) {
        tc = hi;
        domain_clipped = true;
      } else if (tc < lo) {
        tc = lo;
        range_clipped = true;
      }
      if (domain_clipped) note_domain();
      if (range_clipped) note_stability();
      const bool clipped = domain_clipped || range_clipped;
      return {-1.0 - std::log(-tc), clipped ? 0.0 : -1.0 / tc};
    }
    case LossKind::js: {
      const double hi = std::log(2.0 - spec.stability.log_lo);
      const bool clipped = t > hi;
      if (clipped) note_domain();
      const double tc = clipped ? hi : t;
      const double e = std::exp(tc);
      const double arg = 2.0 - e;
      return {-std::log(arg), clipped ? 0.0 : e / arg};
    }
  }
  throw Error("guarded_conjugate: unhandled loss kind");
}

PerExampleLoss::PerExampleLoss(const FDivergenceSpec& spec, double beta,
                               bool differentiate_v0)
    : spec_(&spec), beta_(beta), differentiate_v0_(differentiate_v0) {
  if (!(beta > 0.0)) throw NonPositiveBeta("PerExampleLoss: beta must be > 0");
}

namespace {

// d log pi(a|s) / d logits = (e_a - pi(.|s)) / tau.
Vec log_prob_logit_grad(const PolicyModel& policy, int state_id, int action) {
  Vec g = -policy.probs(state_id);
  g[action] += 1.0;
  return g / policy.tau();
}

void check_ref_row(const Mat& ref_probs, int state_id, const char* where) {
  if ((ref_probs.row(state_id).array() <= 0.0).any()) {
    throw ZeroReferenceProbability(std::string(where) +
                                   ": reference policy has a zero entry");
  }
}

}  // namespace

double PerExampleLoss::evaluate(const StateSpace& space,
                                const PolicyModel& policy, const Mat& ref_probs,
                                const Demonstration& demo, Vec* grad,
                                LossStats* stats) const {
  const int root = space.root(demo.prompt_id);
  check_ref_row(ref_probs, root, "PerExampleLoss");
  // V(s0) = beta * log sum_a pi_ref(a|s0) exp(l_a / beta), from raw logits.
  const Vec x =
      (policy.logits(root) / beta_) +
      ref_probs.row(root).transpose().array().log().matrix();
  const double v0 = beta_ * logsumexp(x);

  const auto steps = space.trajectory(demo.prompt_id, demo.response);
  double logpi = 0.0;
  double logref = 0.0;
  for (const auto& [s, a] : steps) {
    if (ref_probs(s, a) <= 0.0) {
      throw ZeroProbability("PerExampleLoss: zero reference probability");
    }
    logpi += policy.log_prob(s, a);
    logref += std::log(ref_probs(s, a));
  }
  if (!std::isfinite(logpi)) {
    throw ZeroProbability("PerExampleLoss: policy probability underflowed");
  }

  const double r_hat = beta_ * (logpi - logref) + v0;
  const ConjugateEval ce = guarded_conjugate(*spec_, -r_hat, stats);
  const double loss = ce.value + v0;

  if (grad != nullptr) {
    const double c = ce.deriv;
    const double coef_logp = -beta_ * c;
    if (coef_logp != 0.0) {
      for (const auto& [s, a] : steps) {
        policy.accumulate_logit_grad(
            s, (coef_logp * log_prob_logit_grad(policy, s, a)).eval(), *grad);
      }
    }
    // dV(s0)/dl0 is the reference-weighted softmax at temperature beta;
    // coefficient 1 - c covers the direct +V(s0) and the chain via r_hat.
    const double coef_v = differentiate_v0_ ? 1.0 - c : 0.0;
    if (coef_v != 0.0) {
      policy.accumulate_logit_grad(root, (coef_v * softmax(x)).eval(), *grad);
    }
  }
  return loss;
}

double mle_example_loss(const StateSpace& space, const PolicyModel& policy,
                        const Demonstration& demo, Vec* grad) {
  const auto steps = space.trajectory(demo.prompt_id, demo.response);
  double logpi = 0.0;
  for (const auto& [s, a] : steps) {
    logpi += policy.log_prob(s, a);
    if (grad != nullptr) {
      policy.accumulate_logit_grad(
          s, (-log_prob_logit_grad(policy, s, a)).eval(), *grad);
    }
  }
  if (!std::isfinite(logpi)) {
    throw ZeroProbability("mle_example_loss: policy probability underflowed");
  }
  return -logpi;
}

DpoPairResult dpo_pair_loss(const StateSpace& space, const PolicyModel& policy,
                            const Mat& ref_probs, const PreferencePair& pair,
                            double beta, Vec* grad) {
  if (!(beta > 0.0)) throw NonPositiveBeta("dpo_pair_loss: beta must be > 0");
  auto logratio = [&](const std::vector<int>& response) {
    double sum = 0.0;
    for (const auto& [s, a] : space.trajectory(pair.prompt_id, response)) {
      if (ref_probs(s, a) <= 0.0) {
        throw ZeroProbability("dpo_pair_loss: zero reference probability");
      }
      sum += policy.log_prob(s, a) - std::log(ref_probs(s, a));
    }
    if (!std::isfinite(sum)) {
      throw ZeroProbability("dpo_pair_loss: policy probability underflowed");
    }
    return sum;
  };
  const double h = beta * (logratio(pair.chosen) - logratio(pair.rejected));
  DpoPairResult out;
  out.margin = h;
  out.loss = log1pexp(-h);  // -log sigmoid(h)
  if (grad != nullptr) {
    const double dh = sigmoid(h) - 1.0;  // dL/dh
    for (const auto& [s, a] : space.trajectory(pair.prompt_id, pair.chosen)) {
      policy.accumulate_logit_grad(
          s, (dh * beta * log_prob_logit_grad(policy, s, a)).eval(), *grad);
    }
    for (const auto& [s, a] : space.trajectory(pair.prompt_id, pair.rejected)) {
      policy.accumulate_logit_grad(
          s, (-dh * beta * log_prob_logit_grad(policy, s, a)).eval(), *grad);
    }
  }
  return out;
}

DpoBatchResult dpo_batch_loss(const StateSpace& space,
                              const PolicyModel& policy, const Mat& ref_probs,
                              const std::vector<PreferencePair>& pairs,
                              double beta, Vec* grad) {
  if (pairs.empty()) throw Error("dpo_batch_loss: empty batch");
  Vec local;
  Vec* acc = nullptr;
  if (grad != nullptr) {
    local = Vec::Zero(grad->size());
    acc = &local;
  }
  DpoBatchResult out;
  for (const auto& pair : pairs) {
    const auto r = dpo_pair_loss(space, policy, ref_probs, pair, beta, acc);
    out.loss += r.loss;
    out.accuracy += r.margin > 0.0 ? 1.0 : (r.margin == 0.0 ? 0.5 : 0.0);
  }
  const double inv = 1.0 / static_cast<double>(pairs.size());
  out.loss *= inv;
  out.accuracy *= inv;
  if (grad != nullptr) *grad += inv * local;
  return out;
}

double sft_batch_loss(const StateSpace& space, const PolicyModel& policy,
                      const Mat& ref_probs,
                      const std::vector<Demonstration>& batch,
                      const PerExampleLoss& loss, Vec* grad,
                      LossStats* stats) {
  if (batch.empty()) throw Error("sft_batch_loss: empty batch");
  double wsum = 0.0;
  for (const auto& d : batch) wsum += d.weight;
  if (!(wsum > 0.0)) throw Error("sft_batch_loss: weights sum to zero");

  Vec local;
  Vec* acc = nullptr;
  double total = 0.0;
  for (const auto& d : batch) {
    if (grad != nullptr) {
      local = Vec::Zero(grad->size());
      acc = &local;
    }
    const double l = loss.evaluate(space, policy, ref_probs, d, acc, stats);
    total += d.weight * l;
    if (grad != nullptr) *grad += (d.weight / wsum) * local;
  }
  return total / wsum;
}

}  // namespace irlab
