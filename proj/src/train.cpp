#include "irlab/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "irlab/errors.hpp"
#include "irlab/rng.hpp"

namespace irlab {

Objective objective_from_name(const std::string& name) {
  if (name == "mle") return Objective::mle;
  if (name == "f_sft") return Objective::f_sft;
  if (name == "dpo") return Objective::dpo;
  if (name == "multi_objective") return Objective::multi_objective;
  if (name == "interleaved") return Objective::interleaved;
  throw ConfigError("unknown objective: " + name);
}

std::string objective_name(Objective o) {
  switch (o) {
    case Objective::mle: return "mle";
    case Objective::f_sft: return "f_sft";
    case Objective::dpo: return "dpo";
    case Objective::multi_objective: return "multi_objective";
    case Objective::interleaved: return "interleaved";
  }
  throw Error("objective_name: unhandled objective");
}

double lr_at(const TrainConfig& cfg, int step, int total_steps) {
  if (cfg.lr_schedule == LrSchedule::constant || total_steps <= 1) {
    return cfg.learning_rate;
  }
  const double frac = static_cast<double>(step) /
                      static_cast<double>(total_steps);
  return cfg.learning_rate * 0.5 * (1.0 + std::cos(kPi * frac));
}

namespace {

[[noreturn]] void throw_non_finite(const char* where, int step,
                                   const LossStats& stats) {
  std::ostringstream msg;
  msg << where << ": non-finite loss at step " << step
      << " (domain_clips=" << stats.domain_clips
      << ", stability_clips=" << stats.stability_clips
      << ", tv_out_of_band=" << stats.tv_out_of_band << ")";
  throw NonFiniteLoss(msg.str());
}

double weighted_mle_batch(const StateSpace& space, const PolicyModel& policy,
                          const std::vector<Demonstration>& batch, Vec* grad) {
  if (batch.empty()) throw Error("mle batch is empty");
  double wsum = 0.0;
  for (const auto& d : batch) wsum += d.weight;
  double total = 0.0;
  Vec local;
  for (const auto& d : batch) {
    Vec* acc = nullptr;
    if (grad != nullptr) {
      local = Vec::Zero(grad->size());
      acc = &local;
    }
    total += d.weight * mle_example_loss(space, policy, d, acc);
    if (grad != nullptr) *grad += (d.weight / wsum) * local;
  }
  return total / wsum;
}

// Deterministic epoch-shuffled minibatch cursor.
class BatchCursor {
 public:
  BatchCursor(std::size_t n, int batch_size, Rng rng)
      : order_(n), batch_(batch_size <= 0 ? n : static_cast<std::size_t>(
                                                    batch_size)),
        rng_(rng) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (batch_ < n) shuffle();
  }

  template <typename T>
  std::vector<T> next(const std::vector<T>& pool) {
    std::vector<T> out;
    out.reserve(batch_);
    for (std::size_t i = 0; i < batch_ && i < pool.size(); ++i) {
      if (pos_ == order_.size()) {
        pos_ = 0;
        if (batch_ < pool.size()) shuffle();
      }
      out.push_back(pool[order_[pos_++]]);
    }
    return out;
  }

 private:
  void shuffle() {
    for (std::size_t i = order_.size(); i > 1; --i) {
      std::swap(order_[i - 1],
                order_[static_cast<std::size_t>(rng_.uniform_int(
                    static_cast<int>(i)))]);
    }
  }

  std::vector<std::size_t> order_;
  std::size_t batch_;
  std::size_t pos_ = 0;
  Rng rng_;
};

}  // namespace

double sft_step(const StateSpace& space, PolicyModel& policy,
                const Mat& ref_probs, const std::vector<Demonstration>& batch,
                const PerExampleLoss& loss, double lr, LossStats* stats) {
  Vec grad = Vec::Zero(policy.param_count());
  LossStats local;
  const double value =
      sft_batch_loss(space, policy, ref_probs, batch, loss, &grad, &local);
  if (stats != nullptr) stats->merge(local);
  if (!std::isfinite(value) || !grad.allFinite()) {
    throw_non_finite("sft_step", -1, local);
  }
  policy.set_params(policy.params() - lr * grad);
  return value;
}

DpoBatchResult dpo_step(const StateSpace& space, PolicyModel& policy,
                        const Mat& ref_probs,
                        const std::vector<PreferencePair>& batch, double beta,
                        double lr) {
  Vec grad = Vec::Zero(policy.param_count());
  const auto result =
      dpo_batch_loss(space, policy, ref_probs, batch, beta, &grad);
  if (!std::isfinite(result.loss) || !grad.allFinite()) {
    throw_non_finite("dpo_step", -1, LossStats{});
  }
  policy.set_params(policy.params() - lr * grad);
  return result;
}

double lambda_update(double lambda, double acc, const LambdaConfig& cfg) {
  return (acc - cfg.target_acc) < cfg.delta ? lambda * cfg.down_factor
                                            : lambda * cfg.up_factor;
}

std::vector<double> lambda_schedule(const std::vector<double>& accs,
                                    const LambdaConfig& cfg) {
  std::vector<double> out;
  out.reserve(accs.size());
  double lambda = cfg.lambda_init;
  for (const double acc : accs) {
    lambda = lambda_update(lambda, acc, cfg);
    out.push_back(lambda);
  }
  return out;
}

MultiObjectiveResult multi_objective_batch_loss(
    const StateSpace& space, const PolicyModel& policy, const Mat& ref_probs,
    const std::vector<Demonstration>& demos,
    const std::vector<PreferencePair>& pairs, const PerExampleLoss& loss,
    double beta, double lambda, Vec* grad, LossStats* stats) {
  MultiObjectiveResult out;
  out.sft_loss =
      sft_batch_loss(space, policy, ref_probs, demos, loss, grad, stats);
  Vec dpo_grad;
  Vec* dpo_acc = nullptr;
  if (grad != nullptr) {
    dpo_grad = Vec::Zero(grad->size());
    dpo_acc = &dpo_grad;
  }
  const auto dpo =
      dpo_batch_loss(space, policy, ref_probs, pairs, beta, dpo_acc);
  out.dpo_loss = dpo.loss;
  out.accuracy = dpo.accuracy;
  out.loss = out.sft_loss + lambda * out.dpo_loss;
  if (grad != nullptr) *grad += lambda * dpo_grad;
  return out;
}

double kl_to_reference(const StateSpace& space, const Mat& probs,
                       const Mat& ref_probs, KlWeighting weighting,
                       bool opt_in_discounted) {
  if (weighting == KlWeighting::discounted && !opt_in_discounted) {
    throw GammaUnsupported(
        "kl_to_reference: discounted weighting requires explicit opt-in");
  }
  const Vec reach = path_probs(space, probs);
  const double gamma = space.gamma();
  double kl = 0.0;
  for (int id : space.nonterminal_ids()) {
    double w = reach[id];
    if (weighting == KlWeighting::discounted) {
      w *= std::pow(gamma, space.depth(id));
    }
    if (w == 0.0) continue;
    for (int a = 0; a < space.vocab(); ++a) {
      const double p = probs(id, a);
      if (p == 0.0) continue;
      if (ref_probs(id, a) <= 0.0) return kInf;
      kl += w * p * std::log(p / ref_probs(id, a));
    }
  }
  return kl;
}

MetricsRow compute_metrics(const StateSpace& space, const PolicyModel& policy,
                           const RunData& data, const TrainConfig& cfg,
                           int step, double lambda) {
  MetricsRow row;
  row.step = step;
  row.lambda = lambda;

  const Mat probs = policy.action_probs();
  row.kl = kl_to_reference(space, probs, data.ref_probs);

  const bool uses_f_loss = cfg.objective == Objective::f_sft ||
                           cfg.objective == Objective::multi_objective ||
                           cfg.objective == Objective::interleaved;
  const std::string metric_div =
      uses_f_loss ? cfg.divergence : std::string("total_variation");
  if (data.mu_expert.has_value() && space.gamma() < 1.0) {
    const auto mu_pi = occupancy(space, probs);
    row.d_f = f_divergence_between(find_divergence(metric_div), mu_pi,
                                   *data.mu_expert);
  }

  row.v0 = Vec(space.num_prompts());
  for (int p = 0; p < space.num_prompts(); ++p) {
    const int root = space.root(p);
    const Vec x = (policy.logits(root) / cfg.beta) +
                  data.ref_probs.row(root).transpose().array().log().matrix();
    row.v0[p] = cfg.beta * logsumexp(x);
  }

  PerExampleLoss floss(find_divergence(cfg.divergence), cfg.beta,
                       cfg.differentiate_v0);
  switch (cfg.objective) {
    case Objective::mle:
      if (!data.demos.empty()) {
        row.loss = weighted_mle_batch(space, policy, data.demos, nullptr);
      }
      break;
    case Objective::f_sft:
    case Objective::interleaved:
      if (!data.demos.empty()) {
        row.loss = sft_batch_loss(space, policy, data.ref_probs, data.demos,
                                  floss, nullptr, nullptr);
      }
      break;
    case Objective::dpo:
      if (!data.pairs.empty()) {
        row.loss = dpo_batch_loss(space, policy, data.ref_probs, data.pairs,
                                  cfg.beta, nullptr)
                       .loss;
      }
      break;
    case Objective::multi_objective:
      if (!data.demos.empty() && !data.pairs.empty()) {
        row.loss = multi_objective_batch_loss(space, policy, data.ref_probs,
                                              data.demos, data.pairs, floss,
                                              cfg.beta, lambda, nullptr,
                                              nullptr)
                       .loss;
      }
      break;
  }

  if (!data.eval_pairs.empty()) {
    row.dpo_eval = dpo_batch_loss(space, policy, data.ref_probs,
                                  data.eval_pairs, cfg.beta, nullptr)
                       .loss;
  }
  if (!data.pairs.empty()) {
    row.acc = dpo_batch_loss(space, policy, data.ref_probs, data.pairs,
                             cfg.beta, nullptr)
                  .accuracy;
  }
  return row;
}

namespace {

// Contiguous near-even split; segment sizes differ by at most one and the
// segments cover the input exactly.
template <typename T>
std::vector<std::vector<T>> split_segments(const std::vector<T>& items,
                                           int segments) {
  std::vector<std::vector<T>> out(static_cast<std::size_t>(segments));
  const std::size_t n = items.size();
  std::size_t begin = 0;
  for (int k = 0; k < segments; ++k) {
    const std::size_t end = n * static_cast<std::size_t>(k + 1) /
                            static_cast<std::size_t>(segments);
    out[static_cast<std::size_t>(k)].assign(items.begin() + begin,
                                            items.begin() + end);
    begin = end;
  }
  return out;
}

class RunRecorder {
 public:
  RunRecorder(const StateSpace& space, const RunData& data,
              const TrainConfig& cfg)
      : space_(space), data_(data), cfg_(cfg) {}

  void record(const PolicyModel& policy, int step, double lambda,
              bool force_checkpoint) {
    MetricsRow row = compute_metrics(space_, policy, data_, cfg_, step, lambda);
    const bool want = step == 0 ||
                      (cfg_.checkpoint_every > 0 &&
                       step % cfg_.checkpoint_every == 0) ||
                      force_checkpoint;
    if (want && (checkpoints.empty() || checkpoints.back().step != step)) {
      checkpoints.push_back(Checkpoint{step, policy, row});
    }
    metrics.push_back(std::move(row));
  }

  std::vector<Checkpoint> checkpoints;
  std::vector<MetricsRow> metrics;

 private:
  const StateSpace& space_;
  const RunData& data_;
  const TrainConfig& cfg_;
};

}  // namespace

TrainResult run_training(const StateSpace& space, PolicyModel policy,
                         const RunData& data, const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0)) {
    throw ConfigError("run_training: learning_rate must be > 0");
  }
  if (cfg.steps < 0) throw ConfigError("run_training: steps must be >= 0");
  if (cfg.segments < 1) {
    throw ConfigError("run_training: segments must be >= 1");
  }

  const PerExampleLoss floss(find_divergence(cfg.divergence), cfg.beta,
                             cfg.differentiate_v0);
  RunRecorder rec(space, data, cfg);
  LossStats stats;
  std::vector<int> boundaries;
  double lambda = cfg.objective == Objective::multi_objective
                      ? cfg.lambda.lambda_init
                      : kNaN;
  rec.record(policy, 0, lambda, false);

  switch (cfg.objective) {
    case Objective::mle:
    case Objective::f_sft: {
      if (data.demos.empty()) throw ConfigError("run_training: no demos");
      BatchCursor cursor(data.demos.size(), cfg.batch_size, Rng(cfg.seed));
      for (int step = 1; step <= cfg.steps; ++step) {
        const auto batch = cursor.next(data.demos);
        const double lr = lr_at(cfg, step - 1, cfg.steps);
        if (cfg.objective == Objective::mle) {
          Vec grad = Vec::Zero(policy.param_count());
          const double value =
              weighted_mle_batch(space, policy, batch, &grad);
          if (!std::isfinite(value) || !grad.allFinite()) {
            throw_non_finite("run_training[mle]", step, stats);
          }
          policy.set_params(policy.params() - lr * grad);
        } else {
          sft_step(space, policy, data.ref_probs, batch, floss, lr, &stats);
        }
        rec.record(policy, step, lambda, step == cfg.steps);
      }
      break;
    }
    case Objective::dpo: {
      if (data.pairs.empty()) throw ConfigError("run_training: no pairs");
      BatchCursor cursor(data.pairs.size(), cfg.batch_size, Rng(cfg.seed));
      for (int step = 1; step <= cfg.steps; ++step) {
        const auto batch = cursor.next(data.pairs);
        const double lr = lr_at(cfg, step - 1, cfg.steps);
        dpo_step(space, policy, data.ref_probs, batch, cfg.beta, lr);
        rec.record(policy, step, lambda, step == cfg.steps);
      }
      break;
    }
    case Objective::multi_objective: {
      if (data.demos.empty() || data.pairs.empty()) {
        throw ConfigError("run_training: multi_objective needs demos + pairs");
      }
      for (int step = 1; step <= cfg.steps; ++step) {
        Vec grad = Vec::Zero(policy.param_count());
        const auto r = multi_objective_batch_loss(
            space, policy, data.ref_probs, data.demos, data.pairs, floss,
            cfg.beta, lambda, &grad, &stats);
        if (!std::isfinite(r.loss) || !grad.allFinite()) {
          throw_non_finite("run_training[multi]", step, stats);
        }
        policy.set_params(policy.params() -
                          lr_at(cfg, step - 1, cfg.steps) * grad);
        rec.record(policy, step, lambda, step == cfg.steps);
        if (cfg.lambda.window > 0 && step % cfg.lambda.window == 0) {
          lambda = lambda_update(lambda, rec.metrics.back().acc, cfg.lambda);
        }
      }
      break;
    }
    case Objective::interleaved: {
      if (data.demos.empty() || data.pairs.empty()) {
        throw ConfigError("run_training: interleaved needs demos + pairs");
      }
      const auto demo_segs = split_segments(data.demos, cfg.segments);
      const auto pair_segs = split_segments(data.pairs, cfg.segments);
      int step = 0;
      for (int k = 0; k < cfg.segments; ++k) {
        const auto& demos = demo_segs[static_cast<std::size_t>(k)];
        for (int i = 1; i <= cfg.steps; ++i) {
          if (demos.empty()) break;
          sft_step(space, policy, data.ref_probs, demos, floss,
                   lr_at(cfg, i - 1, cfg.steps), &stats);
          rec.record(policy, ++step, lambda, i == cfg.steps);
        }
        boundaries.push_back(step);
        const auto& pairs = pair_segs[static_cast<std::size_t>(k)];
        for (int i = 1; i <= cfg.steps; ++i) {
          if (pairs.empty()) break;
          dpo_step(space, policy, data.ref_probs, pairs, cfg.beta,
                   lr_at(cfg, i - 1, cfg.steps));
          rec.record(policy, ++step, lambda, i == cfg.steps);
        }
        boundaries.push_back(step);
      }
      break;
    }
  }

  if (rec.checkpoints.empty() || rec.checkpoints.back().step !=
                                     rec.metrics.back().step) {
    rec.checkpoints.push_back(Checkpoint{rec.metrics.back().step, policy,
                                         rec.metrics.back()});
  }
  return TrainResult{std::move(rec.checkpoints), std::move(rec.metrics),
                     std::move(policy), stats, std::move(boundaries)};
}

double finite_difference_check(
    const std::function<double(const PolicyModel&, Vec*)>& loss_fn,
    const PolicyModel& policy, double epsilon, int n_params_sampled,
    std::uint64_t seed) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) {
    throw Error("finite_difference_check: epsilon must be in [1e-7, 1e-3]");
  }
  const auto count = static_cast<int>(policy.param_count());
  Vec analytic = Vec::Zero(count);
  loss_fn(policy, &analytic);

  std::vector<int> indices(static_cast<std::size_t>(count));
  std::iota(indices.begin(), indices.end(), 0);
  Rng rng(seed);
  if (n_params_sampled < count) {
    for (int i = 0; i < n_params_sampled; ++i) {
      const int j = i + rng.uniform_int(count - i);
      std::swap(indices[static_cast<std::size_t>(i)],
                indices[static_cast<std::size_t>(j)]);
    }
    indices.resize(static_cast<std::size_t>(n_params_sampled));
  }

  const Vec base = policy.params();
  PolicyModel probe = policy;
  double worst = 0.0;
  for (const int idx : indices) {
    Vec p = base;
    p[idx] = base[idx] + epsilon;
    probe.set_params(p);
    const double up = loss_fn(probe, nullptr);
    p[idx] = base[idx] - epsilon;
    probe.set_params(p);
    const double down = loss_fn(probe, nullptr);
    const double numeric = (up - down) / (2.0 * epsilon);
    worst = std::max(worst, std::abs(analytic[idx] - numeric) /
                                std::max(1.0, std::abs(numeric)));
  }
  return worst;
}

}  // namespace irlab
