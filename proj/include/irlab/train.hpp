#pragma once

/// Training loops: MLE, f-divergence SFT, DPO, the lambda-adaptive
/// multi-objective combination, and interleaved SFT/DPO staging.
///
/// The optimizer is plain full- or mini-batch gradient descent with an
/// optional cosine schedule. No adaptive state: the TV-SFT vs MLE
/// trajectory-equivalence checks compare parameter vectors step for step,
/// which any per-parameter accumulator would break.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "irlab/loss.hpp"
#include "irlab/mdp.hpp"
#include "irlab/numerics.hpp"
#include "irlab/occupancy.hpp"
#include "irlab/policy.hpp"
#include "irlab/sampling.hpp"

namespace irlab {

enum class Objective { mle, f_sft, dpo, multi_objective, interleaved };
enum class LrSchedule { constant, cosine };
enum class KlWeighting { trajectory, discounted };

Objective objective_from_name(const std::string& name);
std::string objective_name(Objective o);

struct LambdaConfig {
  double lambda_init = 0.1;
  double target_acc = 0.85;
  double delta = 0.01;
  double up_factor = 2.0;
  double down_factor = 0.5;
  int window = 10;  // steps between accuracy evaluations
};

struct TrainConfig {
  Objective objective = Objective::f_sft;
  std::string divergence = "total_variation";
  double learning_rate = 0.1;
  LrSchedule lr_schedule = LrSchedule::constant;
  double beta = 0.01;
  int steps = 100;      // per stage when interleaved
  int batch_size = 0;   // 0 = full batch
  std::uint64_t seed = 0;
  LambdaConfig lambda;
  int segments = 4;     // interleaved stages come in SFT/DPO pairs
  int checkpoint_every = 10;
  bool differentiate_v0 = true;
};

struct MetricsRow {
  int step = 0;
  double loss = kNaN;
  double kl = kNaN;       // KL(pi || pi_ref), trajectory level
  double d_f = kNaN;      // D_f(mu_pi || mu_E); NaN when gamma == 1
  Vec v0;                 // per prompt, reference-weighted lse of root logits
  double lambda = kNaN;   // multi-objective only
  double dpo_eval = kNaN; // mean DPO loss on held-out pairs
  double acc = kNaN;      // pair accuracy on training pairs
};

struct Checkpoint {
  int step = 0;
  PolicyModel policy;
  MetricsRow metrics;
};

/// Everything a run consumes besides the policy. mu_expert powers the d_f
/// column; leave it empty when gamma == 1.
struct RunData {
  Mat ref_probs;
  std::vector<Demonstration> demos;
  std::vector<PreferencePair> pairs;
  std::vector<PreferencePair> eval_pairs;
  std::optional<OccupancyMeasure> mu_expert;
};

struct TrainResult {
  std::vector<Checkpoint> checkpoints;
  std::vector<MetricsRow> metrics;  // one row per step, plus step 0
  PolicyModel final_policy;
  LossStats stats;
  std::vector<int> stage_boundaries;  // interleaved: step index per stage end
};

double lr_at(const TrainConfig& cfg, int step, int total_steps);

/// One descent step on the weighted batch mean; returns the pre-update
/// batch loss. Throws NonFiniteLoss with the clip counters in the message.
double sft_step(const StateSpace& space, PolicyModel& policy,
                const Mat& ref_probs, const std::vector<Demonstration>& batch,
                const PerExampleLoss& loss, double lr, LossStats* stats);

DpoBatchResult dpo_step(const StateSpace& space, PolicyModel& policy,
                        const Mat& ref_probs,
                        const std::vector<PreferencePair>& batch, double beta,
                        double lr);

/// Appendix-style rule: halve iff acc - target < delta, else double.
double lambda_update(double lambda, double acc, const LambdaConfig& cfg);

/// lambda after each scripted accuracy observation, starting from
/// cfg.lambda_init; result[i] is the value after observation i.
std::vector<double> lambda_schedule(const std::vector<double>& accs,
                                    const LambdaConfig& cfg);

/// SFT + lambda * DPO on full batches; gradient of the combination.
struct MultiObjectiveResult {
  double loss = 0.0;
  double sft_loss = 0.0;
  double dpo_loss = 0.0;
  double accuracy = 0.0;
};
MultiObjectiveResult multi_objective_batch_loss(
    const StateSpace& space, const PolicyModel& policy, const Mat& ref_probs,
    const std::vector<Demonstration>& demos,
    const std::vector<PreferencePair>& pairs, const PerExampleLoss& loss,
    double beta, double lambda, Vec* grad, LossStats* stats);

/// Trajectory-level KL of induced sequence distributions: sum over
/// non-terminal s of reach(s) * KL(pi(.|s) || pi_ref(.|s)), undiscounted,
/// exact for any gamma. The discounted weighting (gamma^depth) must be
/// opted into explicitly; requesting it otherwise throws GammaUnsupported.
double kl_to_reference(const StateSpace& space, const Mat& probs,
                       const Mat& ref_probs,
                       KlWeighting weighting = KlWeighting::trajectory,
                       bool opt_in_discounted = false);

/// Full metrics for the current policy; pure, so checkpoint rows can be
/// recomputed from snapshots bit-for-bit.
MetricsRow compute_metrics(const StateSpace& space, const PolicyModel& policy,
                           const RunData& data, const TrainConfig& cfg,
                           int step, double lambda);

/// Dispatch on cfg.objective. Metrics are emitted at step 0 and after
/// every update; checkpoints at checkpoint_every and at the end.
TrainResult run_training(const StateSpace& space, PolicyModel policy,
                         const RunData& data, const TrainConfig& cfg);

/// Max over sampled parameters of |analytic - central difference| /
/// max(1, |central difference|). loss_fn must fill the gradient when the
/// Vec* is non-null.
double finite_difference_check(
    const std::function<double(const PolicyModel&, Vec*)>& loss_fn,
    const PolicyModel& policy, double epsilon, int n_params_sampled,
    std::uint64_t seed);

}  // namespace irlab
