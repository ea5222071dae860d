#include "irlab/probes.hpp"

#include <algorithm>
#include <cmath>

#include "irlab/errors.hpp"
#include "irlab/occupancy.hpp"
#include "irlab/rng.hpp"

namespace irlab {

double kendall_tau(const std::vector<double>& a,
                   const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw LengthMismatch("kendall_tau: rankings differ in length");
  }
  const std::size_t n = a.size();
  if (n < 2) throw Error("kendall_tau: need at least two values");
  long long concordant = 0;
  long long discordant = 0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double da = a[i] - a[j];
      const double db = b[i] - b[j];
      const double prod = da * db;
      if (prod > 0.0) ++concordant;
      else if (prod < 0.0) ++discordant;
      // ties (da == 0 or db == 0) contribute to neither count
    }
  }
  const double pairs = 0.5 * static_cast<double>(n) *
                       static_cast<double>(n - 1);
  return static_cast<double>(concordant - discordant) / pairs;
}

LogitsQProbe logits_q_probe(const StateSpace& space, const PolicyModel& policy,
                            const SoftSolution& sol) {
  const auto n = static_cast<Eigen::Index>(space.size());
  LogitsQProbe out;
  out.c_value = Vec::Constant(n, kNaN);
  out.c_spread = Vec::Constant(n, kNaN);
  const double scale = policy.tau() / sol.beta;
  for (int id : space.nonterminal_ids()) {
    const Vec d = policy.logits(id) - scale * sol.q.row(id).transpose();
    out.c_value[id] = d.mean();
    out.c_spread[id] = d.maxCoeff() - d.minCoeff();
  }
  return out;
}

std::vector<int> select_probe_states(const StateSpace& space, int count,
                                     std::uint64_t seed) {
  if (count < 1) throw Error("select_probe_states: count must be >= 1");
  // Bucket non-terminal states by depth, shuffle each bucket, then take
  // round-robin across depths so every depth is represented.
  std::vector<std::vector<int>> by_depth;
  for (int id : space.nonterminal_ids()) {
    const auto d = static_cast<std::size_t>(space.depth(id));
    if (by_depth.size() <= d) by_depth.resize(d + 1);
    by_depth[d].push_back(id);
  }
  Rng rng(seed);
  for (auto& bucket : by_depth) {
    for (std::size_t i = bucket.size(); i > 1; --i) {
      std::swap(bucket[i - 1], bucket[static_cast<std::size_t>(
                                   rng.uniform_int(static_cast<int>(i)))]);
    }
  }
  std::vector<int> out;
  std::size_t layer = 0;
  while (static_cast<int>(out.size()) < count) {
    bool any = false;
    for (const auto& bucket : by_depth) {
      if (layer < bucket.size()) {
        any = true;
        out.push_back(bucket[layer]);
        if (static_cast<int>(out.size()) == count) break;
      }
    }
    if (!any) break;  // fewer non-terminal states than requested
    ++layer;
  }
  return out;
}

namespace {

Vec state_values(const StateSpace& space, const PolicyModel& policy,
                 const std::vector<int>& states, const Mat& ref_probs,
                 double beta, bool reference_weighted) {
  Vec out(static_cast<Eigen::Index>(states.size()));
  for (std::size_t i = 0; i < states.size(); ++i) {
    const int id = states[i];
    if (space.terminal(id)) {
      throw Error("probe state " + std::to_string(id) + " is terminal");
    }
    const Vec l = policy.logits(id);
    if (reference_weighted) {
      const Vec x = (l / beta) +
                    ref_probs.row(id).transpose().array().log().matrix();
      out[static_cast<Eigen::Index>(i)] = beta * logsumexp(x);
    } else {
      out[static_cast<Eigen::Index>(i)] = logsumexp(l);
    }
  }
  return out;
}

std::vector<double> to_std(const Vec& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace

ValueRankingProbe value_ranking_probe(const StateSpace& space,
                                      const std::vector<Checkpoint>& ckpts,
                                      const std::vector<int>& probe_states,
                                      const Mat& ref_probs, double beta) {
  if (ckpts.empty()) throw Error("value_ranking_probe: no checkpoints");
  if (probe_states.size() < 2) {
    throw Error("value_ranking_probe: need at least two probe states");
  }
  const auto k = static_cast<Eigen::Index>(ckpts.size());
  const auto m = static_cast<Eigen::Index>(probe_states.size());
  ValueRankingProbe out;
  out.values = Mat(k, m);
  out.raw_values = Mat(k, m);
  for (Eigen::Index c = 0; c < k; ++c) {
    const auto& policy = ckpts[static_cast<std::size_t>(c)].policy;
    out.values.row(c) =
        state_values(space, policy, probe_states, ref_probs, beta, true)
            .transpose();
    out.raw_values.row(c) =
        state_values(space, policy, probe_states, ref_probs, beta, false)
            .transpose();
  }
  out.kendall = Mat::Identity(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = i; j < k; ++j) {
      const double tau = kendall_tau(to_std(out.values.row(i).transpose()),
                                     to_std(out.values.row(j).transpose()));
      out.kendall(i, j) = tau;
      out.kendall(j, i) = tau;
    }
  }
  return out;
}

DpoEvalProbe dpo_eval_probe(const StateSpace& space,
                            const std::vector<Checkpoint>& ckpts,
                            const Mat& ref_probs,
                            const std::vector<PreferencePair>& eval_pairs,
                            double beta, const Mat& reward) {
  if (ckpts.empty()) throw Error("dpo_eval_probe: no checkpoints");
  if (eval_pairs.empty()) throw Error("dpo_eval_probe: no eval pairs");
  DpoEvalProbe out;
  out.loss = Vec(static_cast<Eigen::Index>(ckpts.size()));
  out.expected_ret = Vec(static_cast<Eigen::Index>(ckpts.size()));
  for (std::size_t c = 0; c < ckpts.size(); ++c) {
    const auto& ck = ckpts[c];
    out.steps.push_back(ck.step);
    out.loss[static_cast<Eigen::Index>(c)] =
        dpo_batch_loss(space, ck.policy, ref_probs, eval_pairs, beta, nullptr)
            .loss;
    out.expected_ret[static_cast<Eigen::Index>(c)] =
        expected_return(space, reward, ck.policy.action_probs());
  }
  return out;
}

V0Trace v0_trace_probe(const StateSpace& space,
                       const std::vector<Checkpoint>& ckpts,
                       const Mat& ref_probs, double beta) {
  if (ckpts.empty()) throw Error("v0_trace_probe: no checkpoints");
  V0Trace out;
  const auto k = static_cast<Eigen::Index>(ckpts.size());
  out.v0 = Mat(k, space.num_prompts());
  std::vector<int> roots;
  for (int p = 0; p < space.num_prompts(); ++p) roots.push_back(space.root(p));
  for (Eigen::Index c = 0; c < k; ++c) {
    const auto& ck = ckpts[static_cast<std::size_t>(c)];
    out.steps.push_back(ck.step);
    out.v0.row(c) =
        state_values(space, ck.policy, roots, ref_probs, beta, true)
            .transpose();
  }
  for (int p = 0; p < space.num_prompts(); ++p) {
    const double final_v = out.v0(k - 1, p);
    const double band = 0.05 * std::max(std::abs(final_v), 1e-12);
    int step = out.steps.back();
    for (Eigen::Index c = 0; c < k; ++c) {
      if (std::abs(out.v0(c, p) - final_v) <= band) {
        step = out.steps[static_cast<std::size_t>(c)];
        break;
      }
    }
    out.convergence_step.push_back(step);
  }
  return out;
}

ValueDominanceProbe value_dominance_probe(
    const StateSpace& space, const PolicyModel& policy,
    const SoftSolution& sol, const std::vector<int>& probe_states) {
  if (probe_states.size() < 2) {
    throw Error("value_dominance_probe: need at least two probe states");
  }
  const auto lq = logits_q_probe(space, policy, sol);
  ValueDominanceProbe out;
  for (std::size_t i = 0; i + 1 < probe_states.size(); ++i) {
    for (std::size_t j = i + 1; j < probe_states.size(); ++j) {
      const double dc =
          std::abs(lq.c_value[probe_states[i]] - lq.c_value[probe_states[j]]);
      const double dv = std::abs(sol.v[probe_states[i]] -
                                 sol.v[probe_states[j]]);
      out.entries.emplace_back(dc, dv);
      if (dc < dv) out.fraction += 1.0;
    }
  }
  out.fraction /= static_cast<double>(out.entries.size());
  return out;
}

}  // namespace irlab
