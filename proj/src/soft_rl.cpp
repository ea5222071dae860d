#include "irlab/soft_rl.hpp"

#include <cmath>

#include "irlab/errors.hpp"

namespace irlab {

namespace {

void check_shapes(const StateSpace& space, const Mat& m, const char* what) {
  if (m.rows() != static_cast<Eigen::Index>(space.size()) ||
      m.cols() != space.vocab()) {
    throw LengthMismatch(std::string(what) + ": shape mismatch");
  }
}

}  // namespace

SoftSolution solve_soft(const StateSpace& space, const Mat& reward,
                        double beta, const Mat& ref_probs, VForm form) {
  if (!(beta > 0.0)) throw NonPositiveBeta("solve_soft: beta must be > 0");
  check_shapes(space, reward, "solve_soft reward");
  check_shapes(space, ref_probs, "solve_soft ref_probs");
  if (form == VForm::reference_weighted) {
    for (int id : space.nonterminal_ids()) {
      if ((ref_probs.row(id).array() <= 0.0).any()) {
        throw ZeroReferenceProbability(
            "solve_soft: reference policy must be strictly positive");
      }
    }
  }

  const auto n = static_cast<Eigen::Index>(space.size());
  SoftSolution sol;
  sol.beta = beta;
  sol.gamma = space.gamma();
  sol.form = form;
  sol.q = Mat::Zero(n, space.vocab());
  sol.v = Vec::Zero(n);
  sol.pi_star = Mat::Zero(n, space.vocab());
  sol.ref_probs = ref_probs;

  // BFS ids put children after parents, so a reverse sweep is leaf-first.
  for (Eigen::Index s = n - 1; s >= 0; --s) {
    const int id = static_cast<int>(s);
    if (space.terminal(id)) continue;
    Vec qrow(space.vocab());
    for (int a = 0; a < space.vocab(); ++a) {
      qrow[a] = reward(s, a) + sol.gamma * sol.v[space.child(id, a)];
    }
    const Vec scaled = qrow / beta;
    const double v = form == VForm::reference_weighted
                         ? beta * weighted_logsumexp(scaled, ref_probs.row(s))
                         : beta * logsumexp(scaled);
    Vec pi = ((qrow.array() - v) / beta).exp().matrix();
    if (form == VForm::reference_weighted) {
      pi = pi.cwiseProduct(ref_probs.row(s).transpose());
    }
    sol.q.row(s) = qrow;
    sol.v[s] = v;
    sol.pi_star.row(s) = pi;
  }

  sol.j_star = Vec(space.num_prompts());
  for (int p = 0; p < space.num_prompts(); ++p) {
    sol.j_star[p] = sol.v[space.root(p)];
  }
  return sol;
}

double FixedPointReport::max_residual() const {
  return std::max({value_residual, bellman_residual, normalization_residual});
}

FixedPointReport verify_fixed_point(const StateSpace& space,
                                    const SoftSolution& sol,
                                    const Mat& reward) {
  FixedPointReport rep;
  for (int id : space.nonterminal_ids()) {
    Vec qrow(space.vocab());
    for (int a = 0; a < space.vocab(); ++a) {
      qrow[a] = reward(id, a) + sol.gamma * sol.v[space.child(id, a)];
      rep.bellman_residual =
          std::max(rep.bellman_residual, std::abs(sol.q(id, a) - qrow[a]));
    }
    const Vec scaled = sol.q.row(id).transpose() / sol.beta;
    const double v =
        sol.form == VForm::reference_weighted
            ? sol.beta * weighted_logsumexp(scaled, sol.ref_probs.row(id))
            : sol.beta * logsumexp(scaled);
    rep.value_residual = std::max(rep.value_residual, std::abs(sol.v[id] - v));
    rep.normalization_residual = std::max(
        rep.normalization_residual, std::abs(sol.pi_star.row(id).sum() - 1.0));
  }
  return rep;
}

PolicyQ policy_to_q(const StateSpace& space, const PolicyModel& policy,
                    double beta, const Mat& ref_probs) {
  if (!(beta > 0.0)) throw NonPositiveBeta("policy_to_q: beta must be > 0");
  check_shapes(space, ref_probs, "policy_to_q ref_probs");
  const auto n = static_cast<Eigen::Index>(space.size());
  PolicyQ out;
  out.q = Mat::Zero(n, space.vocab());
  out.v = Vec::Zero(n);
  for (int id : space.nonterminal_ids()) {
    if ((ref_probs.row(id).array() <= 0.0).any()) {
      throw ZeroReferenceProbability(
          "policy_to_q: reference policy must be strictly positive");
    }
    const Vec logits = policy.logits(id);
    out.v[id] = beta * weighted_logsumexp((logits / beta).eval(),
                                          ref_probs.row(id));
    const Vec pi = policy.probs(id);
    for (int a = 0; a < space.vocab(); ++a) {
      if (pi[a] <= 0.0) {
        throw ZeroProbability("policy_to_q: policy probability underflowed");
      }
      out.q(id, a) = beta * std::log(pi[a] / ref_probs(id, a)) + out.v[id];
    }
  }
  return out;
}

Mat implicit_step_rewards(const StateSpace& space, const Mat& probs,
                          const Mat& ref_probs, double beta, const Vec& v) {
  check_shapes(space, probs, "implicit_step_rewards probs");
  check_shapes(space, ref_probs, "implicit_step_rewards ref_probs");
  if (v.size() != static_cast<Eigen::Index>(space.size())) {
    throw LengthMismatch("implicit_step_rewards: v size mismatch");
  }
  const double gamma = space.gamma();
  Mat out = Mat::Zero(probs.rows(), probs.cols());
  for (int id : space.nonterminal_ids()) {
    for (int a = 0; a < space.vocab(); ++a) {
      if (probs(id, a) <= 0.0 || ref_probs(id, a) <= 0.0) {
        throw ZeroProbability(
            "implicit_step_rewards: zero probability on evaluated action");
      }
      out(id, a) = beta * std::log(probs(id, a) / ref_probs(id, a)) + v[id] -
                   gamma * v[space.child(id, a)];
    }
  }
  return out;
}

SequenceReward implicit_sequence_reward(const StateSpace& space,
                                        const Mat& probs, const Mat& ref_probs,
                                        double beta, const Vec& v,
                                        int prompt_id,
                                        std::span<const int> response) {
  const auto steps = space.trajectory(prompt_id, response);
  const double gamma = space.gamma();
  SequenceReward out;
  out.per_step = Vec(static_cast<Eigen::Index>(steps.size()));
  out.v0 = v[space.root(prompt_id)];
  double disc = 1.0;
  int last = space.root(prompt_id);
  for (std::size_t t = 0; t < steps.size(); ++t) {
    const auto [s, a] = steps[t];
    if (probs(s, a) <= 0.0 || ref_probs(s, a) <= 0.0) {
      throw ZeroProbability(
          "implicit_sequence_reward: zero probability on evaluated token");
    }
    const int child = space.child(s, a);
    const double logratio = std::log(probs(s, a) / ref_probs(s, a));
    out.per_step[static_cast<Eigen::Index>(t)] =
        beta * logratio + v[s] - gamma * v[child];
    out.total += disc * out.per_step[static_cast<Eigen::Index>(t)];
    out.logratio_part += disc * beta * logratio;
    disc *= gamma;
    last = child;
  }
  out.v_tail = disc * v[last];
  out.consistency =
      std::abs(out.total - (out.logratio_part + out.v0 - out.v_tail));
  return out;
}

ImplicitRewardReport implicit_reward(const StateSpace& space, const Mat& probs,
                                     const Mat& ref_probs, double beta,
                                     const Vec& v) {
  ImplicitRewardReport rep;
  rep.beta = beta;
  rep.per_step = implicit_step_rewards(space, probs, ref_probs, beta, v);
  rep.v0_per_prompt = Vec(space.num_prompts());
  for (int p = 0; p < space.num_prompts(); ++p) {
    rep.v0_per_prompt[p] = v[space.root(p)];
  }
  for (int id : space.terminal_ids()) {
    const State& st = space.state(id);
    const auto seq = implicit_sequence_reward(space, probs, ref_probs, beta, v,
                                              st.prompt_id, st.response);
    rep.terminal_ids.push_back(id);
    rep.per_sequence.push_back(seq.total);
    rep.max_consistency = std::max(rep.max_consistency, seq.consistency);
  }
  return rep;
}

}  // namespace irlab
