#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "irlab/errors.hpp"
#include "irlab/mdp.hpp"
#include "irlab/policy.hpp"
#include "irlab/probes.hpp"
#include "irlab/rng.hpp"
#include "irlab/soft_rl.hpp"
#include "irlab/train.hpp"

#include "test_util.hpp"

using namespace irlab;
using namespace irlab::test;

namespace {

Checkpoint make_ckpt(int step, const PolicyModel& policy) {
  Checkpoint ck;
  ck.step = step;
  ck.policy = policy;
  ck.metrics.step = step;
  return ck;
}

}  // namespace

TEST_CASE("kendall tau-a on hand-ranked sequences") {
  const std::vector<double> x = {1, 2, 3, 4, 5};
  std::vector<double> rev = x;
  std::reverse(rev.begin(), rev.end());
  CHECK(kendall_tau(x, x) == 1.0);
  CHECK(kendall_tau(x, rev) == -1.0);
  CHECK(kendall_tau({1, 2, 3, 4}, {1, 3, 2, 4}) ==
        doctest::Approx(1.0 - 2.0 / 6.0).epsilon(1e-15));
  // Ties drop out of both counts but stay in the denominator.
  CHECK(kendall_tau({1, 1, 2}, {1, 2, 3}) ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(kendall_tau({1, 1, 2}, {1, 1, 2}) ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-15));

  // Antisymmetry under reversing one argument, tie-free case.
  Rng rng(5);
  std::vector<double> a, b;
  for (int i = 0; i < 9; ++i) {
    a.push_back(rng.uniform(-1.0, 1.0));
    b.push_back(rng.uniform(-1.0, 1.0));
  }
  std::vector<double> nb;
  for (double v : b) nb.push_back(-v);
  CHECK(kendall_tau(a, nb) == doctest::Approx(-kendall_tau(a, b)).epsilon(1e-15));

  CHECK_THROWS_AS(kendall_tau({1, 2}, {1, 2, 3}), LengthMismatch);
  CHECK_THROWS_AS(kendall_tau({1}, {1}), Error);
}

TEST_CASE("logits_q_probe recovers exact per-state shifts") {
  StateSpace space(make_mdp(3, 2));
  const Mat reward = random_rewards(space, -1.0, 1.0, 7);
  const double beta = 0.5;
  const double tau = 2.0;
  const auto sol = solve_soft(space, reward, beta, uniform_probs(space));

  SUBCASE("a global shift gives zero spread and the shift as value") {
    PolicyModel policy = PolicyModel::tabular(space, tau);
    for (int id : space.nonterminal_ids()) {
      policy.set_logits(
          id, ((tau / beta) * sol.q.row(id).transpose().array() + 5.0).matrix());
    }
    const auto probe = logits_q_probe(space, policy, sol);
    for (int id : space.nonterminal_ids()) {
      CHECK(std::abs(probe.c_spread[id]) <= 1e-12);
      CHECK(probe.c_value[id] == doctest::Approx(5.0).epsilon(1e-12));
    }
    for (int id : space.terminal_ids()) {
      CHECK(std::isnan(probe.c_value[id]));
      CHECK(std::isnan(probe.c_spread[id]));
    }
  }
  SUBCASE("per-state constants are recovered exactly") {
    PolicyModel policy = PolicyModel::tabular(space, tau);
    Rng rng(8);
    std::vector<double> consts(static_cast<std::size_t>(space.size()), 0.0);
    for (int id : space.nonterminal_ids()) {
      consts[static_cast<std::size_t>(id)] = rng.uniform(-3.0, 3.0);
      policy.set_logits(id, ((tau / beta) * sol.q.row(id).transpose().array() +
                             consts[static_cast<std::size_t>(id)])
                                .matrix());
    }
    const auto probe = logits_q_probe(space, policy, sol);
    for (int id : space.nonterminal_ids()) {
      CHECK(std::abs(probe.c_spread[id]) <= 1e-12);
      CHECK(probe.c_value[id] ==
            doctest::Approx(consts[static_cast<std::size_t>(id)]).epsilon(1e-12));
    }
  }
  SUBCASE("spread is shift-invariant and scales with the residual") {
    PolicyModel policy = PolicyModel::tabular_random(space, -1.0, 1.0, 9, tau);
    const auto base = logits_q_probe(space, policy, sol);
    PolicyModel shifted = policy;
    for (int id : space.nonterminal_ids()) {
      shifted.set_logits(id, (policy.logits(id).array() + 11.0).matrix());
    }
    const auto moved = logits_q_probe(space, shifted, sol);
    for (int id : space.nonterminal_ids()) {
      CHECK(std::abs(moved.c_spread[id] - base.c_spread[id]) <= 1e-9);
      CHECK(moved.c_value[id] - base.c_value[id] ==
            doctest::Approx(11.0).epsilon(1e-10));
    }
    // Doubling the deviation from the scaled Q doubles the spread.
    PolicyModel two = PolicyModel::tabular(space, tau);
    PolicyModel three = PolicyModel::tabular(space, tau);
    Rng rng(10);
    for (int id : space.nonterminal_ids()) {
      Vec dev(space.vocab());
      for (int a = 0; a < space.vocab(); ++a) dev[a] = rng.uniform(-1.0, 1.0);
      const Vec scaled = (tau / beta) * sol.q.row(id).transpose();
      two.set_logits(id, scaled + 2.0 * dev);
      three.set_logits(id, scaled + 3.0 * dev);
    }
    const auto p2 = logits_q_probe(space, two, sol);
    const auto p3 = logits_q_probe(space, three, sol);
    for (int id : space.nonterminal_ids()) {
      CHECK(std::abs(2.0 * p3.c_spread[id] - 3.0 * p2.c_spread[id]) <= 1e-9);
    }
  }
}

TEST_CASE("select_probe_states is a deterministic depth-stratified draw") {
  StateSpace space(make_mdp(3, 3));
  const auto a = select_probe_states(space, 9, 42);
  const auto b = select_probe_states(space, 9, 42);
  CHECK(a == b);
  REQUIRE(a.size() == 9);
  std::set<int> seen(a.begin(), a.end());
  CHECK(seen.size() == a.size());
  for (int id : a) CHECK_FALSE(space.terminal(id));
  // Round-robin across depth buckets with exhaustion: the buckets hold
  // 1, 3, and 9 states, so 9 draws land 1 + 3 + 5 across depths {0, 1, 2}.
  std::vector<int> per_depth(3, 0);
  for (int id : a) per_depth[static_cast<std::size_t>(space.depth(id))]++;
  CHECK(per_depth == std::vector<int>{1, 3, 5});

  // Requests beyond the population return every non-terminal state.
  const auto all = select_probe_states(space, 10000, 1);
  CHECK(all.size() == space.nonterminal_ids().size());
  CHECK_THROWS_AS(select_probe_states(space, 0, 1), Error);
}

TEST_CASE("value_ranking_probe matches the value formulas") {
  StateSpace space(make_mdp(2, 2));
  const Mat ref = random_probs(space, 21);
  const double beta = 0.7;
  const PolicyModel p1 = PolicyModel::tabular_random(space, -1.0, 1.0, 22);
  const PolicyModel p2 = PolicyModel::tabular_random(space, -1.0, 1.0, 23);
  const auto probe_states = select_probe_states(space, 3, 24);
  const std::vector<Checkpoint> ckpts = {make_ckpt(0, p1), make_ckpt(10, p2)};

  const auto probe = value_ranking_probe(space, ckpts, probe_states, ref, beta);
  REQUIRE(probe.values.rows() == 2);
  REQUIRE(probe.values.cols() == 3);
  for (int c = 0; c < 2; ++c) {
    const PolicyModel& p = c == 0 ? p1 : p2;
    for (int i = 0; i < 3; ++i) {
      const int id = probe_states[static_cast<std::size_t>(i)];
      const Vec x = (p.logits(id) / beta).array() +
                    ref.row(id).transpose().array().log();
      CHECK(std::abs(probe.values(c, i) - beta * logsumexp(x)) <= 1e-12);
      CHECK(std::abs(probe.raw_values(c, i) - logsumexp(p.logits(id))) <= 1e-12);
    }
  }
  // The kendall entry is the tau of the two value rows.
  std::vector<double> row0, row1;
  for (int i = 0; i < 3; ++i) {
    row0.push_back(probe.values(0, i));
    row1.push_back(probe.values(1, i));
  }
  CHECK(probe.kendall(0, 1) == kendall_tau(row0, row1));
  CHECK(probe.kendall(0, 1) >= -1.0);
  CHECK(probe.kendall(0, 1) <= 1.0);
}

TEST_CASE("value_ranking_probe kendall matrix is honest about ties") {
  StateSpace space(make_mdp(3, 2));
  const Mat ref = uniform_probs(space);
  const auto probe_states = select_probe_states(space, 4, 31);

  SUBCASE("identical distinct-valued checkpoints correlate perfectly") {
    const PolicyModel p = PolicyModel::tabular_random(space, -2.0, 2.0, 32);
    const std::vector<Checkpoint> ckpts = {make_ckpt(0, p), make_ckpt(5, p)};
    const auto probe = value_ranking_probe(space, ckpts, probe_states, ref, 1.0);
    CHECK(probe.kendall(0, 1) == 1.0);
    CHECK(probe.kendall(1, 0) == probe.kendall(0, 1));
    CHECK(probe.kendall(0, 0) == 1.0);
  }
  SUBCASE("an all-uniform checkpoint ties every state") {
    // Zero logits give identical values at equal-depth... across all states
    // of any depth under a uniform reference, so the honest unadjusted
    // diagonal drops below one.
    const PolicyModel p = PolicyModel::tabular(space);
    const std::vector<Checkpoint> ckpts = {make_ckpt(0, p)};
    const auto probe = value_ranking_probe(space, ckpts, probe_states, ref, 1.0);
    CHECK(probe.kendall(0, 0) < 1.0);
  }
  SUBCASE("degenerate inputs are rejected") {
    const PolicyModel p = PolicyModel::tabular(space);
    CHECK_THROWS_AS(
        value_ranking_probe(space, {make_ckpt(0, p)}, {space.root(0)}, ref, 1.0),
        Error);
    const int terminal = space.terminal_ids().front();
    CHECK_THROWS_AS(value_ranking_probe(space, {make_ckpt(0, p)},
                                        {space.root(0), terminal}, ref, 1.0),
                    Error);
  }
}

TEST_CASE("v0_trace_probe reports first entry into the band") {
  StateSpace space(make_mdp(2, 1));
  const Mat ref = uniform_probs(space);

  SUBCASE("flat traces converge immediately") {
    const PolicyModel p = PolicyModel::tabular_random(space, -1.0, 1.0, 41);
    const std::vector<Checkpoint> ckpts = {make_ckpt(0, p), make_ckpt(10, p),
                                           make_ckpt(20, p)};
    const auto trace = v0_trace_probe(space, ckpts, ref, 1.0);
    CHECK(trace.steps == std::vector<int>{0, 10, 20});
    CHECK(trace.v0(0, 0) == trace.v0(2, 0));
    CHECK(trace.convergence_step == std::vector<int>{0});
  }
  SUBCASE("constant logit rows pin v0 exactly") {
    // logits (c, c) under a uniform reference give v0 = c; final c = 1 puts
    // the band at |v0 - 1| <= 0.05, so c = 1.04 is in and c = 2.0 is out.
    auto with_const = [&](double c) {
      PolicyModel p = PolicyModel::tabular(space);
      p.set_logits(space.root(0), Vec::Constant(2, c));
      return p;
    };
    const std::vector<Checkpoint> ckpts = {make_ckpt(0, with_const(2.0)),
                                           make_ckpt(10, with_const(1.04)),
                                           make_ckpt(20, with_const(1.0))};
    const auto trace = v0_trace_probe(space, ckpts, ref, 1.0);
    CHECK(trace.v0(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(trace.v0(1, 0) == doctest::Approx(1.04).epsilon(1e-12));
    CHECK(trace.v0(2, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(trace.convergence_step == std::vector<int>{10});
  }
  SUBCASE("an optimal checkpoint reports the solved root value") {
    StateSpace deep(make_mdp(3, 2));
    const Mat reward = random_rewards(deep, -1.0, 1.0, 42);
    const Mat dref = random_probs(deep, 43);
    const double beta = 0.6;
    const auto sol = solve_soft(deep, reward, beta, dref);
    PolicyModel p = PolicyModel::tabular(deep);
    for (int id : deep.nonterminal_ids()) {
      p.set_logits(id, sol.q.row(id).transpose());
    }
    const auto trace = v0_trace_probe(deep, {make_ckpt(0, p)}, dref, beta);
    CHECK(std::abs(trace.v0(0, 0) - sol.v[deep.root(0)]) <= 1e-9);
  }
}

TEST_CASE("dpo_eval_probe pairs held-out loss with the true return") {
  StateSpace space(make_mdp(2, 2));
  const Mat reward = random_rewards(space, -1.0, 1.0, 51);
  const Mat ref = uniform_probs(space);
  const double beta = 1.0;
  const auto eval_pairs =
      build_preference_pairs(space, reward, random_probs(space, 52), 12, 53);
  REQUIRE(!eval_pairs.empty());

  const auto sol = solve_soft(space, reward, beta, ref);
  PolicyModel expert = PolicyModel::tabular(space);
  for (int id : space.nonterminal_ids()) {
    expert.set_logits(id, sol.q.row(id).transpose());
  }
  const PolicyModel at_ref = PolicyModel::tabular(space);

  const std::vector<Checkpoint> ckpts = {make_ckpt(0, at_ref),
                                         make_ckpt(50, expert)};
  const auto probe = dpo_eval_probe(space, ckpts, ref, eval_pairs, beta, reward);
  CHECK(probe.steps == std::vector<int>{0, 50});
  CHECK(probe.loss[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(probe.loss[1] < std::log(2.0));
  for (int c = 0; c < 2; ++c) {
    const PolicyModel& p = c == 0 ? at_ref : expert;
    CHECK(std::abs(probe.expected_ret[c] -
                   expected_return(space, reward, p.action_probs())) <= 1e-14);
  }
  CHECK(probe.expected_ret[1] > probe.expected_ret[0]);
}

TEST_CASE("value dominance separates constructed extremes") {
  StateSpace space(make_mdp(3, 2));
  const Mat reward = random_rewards(space, -1.0, 1.0, 61);
  const double beta = 0.5;
  const double tau = 1.0;
  const auto sol = solve_soft(space, reward, beta, uniform_probs(space));
  const auto probe_states = select_probe_states(space, 4, 62);
  const std::size_t n_pairs =
      probe_states.size() * (probe_states.size() - 1) / 2;

  SUBCASE("identical constants lose to value gaps everywhere") {
    PolicyModel policy = PolicyModel::tabular(space, tau);
    for (int id : space.nonterminal_ids()) {
      policy.set_logits(
          id, ((tau / beta) * sol.q.row(id).transpose().array() + 4.2).matrix());
    }
    const auto probe = value_dominance_probe(space, policy, sol, probe_states);
    CHECK(probe.entries.size() == n_pairs);
    CHECK(probe.fraction == 1.0);
    for (const auto& [dc, dv] : probe.entries) {
      CHECK(dc <= 1e-10);
      CHECK(dv > 0.0);
    }
  }
  SUBCASE("wild per-state constants dominate the value spread") {
    PolicyModel policy = PolicyModel::tabular(space, tau);
    Rng rng(63);
    for (int id : space.nonterminal_ids()) {
      policy.set_logits(id, ((tau / beta) * sol.q.row(id).transpose().array() +
                             rng.uniform(100.0, 1e4))
                                .matrix());
    }
    const auto probe = value_dominance_probe(space, policy, sol, probe_states);
    CHECK(probe.fraction == 0.0);
  }
}

TEST_CASE("probes never mutate the checkpoint policies") {
  StateSpace space(make_mdp(2, 2));
  const Mat reward = random_rewards(space, -1.0, 1.0, 71);
  const Mat ref = random_probs(space, 72);
  const PolicyModel policy = PolicyModel::tabular_random(space, -1.0, 1.0, 73);
  const Vec before = policy.params();
  const auto sol = solve_soft(space, reward, 1.0, ref);
  const auto probe_states = select_probe_states(space, 3, 74);
  const auto pairs =
      build_preference_pairs(space, reward, random_probs(space, 75), 6, 76);
  const std::vector<Checkpoint> ckpts = {make_ckpt(0, policy),
                                         make_ckpt(1, policy)};

  logits_q_probe(space, policy, sol);
  value_ranking_probe(space, ckpts, probe_states, ref, 1.0);
  dpo_eval_probe(space, ckpts, ref, pairs, 1.0, reward);
  v0_trace_probe(space, ckpts, ref, 1.0);
  value_dominance_probe(space, policy, sol, probe_states);

  CHECK((policy.params() - before).cwiseAbs().maxCoeff() == 0.0);
}
