#include "irlab/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <ostream>
#include <sstream>
#include <utility>

#include "irlab/errors.hpp"
#include "irlab/io.hpp"
#include "irlab/occupancy.hpp"
#include "irlab/probes.hpp"
#include "irlab/rng.hpp"
#include "irlab/soft_rl.hpp"

namespace irlab {
namespace {

namespace fs = std::filesystem;

std::string join(const std::string& dir, const std::string& name) {
  if (dir.empty()) return name;
  if (dir.back() == '/') return dir + name;
  return dir + "/" + name;
}

std::string config_hash(const ExperimentConfig& cfg) {
  return hex64(fnv1a64(cfg.source_text));
}

SoftSolution solve_expert(const ExperimentConfig& cfg, const StateSpace& space,
                          const Mat& reward, const Mat& ref) {
  return solve_soft(space, reward, cfg.expert.beta, ref, cfg.expert.v_form);
}

bool needs_demos(Objective o) { return o != Objective::dpo; }
bool needs_pairs(Objective o) {
  return o == Objective::dpo || o == Objective::multi_objective ||
         o == Objective::interleaved;
}

std::string fmt_int(long long v) { return std::to_string(v); }

}  // namespace

StateSpace build_space(const ExperimentConfig& cfg) {
  return StateSpace(cfg.mdp, cfg.cap);
}

Mat build_reward(const StateSpace& space, const RewardSpec& spec) {
  switch (spec.kind) {
    case RewardSpec::Kind::zero:
      return zero_rewards(space);
    case RewardSpec::Kind::random:
      return random_rewards(space, spec.lo, spec.hi, spec.seed);
    case RewardSpec::Kind::table:
      return read_reward_table(spec.path, space);
    case RewardSpec::Kind::unset:
      break;
  }
  throw ConfigError("reward spec is unset; provide [expert] reward");
}

Mat uniform_ref(const StateSpace& space) {
  const int v = space.vocab();
  return Mat::Constant(space.size(), v, 1.0 / v);
}

Mat build_ref(const StateSpace& space, const RefSpec& spec) {
  if (spec.kind == RefSpec::Kind::uniform) return uniform_ref(space);
  Mat ref(space.size(), space.vocab());
  Rng rng(spec.seed);
  Vec logits(space.vocab());
  for (int s = 0; s < space.size(); ++s) {
    for (int a = 0; a < space.vocab(); ++a)
      logits[a] = rng.uniform(spec.lo, spec.hi);
    ref.row(s) = softmax(logits).transpose();
  }
  return ref;
}

PolicyModel build_policy(const StateSpace& space, const PolicySpec& spec) {
  if (spec.kind == PolicySpec::Kind::featurized) {
    if (spec.init == PolicySpec::Init::zeros)
      throw ConfigError(
          "featurized policies need init = random; a zero hidden layer "
          "never breaks symmetry");
    return PolicyModel::featurized(space, spec.hidden, spec.seed, spec.tau);
  }
  if (spec.init == PolicySpec::Init::zeros)
    return PolicyModel::tabular(space, spec.tau);
  return PolicyModel::tabular_random(space, spec.lo, spec.hi, spec.seed,
                                     spec.tau);
}

RunData load_run_data(const ExperimentConfig& cfg, const StateSpace& space) {
  RunData data;
  data.ref_probs = build_ref(space, cfg.expert.ref);

  const std::string demo_path = join(cfg.out_dir, "demos.tsv");
  const std::string pair_path = join(cfg.out_dir, "pairs.tsv");
  const std::string eval_path = join(cfg.out_dir, "eval_pairs.tsv");

  if (needs_demos(cfg.train.objective)) {
    if (!fs::exists(demo_path))
      throw IoError("missing dataset " + demo_path + "; run `gen` first");
    data.demos = read_demonstrations(demo_path);
  }
  if (needs_pairs(cfg.train.objective)) {
    if (!fs::exists(pair_path))
      throw IoError("missing dataset " + pair_path +
                    "; run `gen` with [data] pairs > 0 first");
    data.pairs = read_pairs(pair_path);
  }
  if (fs::exists(eval_path)) data.eval_pairs = read_pairs(eval_path);

  if (space.gamma() < 1.0) {
    const Mat reward = build_reward(space, cfg.expert.reward);
    const SoftSolution sol = solve_expert(cfg, space, reward, data.ref_probs);
    data.mu_expert = occupancy(space, sol.pi_star);
  }
  return data;
}

int cmd_gen(const ExperimentConfig& cfg, std::ostream& log) {
  ensure_dir(cfg.out_dir);
  const StateSpace space = build_space(cfg);
  const Mat reward = build_reward(space, cfg.expert.reward);
  const Mat ref = build_ref(space, cfg.expert.ref);
  const SoftSolution sol = solve_expert(cfg, space, reward, ref);

  write_reward_table(join(cfg.out_dir, "reward.tsv"), space, reward);
  write_solution(join(cfg.out_dir, "solution.tsv"), space, sol);

  std::vector<Demonstration> demos =
      cfg.data.exhaustive
          ? exhaustive_demonstrations(space, reward, sol.pi_star)
          : sample_demonstrations(space, reward, sol.pi_star, cfg.data.demos,
                                  cfg.data.seed);
  write_demonstrations(join(cfg.out_dir, "demos.tsv"), demos);

  std::size_t n_pairs = 0;
  if (cfg.data.pairs > 0) {
    auto pairs = build_preference_pairs(space, reward, sol.pi_star,
                                        cfg.data.pairs, cfg.data.seed + 1);
    write_pairs(join(cfg.out_dir, "pairs.tsv"), pairs);
    n_pairs = pairs.size();
  }
  std::size_t n_eval = 0;
  if (cfg.data.eval_pairs > 0) {
    auto pairs = build_preference_pairs(space, reward, sol.pi_star,
                                        cfg.data.eval_pairs,
                                        cfg.data.seed + 2);
    write_pairs(join(cfg.out_dir, "eval_pairs.tsv"), pairs);
    n_eval = pairs.size();
  }

  write_manifest(join(cfg.out_dir, "manifest_gen.tsv"),
                 {{"command", "gen"},
                  {"version", kToolVersion},
                  {"config_hash", config_hash(cfg)},
                  {"states", fmt_int(space.size())},
                  {"gamma", format_g17(space.gamma())},
                  {"expert_beta", format_g17(cfg.expert.beta)},
                  {"demos", fmt_int(static_cast<long long>(demos.size()))},
                  {"pairs", fmt_int(static_cast<long long>(n_pairs))},
                  {"eval_pairs", fmt_int(static_cast<long long>(n_eval))}});

  log << "gen: " << space.size() << " states, " << demos.size() << " demos, "
      << n_pairs << " pairs, " << n_eval << " eval pairs -> " << cfg.out_dir
      << "\n";
  return 0;
}

int cmd_solve(const ExperimentConfig& cfg, std::ostream& log) {
  ensure_dir(cfg.out_dir);
  const StateSpace space = build_space(cfg);
  const Mat reward = build_reward(space, cfg.expert.reward);
  const Mat ref = build_ref(space, cfg.expert.ref);
  const SoftSolution sol = solve_expert(cfg, space, reward, ref);
  const FixedPointReport rep = verify_fixed_point(space, sol, reward);

  write_solution(join(cfg.out_dir, "solution.tsv"), space, sol);
  write_manifest(join(cfg.out_dir, "manifest_solve.tsv"),
                 {{"command", "solve"},
                  {"version", kToolVersion},
                  {"config_hash", config_hash(cfg)},
                  {"states", fmt_int(space.size())},
                  {"beta", format_g17(sol.beta)},
                  {"max_residual", format_g17(rep.max_residual())}});

  log << "solve: " << space.size() << " states, beta " << sol.beta
      << ", residuals value=" << rep.value_residual
      << " bellman=" << rep.bellman_residual
      << " norm=" << rep.normalization_residual << "\n";
  for (int p = 0; p < space.num_prompts(); ++p)
    log << "  J*(prompt " << p << ") = " << format_g17(sol.j_star[p]) << "\n";
  return 0;
}

int cmd_train(const ExperimentConfig& cfg, std::ostream& log) {
  ensure_dir(cfg.out_dir);
  const StateSpace space = build_space(cfg);
  const RunData data = load_run_data(cfg, space);
  PolicyModel policy = build_policy(space, cfg.policy);

  TrainResult result = run_training(space, std::move(policy), data, cfg.train);

  write_metrics(join(cfg.out_dir, "metrics.tsv"), result.metrics);
  const std::string ck_dir = join(cfg.out_dir, "checkpoints");
  ensure_dir(ck_dir);
  // Stale checkpoints from a previous run in the same directory would leak
  // into probe readings; the directory always mirrors exactly one run.
  for (const auto& entry : fs::directory_iterator(ck_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("ck_", 0) == 0) fs::remove(entry.path());
  }
  for (const Checkpoint& ck : result.checkpoints) {
    char name[32];
    std::snprintf(name, sizeof(name), "ck_%06d.tsv", ck.step);
    write_checkpoint(join(ck_dir, name), ck);
  }

  std::string stages;
  for (std::size_t i = 0; i < result.stage_boundaries.size(); ++i) {
    if (i) stages += ";";
    stages += std::to_string(result.stage_boundaries[i]);
  }
  const MetricsRow& last = result.metrics.back();
  write_manifest(
      join(cfg.out_dir, "manifest_train.tsv"),
      {{"command", "train"},
       {"version", kToolVersion},
       {"config_hash", config_hash(cfg)},
       {"objective", objective_name(cfg.train.objective)},
       {"divergence", cfg.train.divergence},
       {"steps", fmt_int(last.step)},
       {"checkpoints",
        fmt_int(static_cast<long long>(result.checkpoints.size()))},
       {"final_loss", format_g17(last.loss)},
       {"final_kl", format_g17(last.kl)},
       {"stage_boundaries", stages},
       {"domain_clips", fmt_int(result.stats.domain_clips)},
       {"stability_clips", fmt_int(result.stats.stability_clips)},
       {"tv_out_of_band", fmt_int(result.stats.tv_out_of_band)}});

  log << "train: " << objective_name(cfg.train.objective) << "/"
      << cfg.train.divergence << ", " << last.step << " steps, final loss "
      << last.loss << ", kl " << last.kl << ", "
      << result.checkpoints.size() << " checkpoints -> " << cfg.out_dir
      << "\n";
  return 0;
}

int cmd_probe(const ExperimentConfig& cfg, std::ostream& log) {
  const StateSpace space = build_space(cfg);
  const Mat ref = build_ref(space, cfg.expert.ref);
  const Mat reward = build_reward(space, cfg.expert.reward);
  const SoftSolution sol = solve_expert(cfg, space, reward, ref);

  const std::string ck_dir = join(cfg.out_dir, "checkpoints");
  std::vector<std::pair<int, std::string>> files;
  if (fs::is_directory(ck_dir)) {
    for (const auto& entry : fs::directory_iterator(ck_dir)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind("ck_", 0) == 0) {
        CheckpointParams cp = read_checkpoint_params(entry.path().string());
        files.emplace_back(cp.step, entry.path().string());
      }
    }
  }
  if (files.empty())
    throw MissingCheckpoint("no checkpoints under " + ck_dir +
                            "; run `train` first");
  std::sort(files.begin(), files.end());

  std::vector<Checkpoint> ckpts;
  ckpts.reserve(files.size());
  for (const auto& [step, path] : files) {
    CheckpointParams cp = read_checkpoint_params(path);
    PolicyModel p = build_policy(space, cfg.policy);
    p.set_params(cp.params);
    ckpts.push_back(Checkpoint{step, std::move(p), MetricsRow{}});
  }

  const std::vector<int> probe_states =
      select_probe_states(space, cfg.probe.states, cfg.probe.seed);
  const double beta = cfg.train.beta;

  const ValueRankingProbe ranking =
      value_ranking_probe(space, ckpts, probe_states, ref, beta);
  const V0Trace trace = v0_trace_probe(space, ckpts, ref, beta);
  const LogitsQProbe lq = logits_q_probe(space, ckpts.back().policy, sol);
  const ValueDominanceProbe dom =
      value_dominance_probe(space, ckpts.back().policy, sol, probe_states);

  std::ostringstream kd;
  kd << "# kendall tau-a between checkpoint value rankings; row i = "
        "checkpoint step "
     << "\n";
  for (Eigen::Index i = 0; i < ranking.kendall.rows(); ++i) {
    kd << ckpts[static_cast<std::size_t>(i)].step;
    for (Eigen::Index j = 0; j < ranking.kendall.cols(); ++j)
      kd << "\t" << format_g17(ranking.kendall(i, j));
    kd << "\n";
  }
  write_text_file(join(cfg.out_dir, "probe_kendall.tsv"), kd.str());

  std::ostringstream vals;
  vals << "# step\tV_ref_weighted[;...]\tV_raw_lse[;...] over probe states\n";
  for (Eigen::Index c = 0; c < ranking.values.rows(); ++c) {
    vals << ckpts[static_cast<std::size_t>(c)].step << "\t";
    for (Eigen::Index i = 0; i < ranking.values.cols(); ++i)
      vals << (i ? ";" : "") << format_g17(ranking.values(c, i));
    vals << "\t";
    for (Eigen::Index i = 0; i < ranking.raw_values.cols(); ++i)
      vals << (i ? ";" : "") << format_g17(ranking.raw_values(c, i));
    vals << "\n";
  }
  write_text_file(join(cfg.out_dir, "probe_values.tsv"), vals.str());

  std::ostringstream v0;
  v0 << "# convergence_step";
  for (int s : trace.convergence_step) v0 << "\t" << s;
  v0 << "\n# step\tV(s0) per prompt\n";
  for (std::size_t c = 0; c < trace.steps.size(); ++c) {
    v0 << trace.steps[c] << "\t";
    for (Eigen::Index p = 0; p < trace.v0.cols(); ++p)
      v0 << (p ? ";" : "") << format_g17(trace.v0(static_cast<Eigen::Index>(c), p));
    v0 << "\n";
  }
  write_text_file(join(cfg.out_dir, "probe_v0.tsv"), v0.str());

  std::ostringstream cs;
  cs << "# state\tc_value\tc_spread (final checkpoint vs expert Q)\n";
  for (int s : space.nonterminal_ids())
    cs << s << "\t" << format_g17(lq.c_value[s]) << "\t"
       << format_g17(lq.c_spread[s]) << "\n";
  write_text_file(join(cfg.out_dir, "probe_cspread.tsv"), cs.str());

  std::ostringstream dm;
  dm << "# fraction\t" << format_g17(dom.fraction) << "\n";
  dm << "# |dC|\t|dV| per probe-state pair\n";
  for (const auto& [dc, dv] : dom.entries)
    dm << format_g17(dc) << "\t" << format_g17(dv) << "\n";
  write_text_file(join(cfg.out_dir, "probe_dominance.tsv"), dm.str());

  bool wrote_dpo = false;
  if (!ckpts.empty()) {
    std::vector<PreferencePair> eval_pairs;
    const std::string eval_path = join(cfg.out_dir, "eval_pairs.tsv");
    const std::string pair_path = join(cfg.out_dir, "pairs.tsv");
    if (fs::exists(eval_path))
      eval_pairs = read_pairs(eval_path);
    else if (fs::exists(pair_path))
      eval_pairs = read_pairs(pair_path);
    if (!eval_pairs.empty()) {
      const DpoEvalProbe dpo =
          dpo_eval_probe(space, ckpts, ref, eval_pairs, beta, reward);
      std::ostringstream out;
      out << "# step\tdpo_eval_loss\texpected_return\n";
      for (std::size_t i = 0; i < dpo.steps.size(); ++i)
        out << dpo.steps[i] << "\t"
            << format_g17(dpo.loss[static_cast<Eigen::Index>(i)]) << "\t"
            << format_g17(dpo.expected_ret[static_cast<Eigen::Index>(i)])
            << "\n";
      write_text_file(join(cfg.out_dir, "probe_dpo.tsv"), out.str());
      wrote_dpo = true;
    }
  }

  log << "probe: " << ckpts.size() << " checkpoints, "
      << probe_states.size() << " probe states\n";
  log << "  kendall(first, last) = "
      << ranking.kendall(0, ranking.kendall.cols() - 1) << "\n";
  log << "  v0 convergence steps:";
  for (int s : trace.convergence_step) log << " " << s;
  log << "\n  value-dominance fraction = " << dom.fraction << "\n";
  if (!wrote_dpo) log << "  (no pairs on disk; probe_dpo.tsv skipped)\n";
  return 0;
}

int cmd_sweep(const ExperimentConfig& cfg, std::ostream& log) {
  if (cfg.sweep.param.empty() || cfg.sweep.values.empty())
    throw ConfigError("sweep needs [sweep] param and values");
  ensure_dir(cfg.out_dir);

  std::ostringstream summary;
  summary << "# " << cfg.sweep.param
          << "\tfinal_loss\tfinal_kl\tfinal_dpo_eval\tfinal_acc\tdir\n";
  for (std::size_t i = 0; i < cfg.sweep.values.size(); ++i) {
    const double v = cfg.sweep.values[i];
    ExperimentConfig sub = cfg;
    char dirname[32];
    std::snprintf(dirname, sizeof(dirname), "sweep_%02zu", i);
    sub.out_dir = join(cfg.out_dir, dirname);
    if (cfg.sweep.param == "lr") {
      sub.train.learning_rate = v;
    } else if (cfg.sweep.param == "beta") {
      sub.train.beta = v;
      sub.expert.beta = v;
    } else if (cfg.sweep.param == "seed") {
      const auto s = static_cast<std::uint64_t>(v);
      sub.train.seed = s;
      sub.data.seed = s;
      sub.policy.seed = s;
      sub.probe.seed = s;
    } else {
      throw ConfigError("unknown sweep param `" + cfg.sweep.param +
                        "` (expected lr, beta, or seed)");
    }
    log << "sweep[" << i << "] " << cfg.sweep.param << " = " << v << "\n";
    cmd_gen(sub, log);
    cmd_train(sub, log);
    const auto rows = read_metrics(join(sub.out_dir, "metrics.tsv"));
    const MetricsRow& last = rows.back();
    summary << format_g17(v) << "\t" << format_g17(last.loss) << "\t"
            << format_g17(last.kl) << "\t" << format_g17(last.dpo_eval)
            << "\t" << format_g17(last.acc) << "\t" << dirname << "\n";
  }
  write_text_file(join(cfg.out_dir, "sweep_summary.tsv"), summary.str());
  log << "sweep: " << cfg.sweep.values.size() << " runs -> "
      << join(cfg.out_dir, "sweep_summary.tsv") << "\n";
  return 0;
}

int cmd_report(const ExperimentConfig& cfg, std::ostream& log) {
  const std::string metrics_path = join(cfg.out_dir, "metrics.tsv");
  if (!fs::exists(metrics_path))
    throw IoError("no metrics at " + metrics_path + "; run `train` first");
  const auto rows = read_metrics(metrics_path);

  std::ostringstream rep;
  rep << "run report: " << cfg.out_dir << "\n";
  const MetricsRow& first = rows.front();
  const MetricsRow& last = rows.back();
  double min_loss = kInf;
  for (const auto& r : rows) min_loss = std::min(min_loss, r.loss);
  rep << "  steps          " << last.step << "\n";
  rep << "  loss           " << first.loss << " -> " << last.loss
      << " (min " << min_loss << ")\n";
  rep << "  kl_to_ref      " << first.kl << " -> " << last.kl << "\n";
  if (std::isfinite(last.d_f)) rep << "  d_f            " << last.d_f << "\n";
  if (std::isfinite(last.lambda))
    rep << "  lambda         " << last.lambda << "\n";
  if (std::isfinite(last.dpo_eval))
    rep << "  dpo_eval       " << last.dpo_eval << "\n";
  if (std::isfinite(last.acc)) rep << "  pair_acc       " << last.acc << "\n";
  rep << "  v0(final)     ";
  for (Eigen::Index p = 0; p < last.v0.size(); ++p)
    rep << " " << last.v0[p];
  rep << "\n";

  const std::string kendall_path = join(cfg.out_dir, "probe_kendall.tsv");
  if (fs::exists(kendall_path)) {
    rep << "  probe_kendall:\n";
    std::istringstream in(read_text_file(kendall_path));
    std::string line;
    while (std::getline(in, line))
      if (!line.empty() && line[0] != '#') rep << "    " << line << "\n";
  }
  const std::string dom_path = join(cfg.out_dir, "probe_dominance.tsv");
  if (fs::exists(dom_path)) {
    std::istringstream in(read_text_file(dom_path));
    std::string line;
    if (std::getline(in, line) && line.rfind("# fraction\t", 0) == 0)
      rep << "  value_dominance " << line.substr(11) << "\n";
  }

  write_text_file(join(cfg.out_dir, "report.txt"), rep.str());
  log << rep.str();
  return 0;
}

}  // namespace irlab
