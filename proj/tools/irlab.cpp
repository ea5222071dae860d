/// Command-line front end. Every subcommand is a thin wrapper over the
/// harness library; flags override the corresponding config fields, and
/// --seed is a master seed for data, training, policy init, and probes
/// (the MDP and expert reward stay as configured, so runs over seeds vary
/// the experiment, not the environment).

#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <string>

#include <CLI11.hpp>

#include "irlab/accept.hpp"
#include "irlab/config.hpp"
#include "irlab/errors.hpp"
#include "irlab/harness.hpp"
#include "irlab/io.hpp"

namespace {

struct Overrides {
  std::string config;
  std::string out;
  long long seed = -1;
  std::string objective;
  std::string divergence;
  double lr = std::numeric_limits<double>::quiet_NaN();
};

irlab::ExperimentConfig make_config(const Overrides& o) {
  irlab::ExperimentConfig cfg = irlab::load_config(o.config);
  if (!o.out.empty()) cfg.out_dir = o.out;
  if (o.seed >= 0) {
    const auto s = static_cast<std::uint64_t>(o.seed);
    cfg.train.seed = s;
    cfg.data.seed = s;
    cfg.probe.seed = s;
    cfg.policy.seed = s;
  }
  if (!o.objective.empty())
    cfg.train.objective = irlab::objective_from_name(o.objective);
  if (!o.divergence.empty()) {
    irlab::find_divergence(o.divergence);  // validate the name early
    cfg.train.divergence = o.divergence;
  }
  if (std::isfinite(o.lr)) cfg.train.learning_rate = o.lr;
  return cfg;
}

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config, "experiment config file")
      ->required();
  sub->add_option("--out", o.out, "output directory (overrides config)");
  sub->add_option("--seed", o.seed,
                  "master seed for data/train/policy/probe (overrides config)");
  sub->add_option("--objective", o.objective,
                  "mle | f_sft | dpo | multi_objective | interleaved");
  sub->add_option("--divergence", o.divergence,
                  "total_variation | pearson_chi2 | squared_hellinger | kl | "
                  "reverse_kl | jensen_shannon");
  sub->add_option("--lr", o.lr, "learning rate (overrides config)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "irlab: exactly solvable token-MDP laboratory for SFT, f-divergence "
      "imitation, and preference learning"};
  app.require_subcommand(1);

  Overrides o;
  int (*command)(const irlab::ExperimentConfig&, std::ostream&) = nullptr;

  auto* gen = app.add_subcommand("gen", "solve the expert and write datasets");
  auto* solve = app.add_subcommand("solve", "exact soft solve + residuals");
  auto* train = app.add_subcommand("train", "train on generated datasets");
  auto* probe = app.add_subcommand("probe", "measure saved checkpoints");
  auto* sweep = app.add_subcommand("sweep", "run the config across a grid");
  auto* report = app.add_subcommand("report", "summarize run artifacts");
  auto* accept = app.add_subcommand("accept", "run the acceptance suite");

  for (auto* sub : {gen, solve, train, probe, sweep, report}) add_common(sub, o);
  std::string accept_out;
  accept->add_option("--out", accept_out,
                     "directory for a copy of the acceptance report");

  gen->callback([&] { command = irlab::cmd_gen; });
  solve->callback([&] { command = irlab::cmd_solve; });
  train->callback([&] { command = irlab::cmd_train; });
  probe->callback([&] { command = irlab::cmd_probe; });
  sweep->callback([&] { command = irlab::cmd_sweep; });
  report->callback([&] { command = irlab::cmd_report; });

  CLI11_PARSE(app, argc, argv);

  try {
    if (accept->parsed()) {
      std::ostringstream buf;
      const bool ok = irlab::run_acceptance(buf);
      std::cout << buf.str();
      if (!accept_out.empty()) {
        irlab::ensure_dir(accept_out);
        irlab::write_text_file(accept_out + "/acceptance.txt", buf.str());
      }
      return ok ? 0 : 1;
    }
    const irlab::ExperimentConfig cfg = make_config(o);
    return command(cfg, std::cout);
  } catch (const irlab::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
