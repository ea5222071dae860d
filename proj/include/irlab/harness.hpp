#pragma once

/// Experiment orchestration behind the CLI: construct spaces, rewards,
/// reference policies, and initial policies from an ExperimentConfig,
/// and implement the gen / solve / train / probe / sweep / report
/// commands as library functions so tests can drive them directly.

#include <iosfwd>
#include <string>

#include "irlab/config.hpp"
#include "irlab/mdp.hpp"
#include "irlab/policy.hpp"
#include "irlab/train.hpp"

namespace irlab {

inline constexpr const char* kToolVersion = "0.1.0";

StateSpace build_space(const ExperimentConfig& cfg);
Mat build_reward(const StateSpace& space, const RewardSpec& spec);
Mat build_ref(const StateSpace& space, const RefSpec& spec);
PolicyModel build_policy(const StateSpace& space, const PolicySpec& spec);

/// Uniform rows; the default reference.
Mat uniform_ref(const StateSpace& space);

/// Loads datasets written by cmd_gen and assembles the training inputs
/// (expert occupancy included when gamma < 1). Throws IoError when a
/// required dataset is missing.
RunData load_run_data(const ExperimentConfig& cfg, const StateSpace& space);

int cmd_gen(const ExperimentConfig& cfg, std::ostream& log);
int cmd_solve(const ExperimentConfig& cfg, std::ostream& log);
int cmd_train(const ExperimentConfig& cfg, std::ostream& log);
int cmd_probe(const ExperimentConfig& cfg, std::ostream& log);
int cmd_sweep(const ExperimentConfig& cfg, std::ostream& log);
int cmd_report(const ExperimentConfig& cfg, std::ostream& log);

}  // namespace irlab
