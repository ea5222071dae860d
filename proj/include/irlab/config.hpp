#pragma once

/// Experiment configuration: a flat, diffable INI dialect.
///
///   # comment
///   [mdp]
///   vocab = 2
///   horizon = 3
///   prompt =            # repeatable; tokens separated by spaces
///   prompt = 0 1
///
/// Keys are unique per section except `prompt`. Unknown sections or keys
/// are errors, as are missing required fields; every diagnostic carries
/// the file and line. The raw text is kept for manifest hashing.

#include <cstdint>
#include <string>

#include "irlab/mdp.hpp"
#include "irlab/soft_rl.hpp"
#include "irlab/train.hpp"

namespace irlab {

struct RewardSpec {
  enum class Kind { unset, zero, random, table };
  Kind kind = Kind::unset;
  double lo = -1.0;
  double hi = 1.0;
  std::uint64_t seed = 0;
  std::string path;  // table file, resolved relative to the config
};

struct RefSpec {
  enum class Kind { uniform, random };  // random = softmax of U(lo,hi) logits
  Kind kind = Kind::uniform;
  double lo = -0.5;
  double hi = 0.5;
  std::uint64_t seed = 0;
};

struct PolicySpec {
  enum class Kind { tabular, featurized };
  enum class Init { zeros, random };
  Kind kind = Kind::tabular;
  Init init = Init::zeros;
  int hidden = 32;
  double tau = 1.0;
  double lo = -0.5;
  double hi = 0.5;
  std::uint64_t seed = 0;
};

struct ExpertConfig {
  RewardSpec reward;
  double beta = 1.0;
  VForm v_form = VForm::reference_weighted;
  RefSpec ref;
};

struct DataConfig {
  int demos = 100;
  int pairs = 0;
  int eval_pairs = 0;
  std::uint64_t seed = 0;
  bool exhaustive = false;  // every terminal sequence, reach-weighted
};

struct ProbeConfig {
  int states = 20;
  std::uint64_t seed = 0;
};

struct SweepConfig {
  std::string param;  // "lr", "beta", or "seed"
  std::vector<double> values;
};

struct ExperimentConfig {
  TokenMdp mdp;
  std::int64_t cap = StateSpace::kDefaultCap;
  ExpertConfig expert;
  DataConfig data;
  TrainConfig train;
  PolicySpec policy;
  ProbeConfig probe;
  SweepConfig sweep;
  std::string out_dir = "out";
  std::string mdp_file;     // optional [mdp] file= indirection
  std::string source_text;  // verbatim config bytes, for hashing
};

/// Throws ConfigError with "<origin>:<line>" diagnostics. `origin` names
/// the text in messages (a path or "<inline>").
ExperimentConfig parse_config(const std::string& text,
                              const std::string& origin);

/// Reads the file (IoError on failure) and parses it; an `[mdp] file =`
/// indirection loads the MDP section from the referenced config.
ExperimentConfig load_config(const std::string& path);

}  // namespace irlab
