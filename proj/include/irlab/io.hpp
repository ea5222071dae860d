#pragma once

/// Artifact (de)serialization. All floats go through "%.17g" so files
/// round-trip bit-exactly and reruns diff clean. Records are
/// tab-separated, one per line; token lists are space-separated within a
/// field; per-prompt vectors are semicolon-joined.

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "irlab/mdp.hpp"
#include "irlab/sampling.hpp"
#include "irlab/soft_rl.hpp"
#include "irlab/train.hpp"

namespace irlab {

std::string format_g17(double v);
double parse_g(const std::string& s);

/// FNV-1a, for config and artifact fingerprints in manifests.
std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
void ensure_dir(const std::string& path);

// prompt_id \t tokens \t return \t weight
void write_demonstrations(const std::string& path,
                          const std::vector<Demonstration>& demos);
std::vector<Demonstration> read_demonstrations(const std::string& path);

// prompt_id \t chosen \t rejected \t margin
void write_pairs(const std::string& path,
                 const std::vector<PreferencePair>& pairs);
std::vector<PreferencePair> read_pairs(const std::string& path);

// step \t loss \t kl \t d_f \t v0[;v0...] \t lambda \t dpo_eval \t acc
void write_metrics(const std::string& path,
                   const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics(const std::string& path);

// state id -> v; (state, action) -> q, pi*
void write_solution(const std::string& path, const StateSpace& space,
                    const SoftSolution& sol);

// state \t action \t value, non-terminal states only
void write_reward_table(const std::string& path, const StateSpace& space,
                        const Mat& reward);
Mat read_reward_table(const std::string& path, const StateSpace& space);

void write_checkpoint(const std::string& path, const Checkpoint& ck);
struct CheckpointParams {
  int step = 0;
  Vec params;
};
CheckpointParams read_checkpoint_params(const std::string& path);

/// Ordered key = value lines.
void write_manifest(const std::string& path,
                    const std::vector<std::pair<std::string, std::string>>&
                        entries);

}  // namespace irlab
