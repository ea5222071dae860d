#pragma once

/// Expert datasets: sampled demonstrations, exhaustive weighted
/// demonstrations, and return-labeled preference pairs.

#include <cstdint>
#include <vector>

#include "irlab/mdp.hpp"
#include "irlab/numerics.hpp"
#include "irlab/rng.hpp"

namespace irlab {

struct Demonstration {
  int prompt_id = 0;
  std::vector<int> response;
  double ret = 0.0;     // discounted true return, recomputable from reward
  double weight = 1.0;  // batch weight; exhaustive datasets store sequence
                        // probabilities here so weighted means are exact
                        // expectations
};

struct PreferencePair {
  int prompt_id = 0;
  std::vector<int> chosen;
  std::vector<int> rejected;
  double margin = 0.0;  // true-return difference, >= 0
};

/// One rollout from `probs`; prompts are drawn uniformly unless fixed.
std::vector<int> sample_response(const StateSpace& space, const Mat& probs,
                                 int prompt_id, Rng& rng);

std::vector<Demonstration> sample_demonstrations(const StateSpace& space,
                                                 const Mat& reward,
                                                 const Mat& probs, int n,
                                                 std::uint64_t seed);

/// Every terminal sequence once, weighted by its reach probability under
/// `probs` (prompt mixture included, so weights sum to 1).
std::vector<Demonstration> exhaustive_demonstrations(const StateSpace& space,
                                                     const Mat& reward,
                                                     const Mat& probs);

/// Up to n pairs; each attempt draws two responses for a uniform prompt,
/// labels by true return, drops ties and duplicate draws. Throws
/// DegeneratePrompt when some prompt has fewer than two terminal sequences.
std::vector<PreferencePair> build_preference_pairs(const StateSpace& space,
                                                   const Mat& reward,
                                                   const Mat& probs, int n,
                                                   std::uint64_t seed);

}  // namespace irlab
