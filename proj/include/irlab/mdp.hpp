#pragma once

/// Token-tree decision processes.
///
/// States are (prompt, response-prefix) pairs; actions are next tokens and
/// transitions deterministically append: next(s, a) = s + [a]. The state
/// graph is therefore a finite forest, one tree per prompt. A state is
/// terminal when its response reaches the horizon or its last token is the
/// EOS token. StateSpace enumerates the forest breadth-first in prefix order
/// and gives every state a dense index, which the rest of the library uses
/// for rewards (state x action matrices), values and policies.

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "irlab/errors.hpp"
#include "irlab/numerics.hpp"

namespace irlab {

struct State {
  int prompt_id = 0;
  std::vector<int> response;

  int depth() const { return static_cast<int>(response.size()); }
  friend bool operator==(const State&, const State&) = default;
};

struct TokenMdp {
  int vocab_size = 2;
  int horizon = 1;
  std::vector<std::vector<int>> prompts = {{}};
  std::optional<int> eos_token;
  double gamma = 1.0;
};

/// One (state, action) step along a trajectory.
struct Step {
  int state = -1;
  int action = -1;
};

/// Dense enumeration of an MDP's state forest.
class StateSpace {
 public:
  static constexpr std::int64_t kDefaultCap = 200000;

  StateSpace() = default;

  /// Enumerates all states breadth-first (roots in prompt order, children in
  /// action order). Throws CapExceeded when the geometric state-count bound
  /// sum_d vocab^d * #prompts exceeds `cap`.
  explicit StateSpace(const TokenMdp& mdp, std::int64_t cap = kDefaultCap);

  const TokenMdp& mdp() const { return mdp_; }
  int vocab() const { return mdp_.vocab_size; }
  double gamma() const { return mdp_.gamma; }
  int num_prompts() const { return static_cast<int>(mdp_.prompts.size()); }

  int size() const { return static_cast<int>(states_.size()); }
  const State& state(int id) const { return states_[id]; }
  const std::vector<State>& states() const { return states_; }

  int root(int prompt_id) const { return roots_[prompt_id]; }
  int depth(int id) const { return depth_[id]; }
  bool terminal(int id) const { return children_(id, 0) < 0; }

  /// Child state index, or -1 when `id` is terminal.
  int child(int id, int action) const { return children_(id, action); }
  int parent(int id) const { return parent_[id]; }
  int prompt_of(int id) const { return states_[id].prompt_id; }

  /// Index of a state reached by walking `response` from the prompt root;
  /// -1 if the walk leaves the tree (e.g. steps past a terminal state).
  int index_of(int prompt_id, std::span<const int> response) const;
  int index_of(const State& s) const { return index_of(s.prompt_id, s.response); }

  /// (state, action) steps visited when emitting `response` from the root.
  /// Requires the full walk to stay inside the tree.
  std::vector<Step> trajectory(int prompt_id, std::span<const int> response) const;

  std::vector<int> nonterminal_ids() const;
  std::vector<int> terminal_ids() const;

  /// All terminal states of one prompt's tree, in enumeration order.
  std::vector<int> terminal_ids(int prompt_id) const;

 private:
  TokenMdp mdp_;
  std::vector<State> states_;
  Eigen::ArrayXXi children_;  // size x vocab; -1 on terminal rows
  std::vector<int> parent_;
  std::vector<int> depth_;
  std::vector<int> roots_;
};

/// Geometric bound on the state count (ignores EOS pruning); saturates
/// instead of overflowing.
std::int64_t geometric_state_count(const TokenMdp& mdp);

/// Reward tables are dense (state x action) matrices; terminal rows are zero.
Mat zero_rewards(const StateSpace& space);
Mat random_rewards(const StateSpace& space, double lo, double hi, std::uint64_t seed);

/// Discounted return sum_t gamma^t r(s_t, a_t) along a response.
double sequence_return(const StateSpace& space, const Mat& reward, int prompt_id,
                       std::span<const int> response);

}  // namespace irlab
