#include "irlab/mdp.hpp"

#include <array>
#include <limits>
#include <string>

#include "irlab/rng.hpp"

namespace irlab {

std::int64_t geometric_state_count(const TokenMdp& mdp) {
  const std::int64_t cap = std::numeric_limits<std::int64_t>::max() / 2;
  std::int64_t per_prompt = 0;
  std::int64_t level = 1;
  for (int d = 0; d <= mdp.horizon; ++d) {
    per_prompt += level;
    if (per_prompt > cap) return cap;
    if (level > cap / std::max(mdp.vocab_size, 1)) return cap;
    level *= mdp.vocab_size;
  }
  const std::int64_t prompts = static_cast<std::int64_t>(mdp.prompts.size());
  if (per_prompt > cap / std::max<std::int64_t>(prompts, 1)) return cap;
  return per_prompt * prompts;
}

StateSpace::StateSpace(const TokenMdp& mdp, std::int64_t cap) : mdp_(mdp) {
  if (mdp_.vocab_size < 1) throw Error("vocab_size must be >= 1");
  if (mdp_.horizon < 1) throw Error("horizon must be >= 1");
  if (mdp_.prompts.empty()) throw Error("at least one prompt is required");
  if (!(mdp_.gamma > 0.0 && mdp_.gamma <= 1.0)) throw Error("gamma must be in (0, 1]");
  if (mdp_.eos_token && (*mdp_.eos_token < 0 || *mdp_.eos_token >= mdp_.vocab_size))
    throw Error("eos_token outside the action set");

  const std::int64_t bound = geometric_state_count(mdp_);
  if (bound > cap)
    throw CapExceeded("state count bound " + std::to_string(bound) + " exceeds cap " +
                      std::to_string(cap));

  const int vocab = mdp_.vocab_size;
  auto is_terminal_state = [&](const State& s) {
    if (s.depth() >= mdp_.horizon) return true;
    return mdp_.eos_token && !s.response.empty() && s.response.back() == *mdp_.eos_token;
  };

  // Breadth-first: roots in prompt order, then each frontier state's
  // children in action order. Index order is the enumeration order.
  roots_.resize(mdp_.prompts.size());
  for (int p = 0; p < num_prompts(); ++p) {
    roots_[p] = static_cast<int>(states_.size());
    states_.push_back(State{p, {}});
    parent_.push_back(-1);
    depth_.push_back(0);
  }

  std::vector<std::array<int, 2>> pending;  // (parent id, action) in discovery order
  std::size_t frontier_begin = 0;
  while (frontier_begin < states_.size()) {
    const std::size_t frontier_end = states_.size();
    for (std::size_t id = frontier_begin; id < frontier_end; ++id) {
      if (is_terminal_state(states_[id])) continue;
      for (int a = 0; a < vocab; ++a) {
        State child = states_[id];
        child.response.push_back(a);
        const int child_id = static_cast<int>(states_.size());
        states_.push_back(std::move(child));
        parent_.push_back(static_cast<int>(id));
        depth_.push_back(depth_[id] + 1);
        pending.push_back({static_cast<int>(id), a});
        (void)child_id;
      }
    }
    frontier_begin = frontier_end;
  }

  children_ = Eigen::ArrayXXi::Constant(static_cast<int>(states_.size()), vocab, -1);
  int next = num_prompts();
  for (const auto& [pid, action] : pending) {
    children_(pid, action) = next++;
  }
}

int StateSpace::index_of(int prompt_id, std::span<const int> response) const {
  if (prompt_id < 0 || prompt_id >= num_prompts()) return -1;
  int id = roots_[prompt_id];
  for (int tok : response) {
    if (tok < 0 || tok >= vocab()) return -1;
    id = children_(id, tok);
    if (id < 0) return -1;
  }
  return id;
}

std::vector<Step> StateSpace::trajectory(int prompt_id, std::span<const int> response) const {
  std::vector<Step> steps;
  steps.reserve(response.size());
  if (prompt_id < 0 || prompt_id >= num_prompts())
    throw Error("trajectory: prompt_id out of range");
  int id = roots_[prompt_id];
  for (int tok : response) {
    if (tok < 0 || tok >= vocab()) throw Error("trajectory: token outside the action set");
    const int nxt = children_(id, tok);
    if (nxt < 0) throw Error("trajectory: walks past a terminal state");
    steps.push_back(Step{id, tok});
    id = nxt;
  }
  return steps;
}

std::vector<int> StateSpace::nonterminal_ids() const {
  std::vector<int> out;
  for (int id = 0; id < size(); ++id)
    if (!terminal(id)) out.push_back(id);
  return out;
}

std::vector<int> StateSpace::terminal_ids() const {
  std::vector<int> out;
  for (int id = 0; id < size(); ++id)
    if (terminal(id)) out.push_back(id);
  return out;
}

std::vector<int> StateSpace::terminal_ids(int prompt_id) const {
  std::vector<int> out;
  for (int id = 0; id < size(); ++id)
    if (terminal(id) && prompt_of(id) == prompt_id) out.push_back(id);
  return out;
}

Mat zero_rewards(const StateSpace& space) {
  return Mat::Zero(space.size(), space.vocab());
}

Mat random_rewards(const StateSpace& space, double lo, double hi, std::uint64_t seed) {
  Rng rng(seed);
  Mat r = Mat::Zero(space.size(), space.vocab());
  for (int id = 0; id < space.size(); ++id) {
    if (space.terminal(id)) continue;
    for (int a = 0; a < space.vocab(); ++a) r(id, a) = rng.uniform(lo, hi);
  }
  return r;
}

double sequence_return(const StateSpace& space, const Mat& reward, int prompt_id,
                       std::span<const int> response) {
  double ret = 0.0;
  double disc = 1.0;
  for (const Step& st : space.trajectory(prompt_id, response)) {
    ret += disc * reward(st.state, st.action);
    disc *= space.gamma();
  }
  return ret;
}

}  // namespace irlab
