#include "irlab/sampling.hpp"

#include "irlab/errors.hpp"
#include "irlab/occupancy.hpp"

namespace irlab {

std::vector<int> sample_response(const StateSpace& space, const Mat& probs,
                                 int prompt_id, Rng& rng) {
  std::vector<int> response;
  int id = space.root(prompt_id);
  while (!space.terminal(id)) {
    const int a = rng.categorical(probs.row(id).transpose());
    response.push_back(a);
    id = space.child(id, a);
  }
  return response;
}

std::vector<Demonstration> sample_demonstrations(const StateSpace& space,
                                                 const Mat& reward,
                                                 const Mat& probs, int n,
                                                 std::uint64_t seed) {
  if (n < 1) throw Error("sample_demonstrations: n must be >= 1");
  Rng rng(seed);
  std::vector<Demonstration> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Demonstration d;
    d.prompt_id = rng.uniform_int(space.num_prompts());
    d.response = sample_response(space, probs, d.prompt_id, rng);
    d.ret = sequence_return(space, reward, d.prompt_id, d.response);
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<Demonstration> exhaustive_demonstrations(const StateSpace& space,
                                                     const Mat& reward,
                                                     const Mat& probs) {
  const Vec reach = path_probs(space, probs);
  std::vector<Demonstration> out;
  for (int id : space.terminal_ids()) {
    const State& st = space.state(id);
    Demonstration d;
    d.prompt_id = st.prompt_id;
    d.response = st.response;
    d.ret = sequence_return(space, reward, d.prompt_id, d.response);
    d.weight = reach[id];
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<PreferencePair> build_preference_pairs(const StateSpace& space,
                                                   const Mat& reward,
                                                   const Mat& probs, int n,
                                                   std::uint64_t seed) {
  if (n < 1) throw Error("build_preference_pairs: n must be >= 1");
  for (int p = 0; p < space.num_prompts(); ++p) {
    if (space.terminal_ids(p).size() < 2) {
      throw DegeneratePrompt("build_preference_pairs: prompt " +
                             std::to_string(p) +
                             " admits fewer than two terminal responses");
    }
  }
  Rng rng(seed);
  std::vector<PreferencePair> out;
  constexpr int kRedrawLimit = 100;
  for (int i = 0; i < n; ++i) {
    const int prompt = rng.uniform_int(space.num_prompts());
    const auto first = sample_response(space, probs, prompt, rng);
    std::vector<int> second;
    bool distinct = false;
    for (int tries = 0; tries < kRedrawLimit; ++tries) {
      second = sample_response(space, probs, prompt, rng);
      if (second != first) {
        distinct = true;
        break;
      }
    }
    if (!distinct) continue;  // sampler is (near-)deterministic here
    const double r1 = sequence_return(space, reward, prompt, first);
    const double r2 = sequence_return(space, reward, prompt, second);
    if (r1 == r2) continue;  // ties are dropped, not randomized
    PreferencePair pair;
    pair.prompt_id = prompt;
    pair.chosen = r1 > r2 ? first : second;
    pair.rejected = r1 > r2 ? second : first;
    pair.margin = std::abs(r1 - r2);
    out.push_back(std::move(pair));
  }
  return out;
}

}  // namespace irlab
