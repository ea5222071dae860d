#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "irlab/config.hpp"
#include "irlab/errors.hpp"
#include "irlab/io.hpp"
#include "irlab/mdp.hpp"
#include "irlab/train.hpp"

#include "test_util.hpp"

using namespace irlab;
using namespace irlab::test;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("irlab_cfg_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const std::string kMinimal =
    "[mdp]\n"
    "vocab = 2\n"
    "horizon = 2\n"
    "[expert]\n"
    "reward = zero\n";

}  // namespace

TEST_CASE("a minimal config parses with documented defaults") {
  const auto cfg = parse_config(kMinimal, "<inline>");
  CHECK(cfg.mdp.vocab_size == 2);
  CHECK(cfg.mdp.horizon == 2);
  CHECK(cfg.mdp.gamma == 1.0);
  CHECK(cfg.mdp.prompts == std::vector<std::vector<int>>{{}});
  CHECK_FALSE(cfg.mdp.eos_token.has_value());
  CHECK(cfg.cap == StateSpace::kDefaultCap);

  CHECK(cfg.expert.reward.kind == RewardSpec::Kind::zero);
  CHECK(cfg.expert.beta == 1.0);
  CHECK(cfg.expert.v_form == VForm::reference_weighted);
  CHECK(cfg.expert.ref.kind == RefSpec::Kind::uniform);

  CHECK(cfg.data.demos == 100);
  CHECK(cfg.data.pairs == 0);
  CHECK(cfg.data.eval_pairs == 0);
  CHECK_FALSE(cfg.data.exhaustive);

  CHECK(cfg.train.objective == Objective::f_sft);
  CHECK(cfg.train.divergence == "total_variation");
  CHECK(cfg.train.learning_rate == 0.1);
  CHECK(cfg.train.beta == 0.01);
  CHECK(cfg.train.steps == 100);
  CHECK(cfg.train.batch_size == 0);
  CHECK(cfg.train.checkpoint_every == 10);
  CHECK(cfg.train.segments == 4);
  CHECK(cfg.train.differentiate_v0);

  CHECK(cfg.policy.kind == PolicySpec::Kind::tabular);
  CHECK(cfg.policy.init == PolicySpec::Init::zeros);
  CHECK(cfg.policy.hidden == 32);
  CHECK(cfg.policy.tau == 1.0);

  CHECK(cfg.probe.states == 20);
  CHECK(cfg.out_dir == "out");
  CHECK(cfg.sweep.param.empty());
  CHECK(cfg.source_text == kMinimal);
}

TEST_CASE("a fully specified config lands in every field") {
  const std::string text =
      "[mdp]\n"
      "vocab = 3\n"
      "horizon = 4\n"
      "gamma = 0.9\n"
      "eos = 2\n"
      "cap = 50000\n"
      "prompt =\n"
      "prompt = 0 1\n"
      "[expert]\n"
      "reward = random -2 2 11\n"
      "beta = 0.5\n"
      "v_form = entropy\n"
      "ref = random -0.3 0.3 4\n"
      "[data]\n"
      "demos = 12\n"
      "pairs = 8\n"
      "eval_pairs = 6\n"
      "seed = 3\n"
      "exhaustive = true\n"
      "[train]\n"
      "objective = multi_objective\n"
      "divergence = kl\n"
      "lr = 0.25\n"
      "lr_schedule = cosine\n"
      "beta = 0.7\n"
      "steps = 40\n"
      "batch_size = 16\n"
      "seed = 9\n"
      "checkpoint_every = 5\n"
      "segments = 2\n"
      "differentiate_v0 = false\n"
      "policy = featurized\n"
      "hidden = 8\n"
      "tau = 2.0\n"
      "init = random -1 1 6\n"
      "[lambda]\n"
      "init = 0.2\n"
      "target_acc = 0.8\n"
      "delta = 0.02\n"
      "window = 5\n"
      "up = 3\n"
      "down = 0.25\n"
      "[probe]\n"
      "states = 7\n"
      "seed = 13\n"
      "[sweep]\n"
      "param = lr\n"
      "values = 0.1 0.2 0.4\n"
      "[out]\n"
      "dir = runs/full\n";
  const auto cfg = parse_config(text, "<inline>");
  CHECK(cfg.mdp.vocab_size == 3);
  CHECK(cfg.mdp.horizon == 4);
  CHECK(cfg.mdp.gamma == 0.9);
  CHECK(cfg.mdp.eos_token == 2);
  CHECK(cfg.cap == 50000);
  CHECK(cfg.mdp.prompts ==
        std::vector<std::vector<int>>{{}, {0, 1}});
  CHECK(cfg.expert.reward.kind == RewardSpec::Kind::random);
  CHECK(cfg.expert.reward.lo == -2.0);
  CHECK(cfg.expert.reward.hi == 2.0);
  CHECK(cfg.expert.reward.seed == 11);
  CHECK(cfg.expert.beta == 0.5);
  CHECK(cfg.expert.v_form == VForm::entropy);
  CHECK(cfg.expert.ref.kind == RefSpec::Kind::random);
  CHECK(cfg.expert.ref.seed == 4);
  CHECK(cfg.data.demos == 12);
  CHECK(cfg.data.exhaustive);
  CHECK(cfg.train.objective == Objective::multi_objective);
  CHECK(cfg.train.divergence == "kl");
  CHECK(cfg.train.learning_rate == 0.25);
  CHECK(cfg.train.lr_schedule == LrSchedule::cosine);
  CHECK(cfg.train.beta == 0.7);
  CHECK(cfg.train.steps == 40);
  CHECK(cfg.train.batch_size == 16);
  CHECK(cfg.train.seed == 9);
  CHECK(cfg.train.checkpoint_every == 5);
  CHECK(cfg.train.segments == 2);
  CHECK_FALSE(cfg.train.differentiate_v0);
  CHECK(cfg.policy.kind == PolicySpec::Kind::featurized);
  CHECK(cfg.policy.hidden == 8);
  CHECK(cfg.policy.tau == 2.0);
  CHECK(cfg.policy.init == PolicySpec::Init::random);
  CHECK(cfg.policy.lo == -1.0);
  CHECK(cfg.policy.hi == 1.0);
  CHECK(cfg.policy.seed == 6);
  CHECK(cfg.train.lambda.lambda_init == 0.2);
  CHECK(cfg.train.lambda.target_acc == 0.8);
  CHECK(cfg.train.lambda.delta == 0.02);
  CHECK(cfg.train.lambda.window == 5);
  CHECK(cfg.train.lambda.up_factor == 3.0);
  CHECK(cfg.train.lambda.down_factor == 0.25);
  CHECK(cfg.probe.states == 7);
  CHECK(cfg.probe.seed == 13);
  CHECK(cfg.sweep.param == "lr");
  CHECK(cfg.sweep.values == std::vector<double>{0.1, 0.2, 0.4});
  CHECK(cfg.out_dir == "runs/full");
}

TEST_CASE("parse errors carry the origin, line, and offending key") {
  auto fails_with = [](const std::string& text, const std::string& needle) {
    return throws_with<ConfigError>(
        [&] { parse_config(text, "<inline>"); }, needle);
  };
  CHECK(fails_with(kMinimal + "bogus = 3\n", "unknown key [expert] bogus"));
  CHECK(fails_with(kMinimal + "bogus = 3\n", "<inline>:6:"));
  CHECK(fails_with("[mdp]\nvocab = 2\nvocab = 3\nhorizon = 1\n",
                   "duplicate key [mdp] vocab"));
  CHECK(fails_with("[mdp]\nhorizon = 1\n[expert]\nreward = zero\n",
                   "missing required field [mdp] vocab"));
  CHECK(fails_with("[mdp]\nvocab = 2\n[expert]\nreward = zero\n",
                   "missing required field [mdp] horizon"));
  CHECK(fails_with("[mdp]\nvocab = 2\nhorizon = 1\n",
                   "missing required field [expert] reward"));
  CHECK(fails_with("[mdp]\nvocab = abc\nhorizon = 1\n[expert]\nreward = zero\n",
                   "expected integer for [mdp] vocab"));
  CHECK(fails_with(kMinimal + "[train]\nlr = fast\n",
                   "expected number for [train] lr"));
  CHECK(fails_with(kMinimal + "[data]\nexhaustive = maybe\n",
                   "expected true/false for [data] exhaustive"));
  CHECK(fails_with(kMinimal + "v_form = magic\n", "v_form must be"));
  CHECK(fails_with("[mdp\nvocab = 2\n", "unterminated section header"));
  CHECK(fails_with("vocab = 2\n", "key outside any [section]"));
  CHECK(fails_with(kMinimal + "[train]\nobjective = sgd\n",
                   "unknown objective: sgd"));
  CHECK(fails_with(
      "[mdp]\nvocab = 2\nhorizon = 1\n[expert]\nreward = gaussian\n",
      "reward spec must be"));
  CHECK(fails_with(
      "[mdp]\nvocab = 2\nhorizon = 1\n[expert]\nreward = random 0 1\n",
      "expected `reward = random LO HI SEED`"));
}

TEST_CASE("comments and blank lines are ignored") {
  const std::string text =
      "# leading comment\n"
      "\n"
      "[mdp]  # trailing comment\n"
      "vocab = 2  # two tokens\n"
      "horizon = 1\n"
      "\n"
      "[expert]\n"
      "reward = zero\n";
  const auto cfg = parse_config(text, "<inline>");
  CHECK(cfg.mdp.vocab_size == 2);
}

TEST_CASE("mdp file indirection inherits and overrides") {
  const fs::path dir = fresh_dir("indirect");
  fs::create_directories(dir / "shared");
  const std::string inner =
      "[mdp]\n"
      "vocab = 3\n"
      "horizon = 2\n"
      "gamma = 0.8\n"
      "cap = 77777\n"
      "prompt = 1\n"
      "[expert]\n"
      "reward = random -1 1 42\n";
  write_text_file((dir / "shared" / "base.ini").string(), inner);

  SUBCASE("the mdp block and unset reward come from the referenced file") {
    const std::string outer =
        "[mdp]\n"
        "file = shared/base.ini\n"
        "[train]\n"
        "steps = 5\n";
    write_text_file((dir / "outer.ini").string(), outer);
    const auto cfg = load_config((dir / "outer.ini").string());
    CHECK(cfg.mdp.vocab_size == 3);
    CHECK(cfg.mdp.horizon == 2);
    CHECK(cfg.mdp.gamma == 0.8);
    CHECK(cfg.cap == 77777);
    CHECK(cfg.mdp.prompts == std::vector<std::vector<int>>{{1}});
    CHECK(cfg.expert.reward.kind == RewardSpec::Kind::random);
    CHECK(cfg.expert.reward.seed == 42);
    CHECK(cfg.train.steps == 5);
  }
  SUBCASE("an explicit reward wins over the inherited one") {
    const std::string outer =
        "[mdp]\n"
        "file = shared/base.ini\n"
        "[expert]\n"
        "reward = zero\n";
    write_text_file((dir / "outer2.ini").string(), outer);
    const auto cfg = load_config((dir / "outer2.ini").string());
    CHECK(cfg.expert.reward.kind == RewardSpec::Kind::zero);
  }
  SUBCASE("a dangling reference is a config error") {
    write_text_file((dir / "outer3.ini").string(),
                    "[mdp]\nfile = nowhere.ini\n");
    CHECK(throws_with<ConfigError>(
        [&] { load_config((dir / "outer3.ini").string()); },
        "does not exist"));
  }
  SUBCASE("a missing config file is an io error") {
    CHECK_THROWS_AS(load_config((dir / "absent.ini").string()), IoError);
  }
}

TEST_CASE("table rewards resolve relative to the config file") {
  const fs::path dir = fresh_dir("table");
  StateSpace space(make_mdp(2, 1));
  write_reward_table((dir / "r.tsv").string(), space,
                     random_rewards(space, -1.0, 1.0, 5));
  const std::string good =
      "[mdp]\nvocab = 2\nhorizon = 1\n[expert]\nreward = table r.tsv\n";
  write_text_file((dir / "good.ini").string(), good);
  const auto cfg = load_config((dir / "good.ini").string());
  CHECK(cfg.expert.reward.kind == RewardSpec::Kind::table);
  CHECK(fs::path(cfg.expert.reward.path).is_absolute());
  CHECK(fs::exists(cfg.expert.reward.path));

  const std::string bad =
      "[mdp]\nvocab = 2\nhorizon = 1\n[expert]\nreward = table missing.tsv\n";
  write_text_file((dir / "bad.ini").string(), bad);
  CHECK(throws_with<ConfigError>(
      [&] { load_config((dir / "bad.ini").string()); },
      "reward table does not exist"));
}

TEST_CASE("demonstrations and pairs round trip through tsv") {
  const fs::path dir = fresh_dir("io_records");
  const std::vector<Demonstration> demos = {
      {0, {0, 1, 2}, 1.25, 1.0},
      {1, {2}, -0.5, 0.125},
      {0, {1, 1}, 0.0, 2.5},
  };
  write_demonstrations((dir / "demos.tsv").string(), demos);
  const auto back = read_demonstrations((dir / "demos.tsv").string());
  REQUIRE(back.size() == demos.size());
  for (std::size_t i = 0; i < demos.size(); ++i) {
    CHECK(back[i].prompt_id == demos[i].prompt_id);
    CHECK(back[i].response == demos[i].response);
    CHECK(back[i].ret == demos[i].ret);
    CHECK(back[i].weight == demos[i].weight);
  }

  const std::vector<PreferencePair> pairs = {
      {0, {0, 1}, {1, 0}, 0.75},
      {1, {2, 2}, {0, 2}, 1.0 / 3.0},
  };
  write_pairs((dir / "pairs.tsv").string(), pairs);
  const auto pback = read_pairs((dir / "pairs.tsv").string());
  REQUIRE(pback.size() == pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(pback[i].prompt_id == pairs[i].prompt_id);
    CHECK(pback[i].chosen == pairs[i].chosen);
    CHECK(pback[i].rejected == pairs[i].rejected);
    CHECK(pback[i].margin == pairs[i].margin);
  }
}

TEST_CASE("metrics round trip preserves NaN columns and v0 vectors") {
  const fs::path dir = fresh_dir("io_metrics");
  MetricsRow a;
  a.step = 0;
  a.loss = 1.0 / 3.0;
  a.kl = 0.25;
  a.v0 = Vec(2);
  a.v0 << -0.125, 1e-17;
  MetricsRow b;
  b.step = 7;
  b.loss = 5e-324;  // denormal survives the %.17g round trip
  b.kl = 2.0;
  b.d_f = 0.5;
  b.v0 = Vec(2);
  b.v0 << 3.0, -7.5;
  b.lambda = 0.05;
  b.dpo_eval = 0.69;
  b.acc = 0.875;
  const std::vector<MetricsRow> rows = {a, b};
  write_metrics((dir / "metrics.tsv").string(), rows);
  const auto back = read_metrics((dir / "metrics.tsv").string());
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].step == rows[i].step);
    CHECK(close_or_both_nan(back[i].loss, rows[i].loss, 0.0));
    CHECK(close_or_both_nan(back[i].kl, rows[i].kl, 0.0));
    CHECK(close_or_both_nan(back[i].d_f, rows[i].d_f, 0.0));
    CHECK(close_or_both_nan(back[i].lambda, rows[i].lambda, 0.0));
    CHECK(close_or_both_nan(back[i].dpo_eval, rows[i].dpo_eval, 0.0));
    CHECK(close_or_both_nan(back[i].acc, rows[i].acc, 0.0));
    REQUIRE(back[i].v0.size() == rows[i].v0.size());
    for (Eigen::Index j = 0; j < rows[i].v0.size(); ++j) {
      CHECK(back[i].v0[j] == rows[i].v0[j]);
    }
  }
  CHECK(std::isnan(back[0].d_f));
  CHECK(std::isnan(back[0].lambda));
}

TEST_CASE("reward tables and checkpoints round trip exactly") {
  const fs::path dir = fresh_dir("io_tables");
  StateSpace space(make_mdp(3, 2, 1.0, {{}, {0}}));
  const Mat reward = random_rewards(space, -2.0, 2.0, 9);
  write_reward_table((dir / "reward.tsv").string(), space, reward);
  const Mat back = read_reward_table((dir / "reward.tsv").string(), space);
  CHECK((back - reward).cwiseAbs().maxCoeff() == 0.0);

  PolicyModel policy = PolicyModel::tabular_random(space, -1.0, 1.0, 10);
  Checkpoint ck;
  ck.step = 40;
  ck.policy = policy;
  write_checkpoint((dir / "ck.tsv").string(), ck);
  const auto params = read_checkpoint_params((dir / "ck.tsv").string());
  CHECK(params.step == 40);
  REQUIRE(params.params.size() == policy.params().size());
  CHECK((params.params - policy.params()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("g17 formatting round trips doubles bit for bit") {
  const std::vector<double> values = {
      1.0 / 3.0, 0.1,    1e-300, 1e300,          5e-324,
      0.0,       1.0,    -7.25,  2.718281828459045,
      kInf,      -kInf};
  for (double v : values) {
    CAPTURE(v);
    CHECK(parse_g(format_g17(v)) == v);
  }
  // Negative zero keeps its sign.
  const double nz = parse_g(format_g17(-0.0));
  CHECK(nz == 0.0);
  CHECK(std::signbit(nz));
  CHECK(std::isnan(parse_g(format_g17(kNaN))));
  // Malformed fields name themselves in the error.
  CHECK(throws_with<IoError>([] { parse_g("1.5x"); }, "malformed float"));
  CHECK_THROWS_AS(parse_g(""), IoError);
  CHECK_THROWS_AS(parse_g("nope"), IoError);
}

TEST_CASE("fnv1a64 matches the reference vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
  CHECK(hex64(0x1) == "0000000000000001");
  CHECK(hex64(0xcbf29ce484222325ull) == "cbf29ce484222325");
}

TEST_CASE("text files round trip and report read failures") {
  const fs::path dir = fresh_dir("io_text");
  const std::string content = "line one\nline two\n\ttabbed\n";
  write_text_file((dir / "t.txt").string(), content);
  CHECK(read_text_file((dir / "t.txt").string()) == content);
  CHECK_THROWS_AS(read_text_file((dir / "absent.txt").string()), IoError);
}
