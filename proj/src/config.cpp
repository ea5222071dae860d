#include "irlab/config.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "irlab/errors.hpp"

namespace irlab {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

struct Entry {
  std::string section;
  std::string key;
  std::string value;
  int line = 0;
  bool used = false;
};

class Ini {
 public:
  Ini(const std::string& text, std::string origin) : origin_(std::move(origin)) {
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    std::string section;
    while (std::getline(in, raw)) {
      ++line;
      const auto hash = raw.find('#');
      if (hash != std::string::npos) raw.erase(hash);
      const std::string s = trim(raw);
      if (s.empty()) continue;
      if (s.front() == '[') {
        if (s.back() != ']') fail(line, "unterminated section header");
        section = trim(s.substr(1, s.size() - 2));
        if (section.empty()) fail(line, "empty section name");
        continue;
      }
      const auto eq = s.find('=');
      if (eq == std::string::npos) fail(line, "expected `key = value`");
      if (section.empty()) fail(line, "key outside any [section]");
      Entry e;
      e.section = section;
      e.key = trim(s.substr(0, eq));
      e.value = trim(s.substr(eq + 1));
      e.line = line;
      if (e.key.empty()) fail(line, "empty key");
      entries_.push_back(std::move(e));
    }
  }

  [[noreturn]] void fail(int line, const std::string& msg) const {
    throw ConfigError(origin_ + ":" + std::to_string(line) + ": " + msg);
  }

  Entry* find(const std::string& section, const std::string& key) {
    Entry* hit = nullptr;
    for (auto& e : entries_) {
      if (e.section != section || e.key != key) continue;
      if (hit != nullptr) {
        fail(e.line, "duplicate key [" + section + "] " + key);
      }
      hit = &e;
    }
    if (hit != nullptr) hit->used = true;
    return hit;
  }

  std::vector<Entry*> find_all(const std::string& section,
                               const std::string& key) {
    std::vector<Entry*> out;
    for (auto& e : entries_) {
      if (e.section == section && e.key == key) {
        e.used = true;
        out.push_back(&e);
      }
    }
    return out;
  }

  const Entry& require(const std::string& section, const std::string& key) {
    const Entry* e = find(section, key);
    if (e == nullptr) {
      throw ConfigError(origin_ + ": missing required field [" + section +
                        "] " + key);
    }
    return *e;
  }

  void reject_unused() const {
    for (const auto& e : entries_) {
      if (!e.used) {
        fail(e.line, "unknown key [" + e.section + "] " + e.key);
      }
    }
  }

  const std::string& origin() const { return origin_; }

 private:
  std::string origin_;
  std::vector<Entry> entries_;
};

int parse_int(const Ini& ini, const Entry& e) {
  int v = 0;
  const auto* b = e.value.data();
  const auto* en = b + e.value.size();
  const auto [p, ec] = std::from_chars(b, en, v);
  if (ec != std::errc{} || p != en) {
    ini.fail(e.line, "expected integer for [" + e.section + "] " + e.key);
  }
  return v;
}

std::int64_t parse_i64(const Ini& ini, const Entry& e) {
  std::int64_t v = 0;
  const auto* b = e.value.data();
  const auto* en = b + e.value.size();
  const auto [p, ec] = std::from_chars(b, en, v);
  if (ec != std::errc{} || p != en) {
    ini.fail(e.line, "expected integer for [" + e.section + "] " + e.key);
  }
  return v;
}

std::uint64_t parse_u64(const Ini& ini, const Entry& e) {
  std::uint64_t v = 0;
  const auto* b = e.value.data();
  const auto* en = b + e.value.size();
  const auto [p, ec] = std::from_chars(b, en, v);
  if (ec != std::errc{} || p != en) {
    ini.fail(e.line,
             "expected unsigned integer for [" + e.section + "] " + e.key);
  }
  return v;
}

double parse_num(const Ini& ini, const Entry& e, const std::string& text) {
  try {
    std::size_t idx = 0;
    const double v = std::stod(text, &idx);
    if (idx != text.size()) throw std::invalid_argument("trailing chars");
    return v;
  } catch (const std::exception&) {
    ini.fail(e.line, "expected number for [" + e.section + "] " + e.key);
  }
}

double parse_double(const Ini& ini, const Entry& e) {
  return parse_num(ini, e, e.value);
}

bool parse_bool(const Ini& ini, const Entry& e) {
  if (e.value == "true" || e.value == "1") return true;
  if (e.value == "false" || e.value == "0") return false;
  ini.fail(e.line, "expected true/false for [" + e.section + "] " + e.key);
}

RewardSpec parse_reward(const Ini& ini, const Entry& e) {
  const auto toks = split_ws(e.value);
  RewardSpec out;
  if (toks.empty()) ini.fail(e.line, "empty reward spec");
  if (toks[0] == "zero") {
    if (toks.size() != 1) ini.fail(e.line, "reward zero takes no arguments");
    out.kind = RewardSpec::Kind::zero;
  } else if (toks[0] == "random") {
    if (toks.size() != 4) {
      ini.fail(e.line, "expected `reward = random LO HI SEED`");
    }
    out.kind = RewardSpec::Kind::random;
    out.lo = parse_num(ini, e, toks[1]);
    out.hi = parse_num(ini, e, toks[2]);
    out.seed = static_cast<std::uint64_t>(parse_num(ini, e, toks[3]));
  } else if (toks[0] == "table") {
    if (toks.size() != 2) ini.fail(e.line, "expected `reward = table PATH`");
    out.kind = RewardSpec::Kind::table;
    out.path = toks[1];
  } else {
    ini.fail(e.line, "reward spec must be zero | random LO HI SEED | "
                     "table PATH");
  }
  return out;
}

RefSpec parse_ref(const Ini& ini, const Entry& e) {
  const auto toks = split_ws(e.value);
  RefSpec out;
  if (toks.empty()) ini.fail(e.line, "empty ref spec");
  if (toks[0] == "uniform") {
    if (toks.size() != 1) ini.fail(e.line, "ref uniform takes no arguments");
    out.kind = RefSpec::Kind::uniform;
  } else if (toks[0] == "random") {
    if (toks.size() != 4) ini.fail(e.line, "expected `ref = random LO HI SEED`");
    out.kind = RefSpec::Kind::random;
    out.lo = parse_num(ini, e, toks[1]);
    out.hi = parse_num(ini, e, toks[2]);
    out.seed = static_cast<std::uint64_t>(parse_num(ini, e, toks[3]));
  } else {
    ini.fail(e.line, "ref spec must be uniform | random LO HI SEED");
  }
  return out;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text,
                              const std::string& origin) {
  Ini ini(text, origin);
  ExperimentConfig cfg;
  cfg.source_text = text;

  if (const Entry* e = ini.find("mdp", "file")) cfg.mdp_file = e->value;
  if (const Entry* e = ini.find("mdp", "vocab")) {
    cfg.mdp.vocab_size = parse_int(ini, *e);
  } else if (cfg.mdp_file.empty()) {
    throw ConfigError(origin + ": missing required field [mdp] vocab");
  }
  if (const Entry* e = ini.find("mdp", "horizon")) {
    cfg.mdp.horizon = parse_int(ini, *e);
  } else if (cfg.mdp_file.empty()) {
    throw ConfigError(origin + ": missing required field [mdp] horizon");
  }
  if (const Entry* e = ini.find("mdp", "gamma")) {
    cfg.mdp.gamma = parse_double(ini, *e);
  }
  if (const Entry* e = ini.find("mdp", "eos")) {
    cfg.mdp.eos_token = parse_int(ini, *e);
  }
  if (const Entry* e = ini.find("mdp", "cap")) cfg.cap = parse_i64(ini, *e);
  const auto prompts = ini.find_all("mdp", "prompt");
  if (!prompts.empty()) {
    cfg.mdp.prompts.clear();
    for (const Entry* e : prompts) {
      std::vector<int> prompt;
      for (const auto& tok : split_ws(e->value)) {
        Entry fake = *e;
        fake.value = tok;
        prompt.push_back(parse_int(ini, fake));
      }
      cfg.mdp.prompts.push_back(std::move(prompt));
    }
  }

  // With an [mdp] file indirection the reward spec may come from the
  // referenced file instead.
  if (const Entry* e = ini.find("expert", "reward")) {
    cfg.expert.reward = parse_reward(ini, *e);
  } else if (cfg.mdp_file.empty()) {
    throw ConfigError(origin + ": missing required field [expert] reward");
  }
  if (const Entry* e = ini.find("expert", "beta")) {
    cfg.expert.beta = parse_double(ini, *e);
  }
  if (const Entry* e = ini.find("expert", "v_form")) {
    if (e->value == "reference_weighted") {
      cfg.expert.v_form = VForm::reference_weighted;
    } else if (e->value == "entropy") {
      cfg.expert.v_form = VForm::entropy;
    } else {
      ini.fail(e->line, "v_form must be reference_weighted | entropy");
    }
  }
  if (const Entry* e = ini.find("expert", "ref")) {
    cfg.expert.ref = parse_ref(ini, *e);
  }

  if (const Entry* e = ini.find("data", "demos")) {
    cfg.data.demos = parse_int(ini, *e);
  }
  if (const Entry* e = ini.find("data", "pairs")) {
    cfg.data.pairs = parse_int(ini, *e);
  }
  if (const Entry* e = ini.find("data", "eval_pairs")) {
    cfg.data.eval_pairs = parse_int(ini, *e);
  }
  if (const Entry* e = ini.find("data", "seed")) {
    cfg.data.seed = parse_u64(ini, *e);
  }
  if (const Entry* e = ini.find("data", "exhaustive")) {
    cfg.data.exhaustive = parse_bool(ini, *e);
  }

  if (const Entry* e = ini.find("train", "objective")) {
    cfg.train.objective = objective_from_name(e->value);
  }
  if (const Entry* e = ini.find("train", "divergence")) {
    cfg.train.divergence = e->value;
  }
  if (const Entry* e = ini.find("train", "lr")) {
    cfg.train.learning_rate = parse_double(ini, *e);
  }
  if (const Entry* e = ini.find("train", "lr_schedule")) {
    if (e->value == "constant") {
      cfg.train.lr_schedule = LrSchedule::constant;
    } else if (e->value == "cosine") {
      cfg.train.lr_schedule = LrSchedule::cosine;
    } else {
      ini.fail(e->line, "lr_schedule must be constant | cosine");
    }
  }
  if (const Entry* e = ini.find("train", "beta")) {
    cfg.train.beta = parse_double(ini, *e);
  }
  if (const Entry* e = ini.find("train", "steps")) {
    cfg.train.steps = parse_int(ini, *e);
  }
  if (const Entry* e = ini.find("train", "batch_size")) {
    cfg.train.batch_size = parse_int(ini, *e);
  }
  if (const Entry* e = ini.find("train", "seed")) {
    cfg.train.seed = parse_u64(ini, *e);
  }
  if (const Entry* e = ini.find("train", "checkpoint_every")) {
    cfg.train.checkpoint_every = parse_int(ini, *e);
  }
  if (const Entry* e = ini.find("train", "segments")) {
    cfg.train.segments = parse_int(ini, *e);
  }
  if (const Entry* e = ini.find("train", "differentiate_v0")) {
    cfg.train.differentiate_v0 = parse_bool(ini, *e);
  }
  if (const Entry* e = ini.find("train", "policy")) {
    if (e->value == "tabular") {
      cfg.policy.kind = PolicySpec::Kind::tabular;
    } else if (e->value == "featurized") {
      cfg.policy.kind = PolicySpec::Kind::featurized;
    } else {
      ini.fail(e->line, "policy must be tabular | featurized");
    }
  }
  if (const Entry* e = ini.find("train", "hidden")) {
    cfg.policy.hidden = parse_int(ini, *e);
  }
  if (const Entry* e = ini.find("train", "tau")) {
    cfg.policy.tau = parse_double(ini, *e);
  }
  if (const Entry* e = ini.find("train", "init")) {
    const auto toks = split_ws(e->value);
    if (toks.size() == 1 && toks[0] == "zeros") {
      cfg.policy.init = PolicySpec::Init::zeros;
    } else if (toks.size() == 4 && toks[0] == "random") {
      cfg.policy.init = PolicySpec::Init::random;
      cfg.policy.lo = parse_num(ini, *e, toks[1]);
      cfg.policy.hi = parse_num(ini, *e, toks[2]);
      cfg.policy.seed = static_cast<std::uint64_t>(parse_num(ini, *e, toks[3]));
    } else {
      ini.fail(e->line, "init must be zeros | random LO HI SEED");
    }
  }

  if (const Entry* e = ini.find("lambda", "init")) {
    cfg.train.lambda.lambda_init = parse_double(ini, *e);
  }
  if (const Entry* e = ini.find("lambda", "target_acc")) {
    cfg.train.lambda.target_acc = parse_double(ini, *e);
  }
  if (const Entry* e = ini.find("lambda", "delta")) {
    cfg.train.lambda.delta = parse_double(ini, *e);
  }
  if (const Entry* e = ini.find("lambda", "window")) {
    cfg.train.lambda.window = parse_int(ini, *e);
  }
  if (const Entry* e = ini.find("lambda", "up")) {
    cfg.train.lambda.up_factor = parse_double(ini, *e);
  }
  if (const Entry* e = ini.find("lambda", "down")) {
    cfg.train.lambda.down_factor = parse_double(ini, *e);
  }

  if (const Entry* e = ini.find("probe", "states")) {
    cfg.probe.states = parse_int(ini, *e);
  }
  if (const Entry* e = ini.find("probe", "seed")) {
    cfg.probe.seed = parse_u64(ini, *e);
  }

  if (const Entry* e = ini.find("out", "dir")) cfg.out_dir = e->value;

  if (const Entry* e = ini.find("sweep", "param")) cfg.sweep.param = e->value;
  if (const Entry* e = ini.find("sweep", "values")) {
    for (const auto& tok : split_ws(e->value)) {
      cfg.sweep.values.push_back(parse_num(ini, *e, tok));
    }
  }

  ini.reject_unused();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  ExperimentConfig cfg = parse_config(buf.str(), path);

  const auto base = std::filesystem::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path fp(p);
    return fp.is_absolute() ? fp.string() : (base / fp).string();
  };

  if (!cfg.mdp_file.empty()) {
    const std::string mdp_path = resolve(cfg.mdp_file);
    if (!std::filesystem::exists(mdp_path)) {
      throw ConfigError(path + ": [mdp] file does not exist: " + mdp_path);
    }
    const ExperimentConfig inner = load_config(mdp_path);
    cfg.mdp = inner.mdp;
    cfg.cap = inner.cap;
    if (cfg.expert.reward.kind == RewardSpec::Kind::unset) {
      cfg.expert.reward = inner.expert.reward;
    }
  }
  if (cfg.expert.reward.kind == RewardSpec::Kind::unset) {
    throw ConfigError(path + ": missing required field [expert] reward");
  }
  if (cfg.expert.reward.kind == RewardSpec::Kind::table) {
    cfg.expert.reward.path = resolve(cfg.expert.reward.path);
    if (!std::filesystem::exists(cfg.expert.reward.path)) {
      throw ConfigError(path + ": reward table does not exist: " +
                        cfg.expert.reward.path);
    }
  }
  return cfg;
}

}  // namespace irlab
