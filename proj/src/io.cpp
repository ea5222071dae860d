#include "irlab/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "irlab/errors.hpp"

namespace irlab {

std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_g(const std::string& s) {
  const char* b = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(b, &end);
  if (end == b || *end != '\0') {
    throw IoError("malformed float field: '" + s + "'");
  }
  return v;
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 14695981039346656037ull;
  for (const char c : data) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << content;
  if (!out) throw IoError("write failed: " + path);
}

void ensure_dir(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) throw IoError("cannot create directory " + path + ": " +
                        ec.message());
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t begin = 0;
  while (true) {
    const auto pos = s.find(sep, begin);
    if (pos == std::string::npos) {
      out.push_back(s.substr(begin));
      return out;
    }
    out.push_back(s.substr(begin, pos - begin));
    begin = pos + 1;
  }
}

std::string join_tokens(const std::vector<int>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out += ' ';
    out += std::to_string(tokens[i]);
  }
  return out;
}

std::vector<int> parse_tokens(const std::string& field,
                              const std::string& path) {
  std::vector<int> out;
  std::istringstream in(field);
  std::string tok;
  while (in >> tok) {
    try {
      std::size_t idx = 0;
      out.push_back(std::stoi(tok, &idx));
      if (idx != tok.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw IoError(path + ": malformed token '" + tok + "'");
    }
  }
  return out;
}

int parse_int_field(const std::string& field, const std::string& path) {
  try {
    std::size_t idx = 0;
    const int v = std::stoi(field, &idx);
    if (idx != field.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw IoError(path + ": malformed integer field '" + field + "'");
  }
}

class LineWriter {
 public:
  explicit LineWriter(const std::string& path)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot open for writing: " + path);
  }
  void line(const std::string& s) { out_ << s << '\n'; }
  void close() {
    out_.flush();
    if (!out_) throw IoError("write failed: " + path_);
  }

 private:
  std::string path_;
  std::ofstream out_;
};

std::vector<std::string> data_lines(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    out.push_back(line);
  }
  return out;
}

std::vector<std::string> fields_of(const std::string& line,
                                   std::size_t expect,
                                   const std::string& path) {
  auto fields = split(line, '\t');
  if (fields.size() != expect) {
    throw IoError(path + ": expected " + std::to_string(expect) +
                  " fields, got " + std::to_string(fields.size()));
  }
  return fields;
}

}  // namespace

void write_demonstrations(const std::string& path,
                          const std::vector<Demonstration>& demos) {
  LineWriter w(path);
  w.line("# prompt_id\tresponse\treturn\tweight");
  for (const auto& d : demos) {
    w.line(std::to_string(d.prompt_id) + '\t' + join_tokens(d.response) +
           '\t' + format_g17(d.ret) + '\t' + format_g17(d.weight));
  }
  w.close();
}

std::vector<Demonstration> read_demonstrations(const std::string& path) {
  std::vector<Demonstration> out;
  for (const auto& line : data_lines(path)) {
    const auto f = fields_of(line, 4, path);
    Demonstration d;
    d.prompt_id = parse_int_field(f[0], path);
    d.response = parse_tokens(f[1], path);
    d.ret = parse_g(f[2]);
    d.weight = parse_g(f[3]);
    out.push_back(std::move(d));
  }
  return out;
}

void write_pairs(const std::string& path,
                 const std::vector<PreferencePair>& pairs) {
  LineWriter w(path);
  w.line("# prompt_id\tchosen\trejected\tmargin");
  for (const auto& p : pairs) {
    w.line(std::to_string(p.prompt_id) + '\t' + join_tokens(p.chosen) + '\t' +
           join_tokens(p.rejected) + '\t' + format_g17(p.margin));
  }
  w.close();
}

std::vector<PreferencePair> read_pairs(const std::string& path) {
  std::vector<PreferencePair> out;
  for (const auto& line : data_lines(path)) {
    const auto f = fields_of(line, 4, path);
    PreferencePair p;
    p.prompt_id = parse_int_field(f[0], path);
    p.chosen = parse_tokens(f[1], path);
    p.rejected = parse_tokens(f[2], path);
    p.margin = parse_g(f[3]);
    out.push_back(std::move(p));
  }
  return out;
}

namespace {

std::string join_vec(const Vec& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i > 0) out += ';';
    out += format_g17(v[i]);
  }
  return out;
}

Vec parse_vec(const std::string& field, const std::string& path) {
  if (field.empty()) return Vec();
  const auto parts = split(field, ';');
  Vec out(static_cast<Eigen::Index>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i) {
    try {
      out[static_cast<Eigen::Index>(i)] = parse_g(parts[i]);
    } catch (const IoError&) {
      throw IoError(path + ": malformed vector field '" + field + "'");
    }
  }
  return out;
}

}  // namespace

void write_metrics(const std::string& path,
                   const std::vector<MetricsRow>& rows) {
  LineWriter w(path);
  w.line("# step\tloss\tkl\td_f\tv0\tlambda\tdpo_eval\tacc");
  for (const auto& r : rows) {
    w.line(std::to_string(r.step) + '\t' + format_g17(r.loss) + '\t' +
           format_g17(r.kl) + '\t' + format_g17(r.d_f) + '\t' +
           join_vec(r.v0) + '\t' + format_g17(r.lambda) + '\t' +
           format_g17(r.dpo_eval) + '\t' + format_g17(r.acc));
  }
  w.close();
}

std::vector<MetricsRow> read_metrics(const std::string& path) {
  std::vector<MetricsRow> out;
  for (const auto& line : data_lines(path)) {
    const auto f = fields_of(line, 8, path);
    MetricsRow r;
    r.step = parse_int_field(f[0], path);
    r.loss = parse_g(f[1]);
    r.kl = parse_g(f[2]);
    r.d_f = parse_g(f[3]);
    r.v0 = parse_vec(f[4], path);
    r.lambda = parse_g(f[5]);
    r.dpo_eval = parse_g(f[6]);
    r.acc = parse_g(f[7]);
    out.push_back(std::move(r));
  }
  return out;
}

void write_solution(const std::string& path, const StateSpace& space,
                    const SoftSolution& sol) {
  LineWriter w(path);
  w.line("# beta\t" + format_g17(sol.beta));
  w.line("# gamma\t" + format_g17(sol.gamma));
  w.line(std::string("# form\t") +
         (sol.form == VForm::reference_weighted ? "reference_weighted"
                                                : "entropy"));
  w.line("# j_star\t" + join_vec(sol.j_star));
  w.line("# state\tv\tq\tpi");
  for (int id = 0; id < space.size(); ++id) {
    const auto s = static_cast<Eigen::Index>(id);
    w.line(std::to_string(id) + '\t' + format_g17(sol.v[s]) + '\t' +
           join_vec(sol.q.row(s).transpose()) + '\t' +
           join_vec(sol.pi_star.row(s).transpose()));
  }
  w.close();
}

void write_reward_table(const std::string& path, const StateSpace& space,
                        const Mat& reward) {
  LineWriter w(path);
  w.line("# state\taction\treward");
  for (int id : space.nonterminal_ids()) {
    for (int a = 0; a < space.vocab(); ++a) {
      w.line(std::to_string(id) + '\t' + std::to_string(a) + '\t' +
             format_g17(reward(id, a)));
    }
  }
  w.close();
}

Mat read_reward_table(const std::string& path, const StateSpace& space) {
  Mat reward = Mat::Zero(static_cast<Eigen::Index>(space.size()),
                         space.vocab());
  for (const auto& line : data_lines(path)) {
    const auto f = fields_of(line, 3, path);
    const int id = parse_int_field(f[0], path);
    const int a = parse_int_field(f[1], path);
    if (id < 0 || id >= space.size() || a < 0 || a >= space.vocab()) {
      throw IoError(path + ": reward entry out of range: " + line);
    }
    if (space.terminal(id)) {
      throw IoError(path + ": reward on terminal state " + std::to_string(id));
    }
    reward(id, a) = parse_g(f[2]);
  }
  return reward;
}

void write_checkpoint(const std::string& path, const Checkpoint& ck) {
  LineWriter w(path);
  w.line("step\t" + std::to_string(ck.step));
  w.line("params\t" + [&] {
    std::string s;
    const Vec p = ck.policy.params();
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      if (i > 0) s += ' ';
      s += format_g17(p[i]);
    }
    return s;
  }());
  const auto& m = ck.metrics;
  w.line("metrics\t" + std::to_string(m.step) + '\t' + format_g17(m.loss) +
         '\t' + format_g17(m.kl) + '\t' + format_g17(m.d_f) + '\t' +
         join_vec(m.v0) + '\t' + format_g17(m.lambda) + '\t' +
         format_g17(m.dpo_eval) + '\t' + format_g17(m.acc));
  w.close();
}

CheckpointParams read_checkpoint_params(const std::string& path) {
  CheckpointParams out;
  bool have_step = false;
  bool have_params = false;
  for (const auto& line : data_lines(path)) {
    const auto fields = split(line, '\t');
    if (fields.empty()) continue;
    if (fields[0] == "step" && fields.size() == 2) {
      out.step = parse_int_field(fields[1], path);
      have_step = true;
    } else if (fields[0] == "params" && fields.size() == 2) {
      std::istringstream in(fields[1]);
      std::vector<double> vals;
      std::string tok;
      while (in >> tok) vals.push_back(parse_g(tok));
      out.params = Vec(static_cast<Eigen::Index>(vals.size()));
      for (std::size_t i = 0; i < vals.size(); ++i) {
        out.params[static_cast<Eigen::Index>(i)] = vals[i];
      }
      have_params = true;
    }
  }
  if (!have_step || !have_params) {
    throw IoError(path + ": incomplete checkpoint file");
  }
  return out;
}

void write_manifest(const std::string& path,
                    const std::vector<std::pair<std::string, std::string>>&
                        entries) {
  LineWriter w(path);
  for (const auto& [k, v] : entries) w.line(k + " = " + v);
  w.close();
}

}  // namespace irlab
