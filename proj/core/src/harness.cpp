#include "vk/harness.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "vk/errors.hpp"

namespace vk {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_number(double x) { return fmt::format("{:.17g}", x); }

// ---------------------------------------------------------------------------
// Field presets

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& text, double& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  char* end = nullptr;
  out = std::strtod(t.c_str(), &end);
  return end == t.c_str() + t.size();
}

}  // namespace

FieldSpec FieldSpec::parse(const std::string& text) {
  const std::string t = trim(text);
  FieldSpec spec;
  if (t.rfind("csv:", 0) == 0) {
    spec.name = "csv";
    spec.path = trim(t.substr(4));
    if (spec.path.empty()) throw ConfigError(fmt::format("field '{}' names no csv file", text));
    return spec;
  }
  const auto open = t.find('(');
  if (open == std::string::npos) {
    spec.name = t;
  } else {
    if (t.back() != ')') throw ConfigError(fmt::format("malformed field preset '{}'", text));
    spec.name = trim(t.substr(0, open));
    const std::string args = t.substr(open + 1, t.size() - open - 2);
    if (!trim(args).empty()) {
      std::stringstream ss(args);
      std::string item;
      while (std::getline(ss, item, ',')) {
        double v = 0.0;
        if (!parse_double(item, v)) {
          throw ConfigError(fmt::format("field preset '{}' has non-numeric argument '{}'", text,
                                        trim(item)));
        }
        spec.params.push_back(v);
      }
    }
  }
  if (spec.name.empty()) throw ConfigError(fmt::format("empty field preset '{}'", text));
  return spec;
}

std::string FieldSpec::to_string() const {
  if (is_csv()) return "csv:" + path;
  if (params.empty()) return name;
  std::string out = name + "(";
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (k) out += ", ";
    out += format_number(params[k]);
  }
  return out + ")";
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

struct Value {
  enum class Type { Number, String, Bool, List } type = Type::Number;
  double number = 0.0;
  std::string text;
  bool flag = false;
  std::vector<Value> list;
  int line = 0;
};

class LineParser {
public:
  LineParser(const std::string& s, int line) : s_(s), line_(line) {}

  Value value() {
    skip();
    if (pos_ >= s_.size()) fail("missing value");
    Value v;
    v.line = line_;
    const char c = s_[pos_];
    if (c == '"') {
      v.type = Value::Type::String;
      v.text = string();
    } else if (c == '[') {
      v.type = Value::Type::List;
      ++pos_;
      skip();
      if (peek() == ']') {
        ++pos_;
        return v;
      }
      for (;;) {
        v.list.push_back(value());
        skip();
        if (peek() == ',') {
          ++pos_;
          continue;
        }
        if (peek() == ']') {
          ++pos_;
          break;
        }
        fail("expected ',' or ']' in list");
      }
    } else {
      const std::size_t start = pos_;
      while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' && s_[pos_] != ' ' &&
             s_[pos_] != '\t') {
        ++pos_;
      }
      const std::string word = s_.substr(start, pos_ - start);
      if (word == "true" || word == "false") {
        v.type = Value::Type::Bool;
        v.flag = word == "true";
      } else if (parse_double(word, v.number)) {
        v.type = Value::Type::Number;
      } else {
        fail(fmt::format("cannot parse value '{}'", word));
      }
    }
    return v;
  }

  void expect_end() {
    skip();
    if (pos_ != s_.size()) fail("unexpected trailing characters");
  }

private:
  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }
  void skip() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }
  std::string string() {
    ++pos_;
    std::string out;
    while (pos_ < s_.size()) {
      const char c = s_[pos_++];
      if (c == '"') return out;
      if (c == '\\') {
        if (pos_ >= s_.size()) break;
        const char e = s_[pos_++];
        if (e == 'n') out += '\n';
        else if (e == 't') out += '\t';
        else out += e;
      } else {
        out += c;
      }
    }
    fail("unterminated string");
    return out;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError(fmt::format("line {}: {}", line_, what));
  }

  const std::string& s_;
  std::size_t pos_ = 0;
  int line_;
};

std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (c == '\\' && in_string) {
      ++k;
      continue;
    }
    if (c == '"') in_string = !in_string;
    if (c == '#' && !in_string) return line.substr(0, k);
  }
  return line;
}

[[noreturn]] void bad(const std::string& key, const Value& v, const std::string& what) {
  throw ConfigError(fmt::format("{} (line {}): {}", key, v.line, what));
}

double as_number(const std::string& key, const Value& v) {
  if (v.type != Value::Type::Number) bad(key, v, "expected a number");
  if (!std::isfinite(v.number)) bad(key, v, "expected a finite number");
  return v.number;
}

int as_int(const std::string& key, const Value& v) {
  const double x = as_number(key, v);
  if (x != std::floor(x) || std::abs(x) > 1e9) bad(key, v, "expected an integer");
  return static_cast<int>(x);
}

bool as_bool(const std::string& key, const Value& v) {
  if (v.type != Value::Type::Bool) bad(key, v, "expected true or false");
  return v.flag;
}

std::string as_string(const std::string& key, const Value& v) {
  if (v.type != Value::Type::String) bad(key, v, "expected a quoted string");
  return v.text;
}

std::vector<double> as_numbers(const std::string& key, const Value& v) {
  if (v.type != Value::Type::List) bad(key, v, "expected a list of numbers");
  std::vector<double> out;
  for (const Value& item : v.list) out.push_back(as_number(key, item));
  return out;
}

Mat3 as_mat3(const std::string& key, const Value& v) {
  const std::vector<double> xs = as_numbers(key, v);
  if (xs.size() != 9) bad(key, v, "expected 9 numbers (row-major 3x3)");
  Mat3 m;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) m(r, c) = xs[3 * r + c];
  }
  return m;
}

FieldSpec as_field(const std::string& key, const Value& v, const fs::path& base) {
  FieldSpec f;
  try {
    f = FieldSpec::parse(as_string(key, v));
  } catch (const ConfigError& e) {
    bad(key, v, e.what());
  }
  if (f.is_csv()) {
    fs::path p(f.path);
    if (p.is_relative() && !base.empty()) p = base / p;
    if (!base.empty()) p = fs::absolute(p).lexically_normal();
    f.path = p.string();
  }
  return f;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const Value&)>;

const std::map<std::string, Setter>& setters(const fs::path& base) {
  // Rebuilt per call because field setters capture the base directory.
  static thread_local std::map<std::string, Setter> table;
  table.clear();
  table["kind"] = [](ExperimentConfig& c, const std::string& k, const Value& v) {
    c.kind = as_string(k, v);
  };
  table["material.w"] = [](ExperimentConfig& c, const std::string& k, const Value& v) {
    try {
      c.material.w_kind = stored_energy_kind_from_string(as_string(k, v));
    } catch (const ConfigError& e) {
      bad(k, v, e.what());
    }
  };
  table["material.d"] = [](ExperimentConfig& c, const std::string& k, const Value& v) {
    try {
      c.material.d_kind = distance_kind_from_string(as_string(k, v));
    } catch (const ConfigError& e) {
      bad(k, v, e.what());
    }
  };
  table["material.mu"] = [](auto& c, const auto& k, const auto& v) { c.material.mu = as_number(k, v); };
  table["material.gamma"] = [](auto& c, const auto& k, const auto& v) { c.material.gamma = as_number(k, v); };
  table["material.p"] = [](auto& c, const auto& k, const auto& v) { c.material.p = as_number(k, v); };
  table["material.c_p"] = [](auto& c, const auto& k, const auto& v) { c.material.c_p = as_number(k, v); };
  table["material.alpha"] = [](auto& c, const auto& k, const auto& v) { c.material.alpha = as_number(k, v); };
  table["material.cw2"] = [](auto& c, const auto& k, const auto& v) { c.material.cw2 = as_mat3(k, v); };
  table["material.cd2"] = [](auto& c, const auto& k, const auto& v) { c.material.cd2 = as_mat3(k, v); };
  table["material.allow_nonzero_poisson"] = [](auto& c, const auto& k, const auto& v) {
    c.material.allow_nonzero_poisson = as_bool(k, v);
  };
  table["grid.l1"] = [](auto& c, const auto& k, const auto& v) { c.grid.l1 = as_number(k, v); };
  table["grid.l2"] = [](auto& c, const auto& k, const auto& v) { c.grid.l2 = as_number(k, v); };
  table["grid.n1"] = [](auto& c, const auto& k, const auto& v) { c.grid.n1 = as_int(k, v); };
  table["grid.n2"] = [](auto& c, const auto& k, const auto& v) { c.grid.n2 = as_int(k, v); };
  table["bc.u_hat"] = [base](auto& c, const auto& k, const auto& v) { c.bc.u_hat = as_field(k, v, base); };
  table["bc.v_hat"] = [base](auto& c, const auto& k, const auto& v) { c.bc.v_hat = as_field(k, v, base); };
  table["bc.grad_v_hat"] = [base](auto& c, const auto& k, const auto& v) {
    c.bc.grad_v_hat = as_field(k, v, base);
  };
  table["init.u"] = [base](auto& c, const auto& k, const auto& v) { c.init.u = as_field(k, v, base); };
  table["init.v"] = [base](auto& c, const auto& k, const auto& v) { c.init.v = as_field(k, v, base); };
  table["load.f"] = [base](auto& c, const auto& k, const auto& v) { c.load = as_field(k, v, base); };
  table["run.tau"] = [](auto& c, const auto& k, const auto& v) { c.run.tau = as_number(k, v); };
  table["run.t_end"] = [](auto& c, const auto& k, const auto& v) { c.run.t_end = as_number(k, v); };
  table["run.eps_inner"] = [](auto& c, const auto& k, const auto& v) { c.run.eps_inner = as_number(k, v); };
  table["run.max_iters"] = [](auto& c, const auto& k, const auto& v) { c.run.max_iters = as_int(k, v); };
  table["run.record_slopes"] = [](auto& c, const auto& k, const auto& v) {
    c.run.record_slopes = as_bool(k, v);
  };
  table["run.seed"] = [](auto& c, const auto& k, const auto& v) {
    const int s = as_int(k, v);
    if (s < 0) bad(k, v, "seed must be non-negative");
    c.run.seed = static_cast<std::uint64_t>(s);
  };
  table["gamma.h_list"] = [](auto& c, const auto& k, const auto& v) { c.gamma.h_list = as_numbers(k, v); };
  table["gamma.generator"] = [](auto& c, const auto& k, const auto& v) { c.gamma.generator = as_string(k, v); };
  table["gamma.partner"] = [](auto& c, const auto& k, const auto& v) { c.gamma.partner = as_string(k, v); };
  table["gamma.taper_width"] = [](auto& c, const auto& k, const auto& v) {
    c.gamma.taper_width = as_number(k, v);
  };
  table["gamma.reference_nodes"] = [](auto& c, const auto& k, const auto& v) {
    c.gamma.reference_nodes = as_int(k, v);
  };
  table["gamma.calibrate"] = [](auto& c, const auto& k, const auto& v) { c.gamma.calibrate = as_bool(k, v); };
  table["quad.cells"] = [](auto& c, const auto& k, const auto& v) { c.quad.cells = as_int(k, v); };
  table["quad.points_inplane"] = [](auto& c, const auto& k, const auto& v) {
    c.quad.points_inplane = as_int(k, v);
  };
  table["quad.points_x3"] = [](auto& c, const auto& k, const auto& v) { c.quad.points_x3 = as_int(k, v); };
  table["slope.state"] = [base](auto& c, const auto& k, const auto& v) {
    fs::path p(as_string(k, v));
    if (p.empty()) {
      c.slope.state.clear();
      return;
    }
    if (p.is_relative() && !base.empty()) p = base / p;
    if (!base.empty()) p = fs::absolute(p).lexically_normal();
    c.slope.state = p.string();
  };
  table["slope.cg_tol"] = [](auto& c, const auto& k, const auto& v) { c.slope.cg_tol = as_number(k, v); };
  table["slope.preconditioner"] = [](auto& c, const auto& k, const auto& v) {
    c.slope.preconditioner = as_string(k, v);
  };
  table["slope.directions"] = [](auto& c, const auto& k, const auto& v) { c.slope.directions = as_int(k, v); };
  table["toy.x0"] = [](auto& c, const auto& k, const auto& v) { c.toy.x0 = as_number(k, v); };
  table["toy.tau"] = [](auto& c, const auto& k, const auto& v) { c.toy.tau = as_number(k, v); };
  table["toy.t_end"] = [](auto& c, const auto& k, const auto& v) { c.toy.t_end = as_number(k, v); };
  table["output.dir"] = [](auto& c, const auto& k, const auto& v) { c.output.dir = as_string(k, v); };
  table["output.write_states"] = [](auto& c, const auto& k, const auto& v) {
    c.output.write_states = as_bool(k, v);
  };
  return table;
}

void check_file(const std::string& key, const std::string& path) {
  if (!fs::exists(path)) throw ConfigError(fmt::format("{}: file '{}' does not exist", key, path));
}

void validate(const ExperimentConfig& c) {
  static const std::set<std::string> kinds{"evolve", "gamma", "slope", "toy"};
  if (!kinds.count(c.kind)) {
    throw ConfigError(fmt::format("kind: unknown experiment kind '{}'", c.kind));
  }
  try {
    c.material.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("material: {}", e.what()));
  }
  try {
    (void)GridSpec::make(c.grid.l1, c.grid.l2, c.grid.n1, c.grid.n2);
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("grid: {}", e.what()));
  }
  if (!(c.run.tau > 0.0)) throw ConfigError("run.tau: must be positive");
  if (!(c.run.t_end >= 0.0)) throw ConfigError("run.t_end: must be non-negative");
  if (!(c.run.eps_inner > 0.0)) throw ConfigError("run.eps_inner: must be positive");
  if (c.run.max_iters < 0) throw ConfigError("run.max_iters: must be non-negative");
  if (!(c.toy.tau > 0.0)) throw ConfigError("toy.tau: must be positive");
  if (!(c.toy.t_end >= 0.0)) throw ConfigError("toy.t_end: must be non-negative");
  if (!(c.slope.cg_tol > 0.0)) throw ConfigError("slope.cg_tol: must be positive");
  if (c.slope.preconditioner != "jacobi" && c.slope.preconditioner != "cholesky") {
    throw ConfigError("slope.preconditioner: expected \"jacobi\" or \"cholesky\"");
  }
  if (c.slope.directions < 0) throw ConfigError("slope.directions: must be non-negative");
  if (c.quad.cells < 1 || c.quad.points_inplane < 1 || c.quad.points_x3 < 1) {
    throw ConfigError("quad: cells and points must be positive");
  }
  if (c.gamma.reference_nodes < 4) throw ConfigError("gamma.reference_nodes: must be at least 4");
  if (!(c.gamma.taper_width >= 0.0)) throw ConfigError("gamma.taper_width: must be non-negative");
  for (std::size_t k = 0; k < c.gamma.h_list.size(); ++k) {
    if (!(c.gamma.h_list[k] > 0.0) || (k && !(c.gamma.h_list[k] < c.gamma.h_list[k - 1]))) {
      throw ConfigError("gamma.h_list: must be positive and strictly decreasing");
    }
  }
  if (c.gamma.h_list.empty()) throw ConfigError("gamma.h_list: must not be empty");
  const std::vector<std::pair<std::string, const FieldSpec*>> fields{
      {"bc.u_hat", &c.bc.u_hat}, {"bc.v_hat", &c.bc.v_hat}, {"bc.grad_v_hat", &c.bc.grad_v_hat},
      {"init.u", &c.init.u},     {"init.v", &c.init.v},     {"load.f", &c.load}};
  for (const auto& [key, f] : fields) {
    if (f->is_csv()) check_file(key, f->path);
  }
  if (c.kind == "slope") {
    if (c.slope.state.empty()) throw ConfigError("slope.state: required for kind \"slope\"");
    check_file("slope.state", c.slope.state);
  }
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch;
  }
  return out + "\"";
}

std::string number_list(const std::vector<double>& xs) {
  std::string out = "[";
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (k) out += ", ";
    out += format_number(xs[k]);
  }
  return out + "]";
}

std::string mat_list(const Mat3& m) {
  std::vector<double> xs;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) xs.push_back(m(r, c));
  }
  return number_list(xs);
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const fs::path& base_dir) {
  ExperimentConfig cfg;
  const auto& table = setters(base_dir);
  std::set<std::string> seen;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(fmt::format("line {}: malformed section header", line_no));
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError(fmt::format("line {}: empty section name", line_no));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(fmt::format("line {}: expected 'key = value'", line_no));
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(fmt::format("line {}: missing key", line_no));
    const std::string full = key.find('.') != std::string::npos || section.empty()
                                 ? key
                                 : section + "." + key;
    const std::string rest = line.substr(eq + 1);
    LineParser parser(rest, line_no);
    const Value value = parser.value();
    parser.expect_end();
    const auto it = table.find(full);
    if (it == table.end()) {
      throw ConfigError(fmt::format("line {}: unknown key '{}'", line_no, full));
    }
    if (!seen.insert(full).second) {
      throw ConfigError(fmt::format("line {}: duplicate key '{}'", line_no, full));
    }
    it->second(cfg, full, value);
  }
  validate(cfg);
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config file '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), fs::absolute(path).parent_path());
}

std::string echo_config(const ExperimentConfig& c) {
  std::string o;
  auto line = [&o](const std::string& k, const std::string& v) { o += k + " = " + v + "\n"; };
  auto boolean = [](bool b) { return std::string(b ? "true" : "false"); };
  line("kind", quote(c.kind));
  o += "\n[material]\n";
  line("w", quote(to_string(c.material.w_kind)));
  line("mu", format_number(c.material.mu));
  line("d", quote(to_string(c.material.d_kind)));
  line("gamma", format_number(c.material.gamma));
  line("p", format_number(c.material.p));
  line("c_p", format_number(c.material.c_p));
  line("alpha", format_number(c.material.alpha));
  if (c.material.cw2) line("cw2", mat_list(*c.material.cw2));
  if (c.material.cd2) line("cd2", mat_list(*c.material.cd2));
  line("allow_nonzero_poisson", boolean(c.material.allow_nonzero_poisson));
  o += "\n[grid]\n";
  line("l1", format_number(c.grid.l1));
  line("l2", format_number(c.grid.l2));
  line("n1", std::to_string(c.grid.n1));
  line("n2", std::to_string(c.grid.n2));
  o += "\n[bc]\n";
  line("u_hat", quote(c.bc.u_hat.to_string()));
  line("v_hat", quote(c.bc.v_hat.to_string()));
  line("grad_v_hat", quote(c.bc.grad_v_hat.to_string()));
  o += "\n[init]\n";
  line("u", quote(c.init.u.to_string()));
  line("v", quote(c.init.v.to_string()));
  o += "\n[load]\n";
  line("f", quote(c.load.to_string()));
  o += "\n[run]\n";
  line("tau", format_number(c.run.tau));
  line("t_end", format_number(c.run.t_end));
  line("eps_inner", format_number(c.run.eps_inner));
  line("max_iters", std::to_string(c.run.max_iters));
  line("record_slopes", boolean(c.run.record_slopes));
  line("seed", std::to_string(c.run.seed));
  o += "\n[gamma]\n";
  line("h_list", number_list(c.gamma.h_list));
  line("generator", quote(c.gamma.generator));
  line("partner", quote(c.gamma.partner));
  line("taper_width", format_number(c.gamma.taper_width));
  line("reference_nodes", std::to_string(c.gamma.reference_nodes));
  line("calibrate", boolean(c.gamma.calibrate));
  o += "\n[quad]\n";
  line("cells", std::to_string(c.quad.cells));
  line("points_inplane", std::to_string(c.quad.points_inplane));
  line("points_x3", std::to_string(c.quad.points_x3));
  o += "\n[slope]\n";
  line("state", quote(c.slope.state));
  line("cg_tol", format_number(c.slope.cg_tol));
  line("preconditioner", quote(c.slope.preconditioner));
  line("directions", std::to_string(c.slope.directions));
  o += "\n[toy]\n";
  line("x0", format_number(c.toy.x0));
  line("tau", format_number(c.toy.tau));
  line("t_end", format_number(c.toy.t_end));
  o += "\n[output]\n";
  line("dir", quote(c.output.dir));
  line("write_states", boolean(c.output.write_states));
  return o;
}

// ---------------------------------------------------------------------------
// CSV files

namespace {

std::vector<std::vector<double>> read_numeric_rows(const fs::path& path, int columns) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read '{}'", path.string()));
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  bool header_allowed = true;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    std::vector<double> row;
    std::stringstream ss(t);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      double v = 0.0;
      if (!parse_double(cell, v)) {
        numeric = false;
        break;
      }
      row.push_back(v);
    }
    if (!numeric) {
      if (header_allowed) {
        header_allowed = false;
        continue;
      }
      throw ConfigError(fmt::format("{}:{}: non-numeric row", path.string(), line_no));
    }
    header_allowed = false;
    if (static_cast<int>(row.size()) != columns) {
      throw ConfigError(fmt::format("{}:{}: expected {} columns, got {}", path.string(), line_no,
                                    columns, row.size()));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void check_coordinate(const fs::path& path, std::size_t row, const Vec2& expect, double x1,
                      double x2) {
  const double tol = 1e-9 * std::max(1.0, expect.cwiseAbs().maxCoeff());
  if (std::abs(expect(0) - x1) > tol || std::abs(expect(1) - x2) > tol) {
    throw ConfigError(fmt::format("{}: row {} is at ({}, {}), expected ({}, {})", path.string(),
                                  row + 1, x1, x2, expect(0), expect(1)));
  }
}

}  // namespace

Eigen::MatrixXd read_field_csv(const fs::path& path, const GridSpec& grid, int columns) {
  const auto rows = read_numeric_rows(path, columns + 2);
  if (static_cast<int>(rows.size()) != grid.n1 * grid.n2) {
    throw ConfigError(fmt::format("{}: {} rows, grid has {} nodes", path.string(), rows.size(),
                                  grid.n1 * grid.n2));
  }
  Eigen::MatrixXd out(grid.n1 * grid.n2, columns);
  for (int j = 0; j < grid.n2; ++j) {
    for (int i = 0; i < grid.n1; ++i) {
      const std::size_t r = static_cast<std::size_t>(i + grid.n1 * j);
      check_coordinate(path, r, grid.node(i, j), rows[r][0], rows[r][1]);
      for (int k = 0; k < columns; ++k) out(static_cast<Eigen::Index>(r), k) = rows[r][2 + k];
    }
  }
  return out;
}

Eigen::VectorXd read_cell_csv(const fs::path& path, const GridSpec& grid) {
  const auto rows = read_numeric_rows(path, 3);
  if (static_cast<int>(rows.size()) != grid.num_cells()) {
    throw ConfigError(fmt::format("{}: {} rows, grid has {} cells", path.string(), rows.size(),
                                  grid.num_cells()));
  }
  Eigen::VectorXd out(grid.num_cells());
  for (int c2 = 0; c2 < grid.cells2(); ++c2) {
    for (int c1 = 0; c1 < grid.cells1(); ++c1) {
      const int c = grid.cell_index(c1, c2);
      check_coordinate(path, static_cast<std::size_t>(c), grid.cell_center(c1, c2), rows[c][0],
                       rows[c][1]);
      out(c) = rows[c][2];
    }
  }
  return out;
}

void write_state_csv(const fs::path& path, const PlateState& s) {
  std::ofstream out(path);
  if (!out) throw ConfigError(fmt::format("cannot write '{}'", path.string()));
  const GridSpec& g = s.grid;
  out << fmt::format("# field=state n1={} n2={} l1={} l2={}\n", g.n1, g.n2, format_number(g.l1),
                     format_number(g.l2));
  out << "x1,x2,u1,u2,v,g1,g2\n";
  for (int j = 0; j < g.n2; ++j) {
    for (int i = 0; i < g.n1; ++i) {
      const Vec2 x = g.node(i, j);
      out << format_number(x(0)) << ',' << format_number(x(1)) << ',' << format_number(s.u1(i, j))
          << ',' << format_number(s.u2(i, j)) << ',' << format_number(s.vn(i, j)) << ','
          << format_number(s.bc->g1_hat(i, j)) << ',' << format_number(s.bc->g2_hat(i, j))
          << '\n';
    }
  }
}

PlateState read_state_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read '{}'", path.string()));
  std::string first;
  std::getline(in, first);
  in.close();
  int n1 = 0, n2 = 0;
  double l1 = 0.0, l2 = 0.0;
  {
    std::stringstream ss(first);
    std::string tok;
    bool is_state = false;
    while (ss >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) continue;
      const std::string k = tok.substr(0, eq), v = tok.substr(eq + 1);
      if (k == "field") is_state = v == "state";
      else if (k == "n1") n1 = std::stoi(v);
      else if (k == "n2") n2 = std::stoi(v);
      else if (k == "l1") l1 = std::stod(v);
      else if (k == "l2") l2 = std::stod(v);
    }
    if (!is_state) throw ConfigError(fmt::format("{}: missing '# field=state' header", path.string()));
  }
  const GridSpec grid = GridSpec::make(l1, l2, n1, n2);
  const Eigen::MatrixXd data = read_field_csv(path, grid, 5);
  auto column = [&](int k) {
    Eigen::MatrixXd m(grid.n1, grid.n2);
    for (int j = 0; j < grid.n2; ++j) {
      for (int i = 0; i < grid.n1; ++i) m(i, j) = data(i + grid.n1 * j, k);
    }
    return m;
  };
  BoundaryData bc;
  bc.u1_hat = column(0);
  bc.u2_hat = column(1);
  bc.v_hat = column(2);
  bc.g1_hat = column(3);
  bc.g2_hat = column(4);
  auto shared = std::make_shared<const BoundaryData>(bc);
  return make_state(grid, shared, bc.u1_hat, bc.u2_hat, bc.v_hat);
}

// ---------------------------------------------------------------------------
// Building states from a config

namespace {

struct VField {
  ScalarFn v, g1, g2;
};

void require_params(const std::string& key, const FieldSpec& f, std::size_t n) {
  if (f.params.size() != n) {
    throw ConfigError(fmt::format("{}: preset '{}' takes {} parameters, got {}", key, f.name, n,
                                  f.params.size()));
  }
}

std::pair<ScalarFn, ScalarFn> u_preset(const std::string& key, const FieldSpec& f) {
  const auto& p = f.params;
  if (f.name == "zero") {
    require_params(key, f, 0);
    return {[](double, double) { return 0.0; }, [](double, double) { return 0.0; }};
  }
  if (f.name == "constant") {
    require_params(key, f, 2);
    return {[c = p[0]](double, double) { return c; }, [c = p[1]](double, double) { return c; }};
  }
  if (f.name == "linear") {
    require_params(key, f, 4);
    return {[=](double x, double y) { return p[0] * x + p[1] * y; },
            [=](double x, double y) { return p[2] * x + p[3] * y; }};
  }
  if (f.name == "pure_bend") {
    require_params(key, f, 1);
    const double k = p[0];
    return {[k](double x, double) { return -k * k * x * x * x / 6.0; },
            [](double, double) { return 0.0; }};
  }
  throw ConfigError(fmt::format("{}: unknown in-plane preset '{}'", key, f.name));
}

VField v_preset(const std::string& key, const FieldSpec& f) {
  const auto& p = f.params;
  auto zero = [](double, double) { return 0.0; };
  if (f.name == "zero") {
    require_params(key, f, 0);
    return {zero, zero, zero};
  }
  if (f.name == "constant") {
    require_params(key, f, 1);
    return {[c = p[0]](double, double) { return c; }, zero, zero};
  }
  if (f.name == "linear") {
    require_params(key, f, 2);
    return {[=](double x, double y) { return p[0] * x + p[1] * y; },
            [a = p[0]](double, double) { return a; }, [b = p[1]](double, double) { return b; }};
  }
  if (f.name == "quadratic") {
    require_params(key, f, 3);
    return {[=](double x, double y) { return 0.5 * p[0] * x * x + 0.5 * p[1] * y * y + p[2] * x * y; },
            [=](double x, double y) { return p[0] * x + p[2] * y; },
            [=](double x, double y) { return p[1] * y + p[2] * x; }};
  }
  if (f.name == "pure_bend") {
    require_params(key, f, 1);
    const double k = p[0];
    return {[k](double x, double) { return 0.5 * k * x * x; }, [k](double x, double) { return k * x; },
            zero};
  }
  throw ConfigError(fmt::format("{}: unknown out-of-plane preset '{}'", key, f.name));
}

Eigen::MatrixXd column_matrix(const Eigen::MatrixXd& data, int k, const GridSpec& g) {
  Eigen::MatrixXd m(g.n1, g.n2);
  for (int j = 0; j < g.n2; ++j) {
    for (int i = 0; i < g.n1; ++i) m(i, j) = data(i + g.n1 * j, k);
  }
  return m;
}

Eigen::MatrixXd sample(const GridSpec& g, const ScalarFn& f) {
  Eigen::MatrixXd m(g.n1, g.n2);
  for (int j = 0; j < g.n2; ++j) {
    for (int i = 0; i < g.n1; ++i) {
      const Vec2 x = g.node(i, j);
      m(i, j) = f(x(0), x(1));
    }
  }
  return m;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> u_nodes(const std::string& key, const FieldSpec& f,
                                                    const GridSpec& g) {
  if (f.is_csv()) {
    const Eigen::MatrixXd d = read_field_csv(f.path, g, 2);
    return {column_matrix(d, 0, g), column_matrix(d, 1, g)};
  }
  const auto [u1, u2] = u_preset(key, f);
  return {sample(g, u1), sample(g, u2)};
}

Eigen::MatrixXd v_nodes(const std::string& key, const FieldSpec& f, const GridSpec& g) {
  if (f.is_csv()) return column_matrix(read_field_csv(f.path, g, 1), 0, g);
  return sample(g, v_preset(key, f).v);
}

}  // namespace

GridSpec make_grid(const ExperimentConfig& c) {
  return GridSpec::make(c.grid.l1, c.grid.l2, c.grid.n1, c.grid.n2);
}

std::shared_ptr<const BoundaryData> make_boundary(const ExperimentConfig& c, const GridSpec& g) {
  BoundaryData bc = BoundaryData::zero(g);
  std::tie(bc.u1_hat, bc.u2_hat) = u_nodes("bc.u_hat", c.bc.u_hat, g);
  bc.v_hat = v_nodes("bc.v_hat", c.bc.v_hat, g);
  const FieldSpec& gv = c.bc.grad_v_hat;
  if (gv.name == "auto") {
    if (c.bc.v_hat.is_csv()) {
      throw ConfigError("bc.grad_v_hat: \"auto\" needs an analytic bc.v_hat; give a csv file");
    }
    const VField vf = v_preset("bc.v_hat", c.bc.v_hat);
    bc.g1_hat = sample(g, vf.g1);
    bc.g2_hat = sample(g, vf.g2);
  } else if (gv.is_csv()) {
    const Eigen::MatrixXd d = read_field_csv(gv.path, g, 2);
    bc.g1_hat = column_matrix(d, 0, g);
    bc.g2_hat = column_matrix(d, 1, g);
  } else if (gv.name == "constant") {
    require_params("bc.grad_v_hat", gv, 2);
    bc.g1_hat.setConstant(gv.params[0]);
    bc.g2_hat.setConstant(gv.params[1]);
  } else {
    throw ConfigError(fmt::format("bc.grad_v_hat: unknown preset '{}'", gv.name));
  }
  return std::make_shared<const BoundaryData>(std::move(bc));
}

PlateState make_initial_state(const ExperimentConfig& c) {
  const GridSpec g = make_grid(c);
  auto bc = make_boundary(c, g);
  const auto [u1, u2] = u_nodes("init.u", c.init.u, g);
  return make_state(g, bc, u1, u2, v_nodes("init.v", c.init.v, g));
}

LoadField make_load(const ExperimentConfig& c, const GridSpec& g) {
  const FieldSpec& f = c.load;
  if (f.is_csv()) return LoadField{read_cell_csv(f.path, g)};
  LoadField load = LoadField::zero(g);
  if (f.name == "zero") {
    require_params("load.f", f, 0);
    return load;
  }
  std::function<double(double, double)> fn;
  if (f.name == "constant") {
    require_params("load.f", f, 1);
    fn = [c0 = f.params[0]](double, double) { return c0; };
  } else if (f.name == "gaussian") {
    require_params("load.f", f, 4);
    const double x0 = f.params[0], y0 = f.params[1], s = f.params[2], a = f.params[3];
    if (!(s > 0.0)) throw ConfigError("load.f: gaussian width must be positive");
    fn = [=](double x, double y) {
      return a * std::exp(-((x - x0) * (x - x0) + (y - y0) * (y - y0)) / (2.0 * s * s));
    };
  } else {
    throw ConfigError(fmt::format("load.f: unknown preset '{}'", f.name));
  }
  for (int c2 = 0; c2 < g.cells2(); ++c2) {
    for (int c1 = 0; c1 < g.cells1(); ++c1) {
      const Vec2 x = g.cell_center(c1, c2);
      load.f(g.cell_index(c1, c2)) = fn(x(0), x(1));
    }
  }
  return load;
}

// ---------------------------------------------------------------------------
// Pipelines

namespace {

void write_text(const fs::path& path, const std::string& text, RunReport& report) {
  std::ofstream out(path);
  if (!out) throw ConfigError(fmt::format("cannot write '{}'", path.string()));
  out << text;
  report.files.push_back(path);
}

Generator generator_from(const std::string& text, const ExperimentConfig& c) {
  const FieldSpec f = FieldSpec::parse(text);
  Generator g = f.is_csv() ? Generator::from_state(read_state_csv(f.path))
                           : Generator::preset(f.name, f.params, c.grid.l1, c.grid.l2);
  g.taper_width = c.gamma.taper_width;
  return g;
}

void run_evolve(const ExperimentConfig& c, const fs::path& dir, RunReport& report, json& summary) {
  const PlateState s0 = make_initial_state(c);
  const GridSpec& g = s0.grid;
  const LoadField load = make_load(c, g);
  const ReducedForms forms = ReducedForms::from_material(c.material);
  const bool unverified = c.material.allow_nonzero_poisson;
  const MetricSpace space = make_plate_space(s0, forms, load, unverified);

  RunOptions opt;
  opt.inner.eps_inner = c.run.eps_inner;
  opt.inner.max_iters = c.run.max_iters;
  if (c.run.record_slopes) {
    if (!load.is_zero()) {
      throw UnsupportedWithLoad("run.record_slopes needs load.f = \"zero\"");
    }
    opt.slope = [&](const Vector& x) { return local_slope(with_interior(s0, x), forms).slope; };
  }
  if (c.output.write_states) {
    fs::create_directories(dir / "states");
    opt.on_step = [&](int n, const Vector& x) {
      const fs::path p = dir / "states" / fmt::format("state_{:05d}.csv", n);
      write_state_csv(p, with_interior(s0, x));
      report.files.push_back(p);
    };
  }
  const Trajectory traj = mm_run(space, c.run.tau, c.run.t_end, pack_interior(s0), opt);

  std::string tcsv = "n,t,phi0,d_n,speed,slope,inner_iters,grad_norm\n";
  std::string ecsv = "t,phi0_total,phi0_membrane,phi0_bending,phi0_load\n";
  double dissipated = 0.0;
  for (std::size_t n = 0; n < traj.states.size(); ++n) {
    const double d = n ? traj.increments[n - 1] : 0.0;
    const std::string slope = traj.slopes.empty() ? "" : format_number(traj.slopes[n]);
    const int iters = n ? traj.stats[n - 1].iterations : 0;
    const double gnorm = n ? traj.stats[n - 1].grad_norm : 0.0;
    tcsv += fmt::format("{},{},{},{},{},{},{},{}\n", n, format_number(traj.time(static_cast<int>(n))),
                        format_number(traj.energies[n]), format_number(d),
                        format_number(d / traj.tau), slope, iters, format_number(gnorm));
    const EnergyBreakdown e = energy_phi0(with_interior(s0, traj.states[n]), forms, load, unverified);
    ecsv += fmt::format("{},{},{},{},{}\n", format_number(traj.time(static_cast<int>(n))),
                        format_number(e.total), format_number(e.membrane),
                        format_number(e.bending), format_number(e.load));
    dissipated += d * d / (2.0 * traj.tau);
  }
  write_text(dir / "trajectory.csv", tcsv, report);
  write_text(dir / "energy.csv", ecsv, report);
  write_state_csv(dir / "initial_state.csv", s0);
  write_state_csv(dir / "final_state.csv", with_interior(s0, traj.states.back()));
  report.files.push_back(dir / "initial_state.csv");
  report.files.push_back(dir / "final_state.csv");

  summary["steps"] = traj.steps();
  summary["complete"] = traj.complete;
  if (!traj.complete) summary["failure"] = traj.failure;
  summary["initial_energy"] = traj.energies.front();
  summary["final_energy"] = traj.energies.back();
  summary["total_dissipation"] = dissipated;
  summary["certificate_failures"] = traj.certificate_failures;
  summary["certificate_tolerance"] = traj.eps_cert;
  int unconverged = 0;
  for (const StepStats& s : traj.stats) unconverged += s.converged ? 0 : 1;
  summary["unconverged_steps"] = unconverged;
  if (!traj.slopes.empty()) {
    summary["energy_identity_defect"] = energy_identity_defect(traj, traj.slopes);
    const double tol = 1e-6 * (1.0 + traj.energies.front());
    summary["upper_gradient_warnings"] = upper_gradient_warnings(traj, tol).size();
  }
  report.ok = traj.complete && traj.certificate_failures == 0;
}

void run_gamma(const ExperimentConfig& c, const fs::path& dir, RunReport& report, json& summary) {
  const Generator gen = generator_from(c.gamma.generator, c);
  std::optional<Generator> partner;
  if (!c.gamma.partner.empty()) partner = generator_from(c.gamma.partner, c);
  GammaOptions opt;
  opt.quad.cells1 = opt.quad.cells2 = c.quad.cells;
  opt.quad.points_inplane = c.quad.points_inplane;
  opt.quad.points_x3 = c.quad.points_x3;
  opt.calibrate = c.gamma.calibrate;
  opt.reference_nodes = c.gamma.reference_nodes;
  const GammaReport rep = gamma_ladder(gen, partner, c.material, c.gamma.h_list, opt);
  std::string csv = "h,phi_h,w_part,p_part,f_part,phi0,energy_gap,gap_ratio,p_ratio,Dh,D0,"
                    "dissipation_gap\n";
  for (const GammaRow& r : rep.rows) {
    csv += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", format_number(r.h),
                       format_number(r.energy.total), format_number(r.energy.w_part),
                       format_number(r.energy.p_part), format_number(r.energy.f_part),
                       format_number(r.phi0), format_number(r.energy_gap),
                       format_number(r.energy_gap_ratio), format_number(r.p_ratio),
                       partner ? format_number(r.dh) : "", partner ? format_number(r.d0) : "",
                       partner ? format_number(r.dissipation_gap) : "");
  }
  write_text(dir / "gamma.csv", csv, report);
  summary["quadrature_cells"] = rep.quad.cells1;
  summary["energy_gaps_monotone"] = rep.energy_gaps_monotone;
  summary["final_energy_gap"] = rep.rows.back().energy_gap;
  if (partner) {
    summary["dissipation_gaps_monotone"] = rep.dissipation_gaps_monotone;
    summary["final_dissipation_gap"] = rep.rows.back().dissipation_gap;
  }
  report.ok = true;
}

void run_slope(const ExperimentConfig& c, const fs::path& dir, RunReport& report, json& summary) {
  const PlateState s = read_state_csv(c.slope.state);
  const ReducedForms forms = ReducedForms::from_material(c.material);
  const SlopeSystem sys = SlopeSystem::assemble(s, forms, make_load(c, s.grid));
  CgOptions opt;
  opt.rel_tol = c.slope.cg_tol;
  opt.preconditioner = c.slope.preconditioner == "cholesky" ? SlopePreconditioner::SparseCholesky
                                                             : SlopePreconditioner::Jacobi;
  const SlopeResult r = local_slope(sys, opt);
  std::mt19937_64 rng(c.run.seed);
  std::normal_distribution<double> normal;
  double max_ratio = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < c.slope.directions; ++k) {
    Vector d(sys.size());
    for (Eigen::Index q = 0; q < d.size(); ++q) d(q) = normal(rng);
    max_ratio = std::max(max_ratio, rayleigh_ratio(sys, d));
  }
  summary["slope"] = r.slope;
  summary["slope_dual_form"] = r.slope_dual_form;
  summary["two_form_gap"] = std::abs(r.slope - r.slope_dual_form);
  summary["cg_iterations"] = r.cg.iterations;
  summary["cg_relative_residual"] = r.cg.rel_residual;
  if (c.slope.directions > 0) {
    summary["max_rayleigh_ratio"] = max_ratio;
    summary["duality_gap"] = r.slope - max_ratio;
  }
  report.ok = (c.slope.directions == 0 || max_ratio <= r.slope + 1e-8) &&
              std::abs(r.slope - r.slope_dual_form) <= 1e-8 * std::max(1.0, r.slope);
  (void)dir;
}

void run_toy(const ExperimentConfig& c, const fs::path& dir, RunReport& report, json& summary) {
  const MetricSpace space = make_toy_space();
  const Trajectory traj =
      mm_run(space, c.toy.tau, c.toy.t_end, Vector::Constant(1, c.toy.x0), RunOptions{});
  std::string csv = "n,t,x,d_n,speed\n";
  for (std::size_t n = 0; n < traj.states.size(); ++n) {
    const double d = n ? traj.increments[n - 1] : 0.0;
    csv += fmt::format("{},{},{},{},{}\n", n, format_number(traj.time(static_cast<int>(n))),
                       format_number(traj.states[n](0)), format_number(d),
                       format_number(d / traj.tau));
  }
  write_text(dir / "toy.csv", csv, report);
  const double exact = c.toy.x0 * std::exp(-c.toy.t_end);
  summary["steps"] = traj.steps();
  summary["final_value"] = traj.states.back()(0);
  summary["exact_value"] = exact;
  summary["error"] = std::abs(traj.at_time(c.toy.t_end)(0) - exact);
  summary["certificate_failures"] = traj.certificate_failures;
  report.ok = traj.complete && traj.certificate_failures == 0;
}

}  // namespace

RunReport run_experiment(const ExperimentConfig& config, const fs::path& out_dir) {
  RunReport report;
  report.kind = config.kind;
  report.out_dir = out_dir;
  fs::create_directories(out_dir);
  json summary;
  summary["kind"] = config.kind;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    if (config.kind == "evolve") run_evolve(config, out_dir, report, summary);
    else if (config.kind == "gamma") run_gamma(config, out_dir, report, summary);
    else if (config.kind == "slope") run_slope(config, out_dir, report, summary);
    else if (config.kind == "toy") run_toy(config, out_dir, report, summary);
    else throw ConfigError(fmt::format("unknown experiment kind '{}'", config.kind));
  } catch (const Error& e) {
    report.ok = false;
    report.message = fmt::format("{} run failed: {}", config.kind, e.what());
    summary["error"] = e.what();
    summary["partial"] = true;
  }
  summary["ok"] = report.ok;
  summary["wall_time_s"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  summary["config"] = echo_config(config);
  report.summary_json = summary.dump(2);
  write_text(out_dir / "summary.json", report.summary_json + "\n", report);
  return report;
}

}  // namespace vk
