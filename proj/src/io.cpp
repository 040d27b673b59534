#include "attnflow/io.hpp"

#include "attnflow/error.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace attnflow {

fs::path default_output_root() {
  const char* env = std::getenv(kOutputRootEnv);
  if (env && *env) return fs::path(env);
  return fs::path("runs");
}

std::string format_real(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

void append_real(std::string& out, double x) {
  char buf[32];
  const int len = std::snprintf(buf, sizeof buf, "%.17g", x);
  out.append(buf, static_cast<std::size_t>(len));
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

// Entries of one matrix row: whitespace and/or commas between numbers.
std::vector<double> parse_row(std::string_view line, const std::string& what) {
  std::vector<double> row;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (std::isspace(static_cast<unsigned char>(line[i])) || line[i] == ',')) ++i;
    if (i == line.size()) break;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j])) && line[j] != ',') ++j;
    row.push_back(parse_real(line.substr(i, j - i), what));
    i = j;
  }
  return row;
}

Matrix rows_to_matrix(const std::vector<std::vector<double>>& rows, const std::string& what) {
  if (rows.empty()) fail(ErrorCode::Config, what + ": empty matrix");
  const std::size_t cols = rows.front().size();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) {
      fail(ErrorCode::Config, what + ": row " + std::to_string(r + 1) + " has " + std::to_string(rows[r].size()) +
                                  " entries, expected " + std::to_string(cols));
    }
  }
  Matrix M(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols; ++c) M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return M;
}

bool parse_bool(std::string_view v, const std::string& what) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(ErrorCode::Config, what + ": expected true or false, got '" + std::string(v) + "'");
}

long parse_integer(std::string_view v, const std::string& what) {
  long out = 0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (v.empty() || r.ec != std::errc() || r.ptr != end) {
    fail(ErrorCode::Config, what + ": expected an integer, got '" + std::string(v) + "'");
  }
  return out;
}

}  // namespace

double parse_real(std::string_view s, const std::string& what) {
  s = trim(s);
  double out = 0.0;
  const auto* begin = s.data();
  if (!s.empty() && s.front() == '+') ++begin;
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(begin, end, out);
  if (s.empty() || r.ec != std::errc() || r.ptr != end) {
    fail(ErrorCode::Config, what + ": expected a number, got '" + std::string(s) + "'");
  }
  return out;
}

void atomic_write(const fs::path& path, std::string_view content) {
  static std::atomic<unsigned> counter{0};
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
    if (ec) fail(ErrorCode::Io, "cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp-" + std::to_string(::getpid()) + "-" + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp, ec);
      fail(ErrorCode::Io, "write failed for " + tmp.string());
    }
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    std::error_code ignored;
    fs::remove(tmp, ignored);
    fail(ErrorCode::Io, "cannot rename onto " + path.string() + ": " + ec.message());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// --- matrices ---------------------------------------------------------------

Matrix parse_matrix_text(std::string_view text, const std::string& origin) {
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 0;
  for (auto line : split(text, '\n')) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    rows.push_back(parse_row(line, origin + ":" + std::to_string(lineno)));
  }
  return rows_to_matrix(rows, origin);
}

Matrix load_matrix_file(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorCode::Config, "matrix file " + path.string() + " does not exist");
  return parse_matrix_text(read_file(path), path.string());
}

std::string matrix_to_text(const Matrix& M) {
  std::string out;
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      if (j) out += ' ';
      append_real(out, M(i, j));
    }
    out += '\n';
  }
  return out;
}

HeadParams load_head_dir(const fs::path& dir) {
  HeadParams h;
  h.Q = load_matrix_file(dir / "Q.txt");
  h.K = load_matrix_file(dir / "K.txt");
  h.V = load_matrix_file(dir / "V.txt");
  const Eigen::Index d = h.V.rows();
  for (const auto& [name, M] : {std::pair{"Q.txt", &h.Q}, std::pair{"K.txt", &h.K}, std::pair{"V.txt", &h.V}}) {
    if (M->rows() != d || M->cols() != d) {
      fail(ErrorCode::DimensionMismatch, (dir / name).string() + " is " + std::to_string(M->rows()) + "x" +
                                             std::to_string(M->cols()) + ", expected " + std::to_string(d) + "x" +
                                             std::to_string(d));
    }
  }
  return h;
}

Matrix parse_inline_matrix(std::string_view value, const std::string& what) {
  std::vector<std::vector<double>> rows;
  for (auto row : split(value, ';')) {
    row = trim(row);
    if (row.empty()) continue;
    rows.push_back(parse_row(row, what));
  }
  return rows_to_matrix(rows, what);
}

std::string inline_matrix(const Matrix& M) {
  std::string out;
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    if (i) out += "; ";
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      if (j) out += ", ";
      append_real(out, M(i, j));
    }
  }
  return out;
}

// --- scenario configs -------------------------------------------------------

namespace {

struct Entry {
  std::string value;
  std::size_t line = 0;
  bool used = false;
};

class KeyValues {
 public:
  KeyValues(std::string_view text, std::string origin) : origin_(std::move(origin)) {
    std::size_t lineno = 0;
    for (auto line : split(text, '\n')) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        fail(ErrorCode::Config, where(lineno) + ": expected 'key = value'");
      }
      const std::string key(trim(line.substr(0, eq)));
      if (key.empty()) fail(ErrorCode::Config, where(lineno) + ": empty key");
      if (entries_.count(key)) {
        fail(ErrorCode::Config, where(lineno) + ": duplicate key '" + key + "' (first on line " +
                                    std::to_string(entries_[key].line) + ")");
      }
      entries_[key] = Entry{std::string(trim(line.substr(eq + 1))), lineno, false};
    }
  }

  const std::string* get(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return nullptr;
    it->second.used = true;
    return &it->second.value;
  }

  const std::string& require(const std::string& key) {
    const auto* v = get(key);
    if (!v) fail(ErrorCode::Config, origin_ + ": missing required key '" + key + "'");
    return *v;
  }

  std::string what(const std::string& key) const {
    auto it = entries_.find(key);
    return (it == entries_.end() ? origin_ : where(it->second.line)) + ": key '" + key + "'";
  }

  std::vector<std::string> with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& [k, e] : entries_) {
      if (k.rfind(prefix, 0) == 0) out.push_back(k);
    }
    std::sort(out.begin(), out.end(), [&](const std::string& a, const std::string& b) {
      return entries_.at(a).line < entries_.at(b).line;
    });
    return out;
  }

  void reject_unused() const {
    for (const auto& [k, e] : entries_) {
      if (!e.used) fail(ErrorCode::Config, where(e.line) + ": unknown key '" + k + "'");
    }
  }

 private:
  std::string where(std::size_t line) const { return origin_ + ":" + std::to_string(line); }

  std::string origin_;
  std::map<std::string, Entry> entries_;
};

Matrix matrix_value(KeyValues& kv, const std::string& key, const fs::path& base_dir) {
  const std::string& v = kv.require(key);
  if (!v.empty() && v.front() == '@') {
    fs::path p(std::string(trim(std::string_view(v).substr(1))));
    if (p.is_relative()) p = base_dir / p;
    try {
      return load_matrix_file(p);
    } catch (const Error& e) {
      fail(ErrorCode::Config, kv.what(key) + ": " + e.what());
    }
  }
  return parse_inline_matrix(v, kv.what(key));
}

}  // namespace

Scenario parse_scenario_config(std::string_view text, const std::string& origin, const fs::path& base_dir) {
  KeyValues kv(text, origin);
  Scenario s;
  s.name = kv.require("name");
  if (const auto* d = kv.get("description")) s.description = *d;

  const std::string& vname = kv.require("variant");
  const auto variant = parse_variant(vname);
  if (!variant) {
    fail(ErrorCode::Config, kv.what("variant") + ": unknown variant '" + vname +
                                "' (raw_continuous, rescaled_continuous, raw_discrete, rescaled_discrete, "
                                "feedforward_rescaled, multihead_discrete)");
  }
  s.spec.variant = *variant;

  double dt = 0.1;
  if (const auto* v = kv.get("dt")) dt = parse_real(*v, kv.what("dt"));
  s.spec.params.dt = dt;
  s.cfg.dt = dt;
  if (const auto* v = kv.get("t_end")) s.cfg.t_end = parse_real(*v, kv.what("t_end"));
  if (const auto* v = kv.get("snapshot_stride")) {
    s.cfg.snapshot_stride = static_cast<int>(parse_integer(*v, kv.what("snapshot_stride")));
  }
  s.cfg.velocity_stop_tol = default_velocity_stop_tol(s.spec.variant);
  if (const auto* v = kv.get("velocity_stop_tol")) {
    if (*v == "none") {
      s.cfg.velocity_stop_tol.reset();
    } else {
      s.cfg.velocity_stop_tol = parse_real(*v, kv.what("velocity_stop_tol"));
    }
  }
  if (const auto* v = kv.get("capture_attention")) s.cfg.capture_attention = parse_bool(*v, kv.what("capture_attention"));
  if (const auto* v = kv.get("coordinate_guard")) s.cfg.coordinate_guard = parse_real(*v, kv.what("coordinate_guard"));
  if (const auto* v = kv.get("expm_refresh")) {
    s.cfg.expm_refresh = static_cast<int>(parse_integer(*v, kv.what("expm_refresh")));
  }

  long heads = 1;
  if (const auto* v = kv.get("heads")) heads = parse_integer(*v, kv.what("heads"));
  if (heads < 1) fail(ErrorCode::Config, kv.what("heads") + ": must be at least 1");
  for (long h = 0; h < heads; ++h) {
    const std::string suffix = h == 0 ? "" : "." + std::to_string(h);
    HeadParams hp;
    if (h == 0 && kv.get("head_dir")) {
      fs::path dir(kv.require("head_dir"));
      if (dir.is_relative()) dir = base_dir / dir;
      try {
        hp = load_head_dir(dir);
      } catch (const Error& e) {
        fail(ErrorCode::Config, kv.what("head_dir") + ": " + e.what());
      }
    } else {
      hp.Q = matrix_value(kv, "Q" + suffix, base_dir);
      hp.K = matrix_value(kv, "K" + suffix, base_dir);
      hp.V = matrix_value(kv, "V" + suffix, base_dir);
    }
    s.spec.params.heads.push_back(std::move(hp));
  }

  if (kv.get("ffn.W")) {
    FeedForward f;
    f.W = matrix_value(kv, "ffn.W", base_dir);
    f.b = Vector::Zero(f.W.rows());
    if (kv.get("ffn.b")) {
      const Matrix b = matrix_value(kv, "ffn.b", base_dir);
      if (b.rows() != 1 && b.cols() != 1) fail(ErrorCode::Config, kv.what("ffn.b") + ": expected a vector");
      f.b = b.reshaped();
    }
    if (const auto* a = kv.get("ffn.activation")) {
      const auto act = parse_activation(*a);
      if (!act) fail(ErrorCode::Config, kv.what("ffn.activation") + ": expected relu, tanh or identity");
      f.activation = *act;
    }
    if (const auto* b = kv.get("ffn.bias_inside")) f.bias_inside = parse_bool(*b, kv.what("ffn.bias_inside"));
    s.spec.params.feedforward = std::move(f);
  } else {
    for (const char* k : {"ffn.b", "ffn.activation", "ffn.bias_inside"}) {
      if (kv.get(k)) fail(ErrorCode::Config, kv.what(k) + ": needs ffn.W");
    }
  }

  const std::string rule = kv.get("init") ? *kv.get("init") : "uniform_cube";
  if (rule == "uniform_cube") {
    s.init_rule = InitRule::UniformCube;
    s.n = static_cast<Eigen::Index>(parse_integer(kv.require("init.n"), kv.what("init.n")));
    if (const auto* v = kv.get("init.half_width")) s.init_half_width = parse_real(*v, kv.what("init.half_width"));
  } else if (rule == "explicit") {
    s.init_rule = InitRule::Explicit;
    s.init_tokens = matrix_value(kv, "init.tokens", base_dir);
    s.n = s.init_tokens.rows();
  } else {
    fail(ErrorCode::Config, kv.what("init") + ": expected uniform_cube or explicit, got '" + rule + "'");
  }

  for (const auto& key : kv.with_prefix("analyzer.")) {
    AnalyzerRequest req;
    req.name = key.substr(9);
    if (req.name.empty()) fail(ErrorCode::Config, kv.what(key) + ": empty analyzer name");
    for (auto item : split(*kv.get(key), ',')) {
      item = trim(item);
      if (item.empty()) continue;
      const auto eq = item.find('=');
      if (eq == std::string_view::npos) fail(ErrorCode::Config, kv.what(key) + ": expected name=value pairs");
      req.params[std::string(trim(item.substr(0, eq)))] = parse_real(item.substr(eq + 1), kv.what(key));
    }
    s.analyzers.push_back(std::move(req));
  }

  kv.reject_unused();
  validate_scenario(s);
  return s;
}

Scenario load_scenario_config(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorCode::Config, "config file " + path.string() + " does not exist");
  return parse_scenario_config(read_file(path), path.string(), path.parent_path());
}

std::string scenario_to_config(const Scenario& s) {
  std::ostringstream o;
  o << "name = " << s.name << "\n";
  if (!s.description.empty()) o << "description = " << s.description << "\n";
  o << "variant = " << variant_name(s.spec.variant) << "\n";
  o << "dt = " << format_real(s.cfg.dt) << "\n";
  o << "t_end = " << format_real(s.cfg.t_end) << "\n";
  o << "snapshot_stride = " << s.cfg.snapshot_stride << "\n";
  o << "velocity_stop_tol = " << (s.cfg.velocity_stop_tol ? format_real(*s.cfg.velocity_stop_tol) : "none") << "\n";
  o << "capture_attention = " << (s.cfg.capture_attention ? "true" : "false") << "\n";
  o << "coordinate_guard = " << format_real(s.cfg.coordinate_guard) << "\n";
  o << "expm_refresh = " << s.cfg.expm_refresh << "\n";
  o << "heads = " << s.spec.params.heads.size() << "\n";
  for (std::size_t h = 0; h < s.spec.params.heads.size(); ++h) {
    const std::string suffix = h == 0 ? "" : "." + std::to_string(h);
    const auto& hp = s.spec.params.heads[h];
    o << "Q" << suffix << " = " << inline_matrix(hp.Q) << "\n";
    o << "K" << suffix << " = " << inline_matrix(hp.K) << "\n";
    o << "V" << suffix << " = " << inline_matrix(hp.V) << "\n";
  }
  if (const auto& f = s.spec.params.feedforward) {
    o << "ffn.W = " << inline_matrix(f->W) << "\n";
    o << "ffn.b = " << inline_matrix(f->b.transpose()) << "\n";
    o << "ffn.activation = " << activation_name(f->activation) << "\n";
    o << "ffn.bias_inside = " << (f->bias_inside ? "true" : "false") << "\n";
  }
  o << "init = " << init_rule_name(s.init_rule) << "\n";
  if (s.init_rule == InitRule::UniformCube) {
    o << "init.n = " << s.n << "\n";
    o << "init.half_width = " << format_real(s.init_half_width) << "\n";
  } else {
    o << "init.tokens = " << inline_matrix(s.init_tokens) << "\n";
  }
  for (const auto& a : s.analyzers) {
    o << "analyzer." << a.name << " =";
    bool first = true;
    for (const auto& [k, v] : a.params) {
      o << (first ? " " : ", ") << k << "=" << format_real(v);
      first = false;
    }
    o << "\n";
  }
  return o.str();
}

void export_scenario_dir(const fs::path& dir, const std::vector<Scenario>& scenarios) {
  for (const auto& s : scenarios) atomic_write(dir / (s.name + ".cfg"), scenario_to_config(s));
}

std::vector<Scenario> load_scenario_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorCode::Config, "scenario directory " + dir.string() + " does not exist");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".cfg") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Scenario> out;
  std::set<std::string> names;
  for (const auto& f : files) {
    auto s = load_scenario_config(f);
    if (!names.insert(s.name).second) {
      fail(ErrorCode::Config, f.string() + ": scenario name '" + s.name + "' already defined in this directory");
    }
    out.push_back(std::move(s));
  }
  return out;
}

// --- trajectories -----------------------------------------------------------

std::string trajectory_csv(const Trajectory& traj) {
  std::string out = "t,token_index";
  const Eigen::Index d = traj.snapshots.empty() ? traj.spec.params.dim() : traj.snapshots.front().dim();
  for (Eigen::Index c = 0; c < d; ++c) out += ",coord_" + std::to_string(c);
  out += '\n';
  for (const auto& s : traj.snapshots) {
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      append_real(out, s.t);
      out += ',';
      out += std::to_string(i);
      for (Eigen::Index c = 0; c < s.dim(); ++c) {
        out += ',';
        append_real(out, s.tokens(i, c));
      }
      out += '\n';
    }
  }
  return out;
}

std::vector<TokenEnsemble> parse_trajectory_csv(std::string_view text, const std::string& origin) {
  auto lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) fail(ErrorCode::Io, origin + ": empty trajectory file");
  const auto header = split(lines.front(), ',');
  if (header.size() < 3 || header[0] != "t" || header[1] != "token_index") {
    fail(ErrorCode::Io, origin + ": header must start with t,token_index,coord_0");
  }
  const std::size_t d = header.size() - 2;
  for (std::size_t c = 0; c < d; ++c) {
    if (header[c + 2] != "coord_" + std::to_string(c)) fail(ErrorCode::Io, origin + ": bad column " + std::string(header[c + 2]));
  }

  std::vector<TokenEnsemble> out;
  std::vector<std::vector<double>> rows;
  double current_t = 0.0;
  auto flush = [&] {
    if (rows.empty()) return;
    TokenEnsemble e{current_t, Matrix(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d))};
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t c = 0; c < d; ++c) e.tokens(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
    out.push_back(std::move(e));
    rows.clear();
  };
  for (std::size_t l = 1; l < lines.size(); ++l) {
    const std::string where = origin + ":" + std::to_string(l + 1);
    const auto cells = split(lines[l], ',');
    if (cells.size() != d + 2) fail(ErrorCode::Io, where + ": expected " + std::to_string(d + 2) + " columns");
    double t = 0.0;
    long idx = 0;
    try {
      t = parse_real(cells[0], where);
      idx = parse_integer(cells[1], where);
    } catch (const Error& e) {
      fail(ErrorCode::Io, e.what());
    }
    if (idx == 0) {
      flush();
      current_t = t;
    } else if (idx != static_cast<long>(rows.size()) || t != current_t) {
      fail(ErrorCode::Io, where + ": token_index out of sequence");
    }
    std::vector<double> row(d);
    for (std::size_t c = 0; c < d; ++c) {
      try {
        row[c] = parse_real(cells[c + 2], where);
      } catch (const Error& e) {
        fail(ErrorCode::Io, e.what());
      }
    }
    rows.push_back(std::move(row));
  }
  flush();
  for (std::size_t k = 1; k < out.size(); ++k) {
    if (out[k].size() != out[0].size()) fail(ErrorCode::Io, origin + ": snapshots have different token counts");
  }
  return out;
}

std::string attention_csv(const Matrix& P) {
  std::string out;
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    for (Eigen::Index j = 0; j < P.cols(); ++j) {
      if (j) out += ',';
      append_real(out, P(i, j));
    }
    out += '\n';
  }
  return out;
}

Matrix parse_attention_csv(std::string_view text, const std::string& origin) {
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 0;
  for (auto line : split(text, '\n')) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    for (auto cell : split(line, ',')) {
      try {
        row.push_back(parse_real(cell, origin + ":" + std::to_string(lineno)));
      } catch (const Error& e) {
        fail(ErrorCode::Io, e.what());
      }
    }
    rows.push_back(std::move(row));
  }
  Matrix P;
  try {
    P = rows_to_matrix(rows, origin);
  } catch (const Error& e) {
    fail(ErrorCode::Io, e.what());
  }
  if (P.rows() != P.cols()) fail(ErrorCode::Io, origin + ": attention matrix is not square");
  return P;
}

Json matrix_json(const Matrix& M) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix json_matrix(const Json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) fail(ErrorCode::Io, what + ": expected a non-empty array of rows");
  std::vector<std::vector<double>> rows;
  for (const auto& r : j) {
    if (!r.is_array()) fail(ErrorCode::Io, what + ": expected rows");
    std::vector<double> row;
    for (const auto& x : r) {
      if (!x.is_number()) fail(ErrorCode::Io, what + ": non-numeric entry");
      row.push_back(x.get<double>());
    }
    rows.push_back(std::move(row));
  }
  try {
    return rows_to_matrix(rows, what);
  } catch (const Error& e) {
    fail(ErrorCode::Io, e.what());
  }
}

Json spec_json(const DynamicsSpec& spec) {
  Json j;
  j["variant"] = variant_name(spec.variant);
  j["dt"] = spec.params.dt;
  Json heads = Json::array();
  for (const auto& h : spec.params.heads) {
    heads.push_back({{"Q", matrix_json(h.Q)}, {"K", matrix_json(h.K)}, {"V", matrix_json(h.V)}});
  }
  j["heads"] = std::move(heads);
  if (const auto& f = spec.params.feedforward) {
    j["feedforward"] = {{"W", matrix_json(f->W)},
                        {"b", matrix_json(f->b.transpose())},
                        {"activation", activation_name(f->activation)},
                        {"bias_inside", f->bias_inside}};
  } else {
    j["feedforward"] = nullptr;
  }
  return j;
}

DynamicsSpec json_spec(const Json& j) {
  try {
    DynamicsSpec spec;
    const auto v = parse_variant(j.at("variant").get<std::string>());
    if (!v) fail(ErrorCode::Io, "manifest: unknown variant");
    spec.variant = *v;
    spec.params.dt = j.at("dt").get<double>();
    for (const auto& h : j.at("heads")) {
      spec.params.heads.push_back(
          {json_matrix(h.at("Q"), "manifest Q"), json_matrix(h.at("K"), "manifest K"), json_matrix(h.at("V"), "manifest V")});
    }
    if (j.contains("feedforward") && !j["feedforward"].is_null()) {
      const auto& f = j["feedforward"];
      FeedForward ff;
      ff.W = json_matrix(f.at("W"), "manifest W");
      ff.b = json_matrix(f.at("b"), "manifest b").reshaped();
      const auto act = parse_activation(f.at("activation").get<std::string>());
      if (!act) fail(ErrorCode::Io, "manifest: unknown activation");
      ff.activation = *act;
      ff.bias_inside = f.at("bias_inside").get<bool>();
      spec.params.feedforward = std::move(ff);
    }
    return spec;
  } catch (const Json::exception& e) {
    fail(ErrorCode::Io, std::string("manifest spec: ") + e.what());
  }
}

Json run_config_json(const RunConfig& cfg) {
  Json j;
  j["t_end"] = cfg.t_end;
  j["dt"] = cfg.dt;
  j["snapshot_stride"] = cfg.snapshot_stride;
  j["velocity_stop_tol"] = cfg.velocity_stop_tol ? Json(*cfg.velocity_stop_tol) : Json(nullptr);
  j["seed"] = cfg.seed;
  j["capture_attention"] = cfg.capture_attention;
  j["coordinate_guard"] = cfg.coordinate_guard;
  j["expm_refresh"] = cfg.expm_refresh;
  return j;
}

RunConfig json_run_config(const Json& j) {
  try {
    RunConfig cfg;
    cfg.t_end = j.at("t_end").get<double>();
    cfg.dt = j.at("dt").get<double>();
    cfg.snapshot_stride = j.at("snapshot_stride").get<int>();
    if (!j.at("velocity_stop_tol").is_null()) cfg.velocity_stop_tol = j["velocity_stop_tol"].get<double>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.capture_attention = j.at("capture_attention").get<bool>();
    cfg.coordinate_guard = j.at("coordinate_guard").get<double>();
    cfg.expm_refresh = j.at("expm_refresh").get<int>();
    return cfg;
  } catch (const Json::exception& e) {
    fail(ErrorCode::Io, std::string("manifest config: ") + e.what());
  }
}

// --- run directories --------------------------------------------------------

namespace {

std::string attention_stem(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "attention_%05zu", k);
  return buf;
}

}  // namespace

void write_run_dir(const fs::path& dir, const Scenario& s, std::uint64_t seed, const Trajectory& traj,
                   double wall_time) {
  atomic_write(dir / "trajectory.csv", trajectory_csv(traj));
  Json attention_files = Json::array();
  for (std::size_t k = 0; k < traj.attention_snapshots.size(); ++k) {
    const auto stem = attention_stem(k);
    const Matrix& P = traj.attention_snapshots[k];
    atomic_write(dir / "attention" / (stem + ".csv"), attention_csv(P));
    const Json sidecar = {{"t", traj.snapshots.at(k).t}, {"n", P.rows()}, {"variant", variant_name(traj.spec.variant)}};
    atomic_write(dir / "attention" / (stem + ".json"), sidecar.dump(2) + "\n");
    attention_files.push_back("attention/" + stem + ".csv");
  }

  Json m;
  m["format"] = "attnflow-run";
  m["version"] = 1;
  m["scenario"] = s.name;
  m["description"] = s.description;
  m["seed"] = seed;
  m["spec"] = spec_json(traj.spec);
  RunConfig cfg = s.cfg;
  cfg.seed = seed;
  m["config"] = run_config_json(cfg);
  Json init = {{"rule", init_rule_name(s.init_rule)}};
  if (s.init_rule == InitRule::UniformCube) {
    init["n"] = s.n;
    init["half_width"] = s.init_half_width;
  } else {
    init["tokens"] = matrix_json(s.init_tokens);
  }
  m["init"] = std::move(init);
  Json analyzers = Json::array();
  for (const auto& a : s.analyzers) analyzers.push_back({{"name", a.name}, {"params", a.params}});
  m["analyzers"] = std::move(analyzers);
  m["n"] = traj.snapshots.empty() ? 0 : traj.initial().size();
  m["d"] = traj.spec.params.dim();
  m["snapshots"] = traj.snapshots.size();
  m["t_final"] = traj.snapshots.empty() ? 0.0 : traj.terminal().t;
  m["stop_reason"] = stop_reason_name(traj.stop_reason);
  m["diagnostic"] = traj.diagnostic;
  m["wall_time_s"] = wall_time;
  m["files"] = {{"trajectory", "trajectory.csv"}, {"attention", std::move(attention_files)}};
  atomic_write(dir / "manifest.json", m.dump(2) + "\n");
}

RunRecord read_run_dir(const fs::path& dir) {
  const fs::path manifest = dir / "manifest.json";
  if (!fs::exists(manifest)) fail(ErrorCode::MissingArtifacts, dir.string() + ": no manifest.json (not a run directory?)");
  RunRecord r;
  try {
    r.manifest = Json::parse(read_file(manifest));
  } catch (const Json::exception& e) {
    fail(ErrorCode::MissingArtifacts, manifest.string() + ": unreadable manifest: " + e.what());
  }
  const auto& m = r.manifest;
  try {
    const fs::path traj_path = dir / m.at("files").at("trajectory").get<std::string>();
    if (!fs::exists(traj_path)) fail(ErrorCode::MissingArtifacts, dir.string() + ": manifest lists a missing " + traj_path.filename().string());

    r.seed = m.at("seed").get<std::uint64_t>();
    r.wall_time = m.at("wall_time_s").get<double>();
    r.traj.spec = json_spec(m.at("spec"));
    r.traj.snapshots = parse_trajectory_csv(read_file(traj_path), traj_path.string());
    const auto reason = parse_stop_reason(m.at("stop_reason").get<std::string>());
    if (!reason) fail(ErrorCode::Io, manifest.string() + ": unknown stop reason");
    r.traj.stop_reason = *reason;
    r.traj.diagnostic = m.at("diagnostic").get<std::string>();
    for (const auto& f : m.at("files").at("attention")) {
      const fs::path p = dir / f.get<std::string>();
      if (!fs::exists(p)) fail(ErrorCode::MissingArtifacts, dir.string() + ": manifest lists a missing " + p.string());
      r.traj.attention_snapshots.push_back(parse_attention_csv(read_file(p), p.string()));
    }

    Scenario& s = r.scenario;
    s.name = m.at("scenario").get<std::string>();
    s.description = m.at("description").get<std::string>();
    s.spec = r.traj.spec;
    s.cfg = json_run_config(m.at("config"));
    const auto& init = m.at("init");
    if (init.at("rule").get<std::string>() == "explicit") {
      s.init_rule = InitRule::Explicit;
      s.init_tokens = json_matrix(init.at("tokens"), "manifest init.tokens");
      s.n = s.init_tokens.rows();
    } else {
      s.init_rule = InitRule::UniformCube;
      s.n = init.at("n").get<Eigen::Index>();
      s.init_half_width = init.at("half_width").get<double>();
    }
    for (const auto& a : m.at("analyzers")) {
      s.analyzers.push_back({a.at("name").get<std::string>(), a.at("params").get<std::map<std::string, double>>()});
    }
  } catch (const Json::exception& e) {
    fail(ErrorCode::Io, manifest.string() + ": " + e.what());
  }
  if (r.traj.snapshots.empty()) fail(ErrorCode::MissingArtifacts, dir.string() + ": trajectory has no snapshots");
  return r;
}

}  // namespace attnflow
