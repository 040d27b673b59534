#include "attnflow/analysis.hpp"

#include "attnflow/attention.hpp"
#include "attnflow/error.hpp"
#include "attnflow/geometry.hpp"
#include "attnflow/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace attnflow {

const std::vector<AnalyzerInfo>& analyzer_catalog() {
  static const std::vector<AnalyzerInfo> catalog = {
      {"boolean", true, "final attention matrix (d = 1) tested for the Boolean limit class", {{"tol", 1e-3}}, {}},
      {"polytope", true, "terminal tokens within eps of the limit set S of the cluster polytope",
       {{"eps", 1e-2}, {"cluster_eps", 0.0}, {"stationary_tol", 1e-6}}, {}},
      {"hull", true, "every snapshot inside the convex hull of the previous one", {{"tol", 1e-7}}, {}},
      {"hyperplane", true, "leading eigen-coordinate clusters on at most three levels inside the initial band",
       {{"eps", 1e-2}}, {}},
      {"mixed", true, "F-projection passes the polytope verdict and G grows between t_early and t_late",
       {{"eps", 1e-2}, {"t_early", 5.0}, {"t_late", 15.0}, {"growth", std::exp(2.0)}, {"cluster_eps", 0.0},
        {"stationary_tol", 1e-6}},
       {}},
      {"collapse", true, "max token norm at the last snapshot below radius", {{"radius", 1e-3}}, {}},
      {"lyapunov", true, "sum_ij exp(<x_i, x_j>) non-increasing (V = -I, Q^T K = I, raw)", {}, {"tol"}},
      {"pairwise", true, "minimum pairwise distance non-decreasing (Q = K = V = I, raw)", {}, {"tol"}},
      {"eigencoordinate", true, "min/max of phi*_k(z_i) monotone for a real lambda_k >= 0", {{"k", 0.0}}, {"tol"}},
      {"growth", true, "|phi*_k(x_i(t))| e^{-|lambda_k| t} stays below 10 times its initial value", {}, {"slack"}},
      {"w2-stability", true, "log W2 ratio of a perturbed pair grows at a bounded rate",
       {{"delta", 1e-4}, {"horizon", 2.0}, {"seed", 0.0}}, {}},
      {"codimension", false, "variance and levels of every eigen-coordinate (exploratory)", {{"eps", 1e-2}}, {}},
      {"clusters", false, "single-linkage clusters of the terminal tokens (exploratory)", {{"eps", 1e-2}}, {}},
  };
  return catalog;
}

const AnalyzerInfo& find_analyzer(const std::string& name) {
  for (const auto& a : analyzer_catalog()) {
    if (a.name == name) return a;
  }
  std::string known;
  for (const auto& a : analyzer_catalog()) known += (known.empty() ? "" : ", ") + a.name;
  fail(ErrorCode::UnknownAnalyzer, "unknown analyzer '" + name + "'; known: " + known);
}

std::map<std::string, double> parse_params(const std::string& text) {
  std::map<std::string, double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    start = comma == std::string::npos ? text.size() + 1 : comma + 1;
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) fail(ErrorCode::InvalidArgument, "threshold '" + item + "' is not name=value");
    auto key = item.substr(0, eq);
    key.erase(0, key.find_first_not_of(" \t"));
    key.erase(key.find_last_not_of(" \t") + 1);
    if (out.count(key)) fail(ErrorCode::InvalidArgument, "threshold '" + key + "' given twice");
    try {
      out[key] = parse_real(item.substr(eq + 1), "threshold " + key);
    } catch (const Error& e) {
      fail(ErrorCode::InvalidArgument, e.what());
    }
  }
  return out;
}

Json monitor_json(const MonitorLog& log) {
  Json j;
  j["name"] = log.name;
  j["columns"] = log.columns;
  j["advisory"] = log.advisory;
  j["note"] = log.note;
  j["ok"] = log.ok();
  Json samples = Json::array();
  for (const auto& s : log.samples) {
    Json row = Json::array({s.t});
    for (double v : s.values) row.push_back(v);
    samples.push_back(std::move(row));
  }
  j["samples"] = std::move(samples);
  Json viol = Json::array();
  for (const auto& v : log.violations) {
    viol.push_back({{"t0", v.t0}, {"t1", v.t1}, {"delta", v.delta}, {"column", log.columns.at(v.column)}});
  }
  j["violations"] = std::move(viol);
  return j;
}

namespace {

std::optional<double> opt(const std::map<std::string, double>& p, const char* key) {
  auto it = p.find(key);
  if (it == p.end()) return std::nullopt;
  return it->second;
}

Json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Json clusters_json(const ClusterAssignment& c) {
  std::vector<int> sizes(static_cast<std::size_t>(c.count()), 0);
  for (int l : c.labels) ++sizes[static_cast<std::size_t>(l)];
  return {{"count", c.count()}, {"radius", c.radius}, {"sizes", sizes}, {"centers", matrix_json(c.centers)}};
}

Json polytope_json(const PolytopeReport& r) {
  Json j;
  j["pass"] = r.pass;
  j["max_distance"] = r.max_distance;
  j["distances"] = vec_json(r.distances);
  j["vertices"] = r.vertices.size() ? matrix_json(r.vertices) : Json::array();
  j["S"] = r.S.points.size() ? matrix_json(r.S.points) : Json::array();
  j["outliers"] = r.outliers;
  j["facet_interior_flag"] = !r.outliers.empty();
  j["clusters"] = clusters_json(r.clusters);
  j["terminal_velocity"] = r.terminal_velocity;
  j["cluster_eps"] = r.cluster_eps;
  return j;
}

Matrix terminal_attention(const Trajectory& traj) {
  const auto& last = traj.terminal();
  if (!traj.attention_snapshots.empty() && traj.attention_snapshots.size() == traj.snapshots.size()) {
    return traj.attention_snapshots.back();
  }
  const auto& h = traj.spec.params.head();
  switch (traj.spec.variant) {
    case Variant::RescaledContinuous:
    case Variant::FeedForwardRescaled:
      return attention_rescaled(last, h, last.t);
    case Variant::RescaledDiscrete: {
      const long k = std::lround(last.t / traj.spec.params.dt);
      const Matrix R = Matrix::Identity(h.dim(), h.dim()) + traj.spec.params.dt * h.V;
      Matrix Rk = Matrix::Identity(h.dim(), h.dim());
      for (long i = 0; i < k; ++i) Rk = R * Rk;
      return attention_mapped(last.tokens, h, Rk);
    }
    default:
      return attention_raw(last, h);
  }
}

AnalyzerOutcome boolean(const Trajectory& traj, AnalyzerOutcome out) {
  if (traj.spec.params.dim() != 1) fail(ErrorCode::InvalidArgument, "the boolean analyzer needs d = 1");
  const Matrix P = reorder_by_key(terminal_attention(traj), traj.terminal().tokens.col(0));
  const auto r = classify_boolean_limit(P, out.params.at("tol"));
  out.pass = r.in_P_class;
  Json rows = Json::array();
  for (auto k : r.rows) rows.push_back(row_kind_name(k));
  out.details = {{"in_P_class", r.in_P_class},
                 {"rank_estimate", r.rank_estimate},
                 {"max_deviation", r.max_deviation},
                 {"rows", rows},
                 {"free_row", r.free_row ? Json(*r.free_row) : Json(nullptr)},
                 {"diagnostics", r.diagnostics},
                 {"t", traj.terminal().t}};
  return out;
}

PolytopeOptions polytope_options(const std::map<std::string, double>& p) {
  PolytopeOptions o;
  o.cluster_eps = p.at("cluster_eps");
  o.stationary_tol = p.at("stationary_tol");
  return o;
}

AnalyzerOutcome polytope(const Trajectory& traj, AnalyzerOutcome out) {
  const Matrix A = sqrt_psd(qk_form(traj.spec.params.head()));
  const auto r = polytope_verdict(traj, A, out.params.at("eps"), polytope_options(out.params));
  out.pass = r.pass;
  out.details = polytope_json(r);
  return out;
}

AnalyzerOutcome hull(const Trajectory& traj, AnalyzerOutcome out) {
  const auto v = hull_shrinking_check(traj, out.params.at("tol"));
  out.pass = v.empty();
  Json list = Json::array();
  for (const auto& x : v) list.push_back({{"snapshot", x.snapshot}, {"token", x.token}, {"residual", x.residual}});
  out.details = {{"violations", list}, {"snapshots", traj.snapshots.size()}};
  return out;
}

AnalyzerOutcome hyperplane(const Trajectory& traj, AnalyzerOutcome out) {
  const auto tc = classify_triple(traj.spec.params.head());
  const auto r = hyperplane_verdict(traj, tc, out.params.at("eps"));
  out.pass = r.pass;
  out.details = {{"phi1", vec_json(r.phi1)},
                 {"levels", r.levels},
                 {"level_count", r.levels.size()},
                 {"assignment", r.assignment},
                 {"max_residual", r.max_residual},
                 {"initial_band", {r.initial_min, r.initial_max}},
                 {"within_initial_band", r.within_initial_band},
                 {"has_zero_level", r.has_zero_level}};
  return out;
}

double value_at(const std::vector<double>& times, const std::vector<double>& values, double t) {
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (std::abs(times[i] - t) <= 1e-9 * std::max(1.0, std::abs(t))) return values[i];
  }
  return std::nan("");
}

AnalyzerOutcome mixed(const Trajectory& traj, AnalyzerOutcome out) {
  const auto tc = classify_triple(traj.spec.params.head());
  const auto r = mixed_verdict(traj, tc, out.params.at("eps"), polytope_options(out.params));
  const double g_early = value_at(r.times, r.g_max_norm, out.params.at("t_early"));
  const double g_late = value_at(r.times, r.g_max_norm, out.params.at("t_late"));
  const bool checked = std::isfinite(g_early) && std::isfinite(g_late);
  const bool grows = checked && g_late >= out.params.at("growth") * g_early;
  out.pass = r.pass && (!checked || grows);
  out.details = {{"polytope_in_F", polytope_json(r.polytope)},
                 {"A_F", matrix_json(r.A_F)},
                 {"f_velocity", r.f_velocity},
                 {"fg_angle", tc.fg_angle},
                 {"times", r.times},
                 {"g_max_norm", r.g_max_norm},
                 {"growth_checked", checked},
                 {"g_early", checked ? Json(g_early) : Json(nullptr)},
                 {"g_late", checked ? Json(g_late) : Json(nullptr)},
                 {"growth_ratio", checked && g_early > 0.0 ? Json(g_late / g_early) : Json(nullptr)},
                 {"grows", grows}};
  return out;
}

AnalyzerOutcome collapse(const Trajectory& traj, AnalyzerOutcome out) {
  const double radius = out.params.at("radius");
  std::vector<double> times, norms;
  Json first_below = nullptr;
  for (const auto& s : traj.snapshots) {
    const double m = s.tokens.rowwise().norm().maxCoeff();
    times.push_back(s.t);
    norms.push_back(m);
    if (first_below.is_null() && m < radius) first_below = s.t;
  }
  out.pass = norms.back() < radius;
  out.details = {{"t", traj.terminal().t},
                 {"max_norm", norms.back()},
                 {"first_time_below_radius", first_below},
                 {"times", times},
                 {"max_norms", norms},
                 {"triple_kind", triple_kind_name(classify_triple(traj.spec.params.head()).kind)}};
  return out;
}

AnalyzerOutcome from_monitor(const MonitorLog& log, AnalyzerOutcome out) {
  out.pass = log.ok();
  if (log.advisory) out.gating = false;
  out.details = monitor_json(log);
  return out;
}

AnalyzerOutcome w2(const Trajectory& traj, const RunConfig& cfg, AnalyzerOutcome out) {
  const double seed = out.params.at("seed");
  if (seed < 0 || seed != std::floor(seed)) fail(ErrorCode::InvalidArgument, "seed must be a non-negative integer");
  RunConfig run = cfg;
  run.capture_attention = false;
  const auto log = monitor_w2_stability(traj.spec, traj.initial(), out.params.at("delta"), out.params.at("horizon"), run,
                                        static_cast<std::uint64_t>(seed));
  return from_monitor(log, std::move(out));
}

AnalyzerOutcome codimension(const Trajectory& traj, AnalyzerOutcome out) {
  const auto r = codimension_probe(traj, eig(traj.spec.params.head().V), out.params.at("eps"));
  Json dirs = Json::array();
  int positive = 0, concentrated = 0;
  for (const auto& d : r.directions) {
    if (d.eigenvalue.real() > 0.0) {
      ++positive;
      concentrated += d.concentrated;
    }
    dirs.push_back({{"index", d.index},
                    {"eigenvalue", {d.eigenvalue.real(), d.eigenvalue.imag()}},
                    {"initial_variance", d.variance.empty() ? 0.0 : d.variance.front()},
                    {"final_variance", d.final_variance},
                    {"final_mean", d.mean.empty() ? 0.0 : d.mean.back()},
                    {"final_levels", d.final_levels},
                    {"concentrated", d.concentrated},
                    {"growth", d.growth}});
  }
  out.pass = true;
  out.details = {{"positive_directions", positive}, {"concentrated", concentrated}, {"directions", dirs}};
  return out;
}

AnalyzerOutcome clusters(const Trajectory& traj, AnalyzerOutcome out) {
  const auto c = extract_clusters(traj.terminal().tokens, out.params.at("eps"));
  out.pass = true;
  out.details = clusters_json(c);
  out.details["t"] = traj.terminal().t;
  return out;
}

}  // namespace

AnalyzerOutcome run_analyzer(const Trajectory& traj, const AnalyzerRequest& req, const RunConfig& cfg) {
  const auto& info = find_analyzer(req.name);
  AnalyzerOutcome out;
  out.name = info.name;
  out.gating = info.gating;
  out.params = info.defaults;
  for (const auto& [k, v] : req.params) {
    const bool known = info.defaults.count(k) ||
                       std::find(info.optional.begin(), info.optional.end(), k) != info.optional.end();
    if (!known) fail(ErrorCode::InvalidArgument, "analyzer " + info.name + " has no threshold named '" + k + "'");
    out.params[k] = v;
  }
  if (traj.snapshots.empty()) fail(ErrorCode::MissingArtifacts, "trajectory has no snapshots");

  const auto& n = info.name;
  if (n == "boolean") return boolean(traj, std::move(out));
  if (n == "polytope") return polytope(traj, std::move(out));
  if (n == "hull") return hull(traj, std::move(out));
  if (n == "hyperplane") return hyperplane(traj, std::move(out));
  if (n == "mixed") return mixed(traj, std::move(out));
  if (n == "collapse") return collapse(traj, std::move(out));
  if (n == "lyapunov") return from_monitor(monitor_lyapunov(traj, opt(out.params, "tol")), std::move(out));
  if (n == "pairwise") return from_monitor(monitor_pairwise_distances(traj, opt(out.params, "tol")), std::move(out));
  if (n == "eigencoordinate") {
    const double k = out.params.at("k");
    if (k < 0 || k != std::floor(k)) fail(ErrorCode::InvalidArgument, "k must be a non-negative integer");
    const auto log = monitor_eigencoordinate_bounds(traj, eig(traj.spec.params.head().V), static_cast<Eigen::Index>(k),
                                                    opt(out.params, "tol"));
    return from_monitor(log, std::move(out));
  }
  if (n == "growth") {
    return from_monitor(monitor_growth_bound(traj, eig(traj.spec.params.head().V), opt(out.params, "slack")),
                        std::move(out));
  }
  if (n == "w2-stability") return w2(traj, cfg, std::move(out));
  if (n == "codimension") return codimension(traj, std::move(out));
  return clusters(traj, std::move(out));
}

bool AnalysisReport::pass() const {
  return std::all_of(outcomes.begin(), outcomes.end(), [](const AnalyzerOutcome& o) { return !o.gating || o.pass; });
}

Json AnalysisReport::to_json() const {
  Json j;
  j["format"] = "attnflow-report";
  j["version"] = 1;
  j["scenario"] = scenario;
  j["seed"] = seed;
  j["pass"] = pass();
  Json list = Json::array();
  for (const auto& o : outcomes) {
    list.push_back({{"name", o.name}, {"params", o.params}, {"gating", o.gating}, {"pass", o.pass}, {"details", o.details}});
  }
  j["analyzers"] = std::move(list);
  return j;
}

AnalysisReport analyze_run(const RunRecord& run, const std::vector<AnalyzerRequest>& requests) {
  AnalysisReport rep;
  rep.scenario = run.scenario.name;
  rep.seed = run.seed;
  const auto& list = requests.empty() ? run.scenario.analyzers : requests;
  for (const auto& req : list) rep.outcomes.push_back(run_analyzer(run.traj, req, run.scenario.cfg));
  return rep;
}

}  // namespace attnflow
