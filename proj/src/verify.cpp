#include "attnflow/verify.hpp"

#include "attnflow/analysis.hpp"
#include "attnflow/error.hpp"
#include "attnflow/experiments.hpp"
#include "attnflow/geometry.hpp"
#include "attnflow/monitors.hpp"
#include "attnflow/oracles.hpp"
#include "attnflow/spectral.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numbers>
#include <sstream>
#include <thread>

namespace attnflow {

bool VerifySummary::pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

Json VerifySummary::to_json() const {
  Json j;
  j["format"] = "attnflow-verify";
  j["version"] = 1;
  j["suite"] = suite;
  j["pass"] = pass();
  j["seconds"] = seconds;
  int failed = 0;
  Json list = Json::array();
  for (const auto& c : checks) {
    failed += !c.pass;
    list.push_back({{"suite", c.suite},
                    {"name", c.name},
                    {"pass", c.pass},
                    {"detail", c.detail},
                    {"tolerance", c.tolerance},
                    {"seconds", c.seconds},
                    {"metrics", c.metrics}});
  }
  j["total"] = checks.size();
  j["failed"] = failed;
  j["checks"] = std::move(list);
  return j;
}

const std::vector<std::string>& verify_suites() {
  static const std::vector<std::string> names = {"monotone", "oracles", "numerics", "scenarios", "all"};
  return names;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

CheckResult make(bool pass, double tol, std::string detail, Json metrics = Json::object()) {
  CheckResult r;
  r.pass = pass;
  r.tolerance = tol;
  r.detail = std::move(detail);
  r.metrics = std::move(metrics);
  return r;
}

std::string fmt(double x) {
  std::ostringstream o;
  o.precision(3);
  o << x;
  return o.str();
}

Trajectory run(const DynamicsSpec& spec, const Matrix& z, double t_end, double dt, int stride = 1) {
  RunConfig cfg;
  cfg.t_end = t_end;
  cfg.dt = dt;
  cfg.snapshot_stride = stride;
  return integrate(spec, {0.0, z}, cfg);
}

std::string violations_text(const MonitorLog& log) {
  if (log.ok()) return log.name + ": 0 violations over " + std::to_string(log.samples.size()) + " samples";
  const auto worst = std::max_element(log.violations.begin(), log.violations.end(),
                                      [](const auto& a, const auto& b) { return a.delta < b.delta; });
  return log.name + ": " + std::to_string(log.violations.size()) + " violations, worst " + fmt(worst->delta) +
         " on [" + fmt(worst->t0) + ", " + fmt(worst->t1) + "]";
}

DynamicsSpec good_triple_spec(Variant v) {
  const auto& s = find_scenario("hyperplane_2d");
  return make_spec(v, s.spec.params.head().Q, s.spec.params.head().K, s.spec.params.head().V);
}

// --- monotone ---------------------------------------------------------------

constexpr double kMonotoneDt = 0.01;

CheckResult pairwise_pair() {
  const auto spec = make_spec(Variant::RawContinuous, Matrix::Identity(1, 1), Matrix::Identity(1, 1),
                              Matrix::Identity(1, 1));
  Matrix x(2, 1);
  x << -1.0, 1.0;
  const auto log = monitor_pairwise_distances(run(spec, x, 3.0, kMonotoneDt));
  bool strict = true;
  for (std::size_t s = 1; s < log.samples.size(); ++s) strict &= log.samples[s].values[0] > log.samples[s - 1].values[0];
  return make(log.ok() && !log.advisory && strict, monotone_tolerance(kMonotoneDt, 1.0),
              violations_text(log) + (strict ? ", strictly increasing" : ", not strictly increasing"));
}

CheckResult pairwise_random() {
  const auto spec = make_spec(Variant::RawContinuous, Matrix::Identity(3, 3), Matrix::Identity(3, 3),
                              Matrix::Identity(3, 3));
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto log = monitor_pairwise_distances(run(spec, sample_init(10, 3, seed, 1.0).tokens, 2.0, kMonotoneDt));
    ok &= log.ok() && !log.advisory;
    if (!log.ok()) detail = "seed " + std::to_string(seed) + ": " + violations_text(log);
  }
  return make(ok, monotone_tolerance(kMonotoneDt, 1.0), ok ? "5 runs, 0 violations" : detail);
}

CheckResult eigencoordinate() {
  const auto spec = good_triple_spec(Variant::RescaledContinuous);
  const auto sd = eig(spec.params.head().V);
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto traj = run(spec, sample_init(40, 2, seed).tokens, 10.0, kMonotoneDt);
    const auto strict = monitor_eigencoordinate_bounds(traj, sd, 0, 1e-8);
    const auto autotol = monitor_eigencoordinate_bounds(traj, sd, 0);
    ok &= strict.ok() && autotol.ok() && !strict.advisory;
    if (!strict.ok()) detail = "seed " + std::to_string(seed) + ": " + violations_text(strict);
    if (!autotol.ok()) detail = "seed " + std::to_string(seed) + ": " + violations_text(autotol);
  }
  return make(ok, 1e-8, ok ? "3 runs to t=10, 0 violations at tol 1e-8 and at the step tolerance" : detail);
}

CheckResult growth() {
  const auto spec = good_triple_spec(Variant::RescaledContinuous);
  const auto sd = eig(spec.params.head().V);
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto log = monitor_growth_bound(run(spec, sample_init(40, 2, seed).tokens, 10.0, kMonotoneDt), sd);
    ok &= log.ok();
    if (!log.ok()) detail = "seed " + std::to_string(seed) + ": " + violations_text(log);
  }
  return make(ok, 10.0, ok ? "3 runs to t=10, r_k(t) <= 10 r_k(0) throughout" : detail);
}

CheckResult lyapunov() {
  const auto spec = make_spec(Variant::RawContinuous, Matrix::Identity(2, 2), Matrix::Identity(2, 2),
                              -Matrix::Identity(2, 2));
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto traj = run(spec, sample_init(4, 2, seed, 1.0).tokens, 20.0, kMonotoneDt);
    const auto log = monitor_lyapunov(traj);
    ok &= log.ok();
    if (!log.ok()) detail = "seed " + std::to_string(seed) + ": " + violations_text(log);
    // Strict decrease while the tokens are still away from the origin.
    for (std::size_t s = 1; s < log.samples.size(); ++s) {
      if (traj.snapshots[s - 1].tokens.rowwise().norm().maxCoeff() < 1e-3) break;
      if (!(log.samples[s].values[0] < log.samples[s - 1].values[0])) {
        ok = false;
        detail = "seed " + std::to_string(seed) + ": not strictly decreasing at t=" + fmt(log.samples[s].t);
        break;
      }
    }
  }
  return make(ok, monotone_tolerance(kMonotoneDt, 16.0), ok ? "5 runs to t=20, strictly decreasing" : detail);
}

CheckResult hull() {
  const auto spec = make_spec(Variant::RescaledContinuous, Matrix::Identity(3, 3), Matrix::Identity(3, 3),
                              Matrix::Identity(3, 3));
  const auto v = hull_shrinking_check(run(spec, sample_init(20, 3, 3).tokens, 10.0, kMonotoneDt, 10), 1e-7);
  return make(v.empty(), 1e-7,
              v.empty() ? "V = Q = K = I3, t in [0,10], 0 violations"
                        : std::to_string(v.size()) + " violations, first at snapshot " + std::to_string(v.front().snapshot));
}

CheckResult w2_stability() {
  int failures = 0;
  double worst = 0.0;
  for (std::uint64_t k = 0; k < 10; ++k) {
    Matrix V;
    for (std::uint64_t r = 0;; ++r) {
      V = sample_matrix(2, 2, 1000 + 17 * k + r);
      if (leading_eigenvalue_good(eigenvalues(V))) break;
    }
    const auto spec = make_spec(Variant::RawContinuous, Matrix::Identity(2, 2), Matrix::Identity(2, 2), V);
    RunConfig cfg;
    cfg.dt = kMonotoneDt;
    const auto log = monitor_w2_stability(spec, sample_init(8, 2, 2000 + k, 1.0), 1e-4, 2.0, cfg, 3000 + k);
    failures += !log.ok();
    for (const auto& s : log.samples) worst = std::max(worst, s.values[0]);
  }
  return make(failures == 0, 0.5, std::to_string(10 - failures) + "/10 instances within the envelope",
              {{"max_g", worst}});
}

// --- oracles ----------------------------------------------------------------

Matrix rows2(std::initializer_list<std::pair<double, double>> pts) {
  Matrix M(static_cast<Eigen::Index>(pts.size()), 2);
  Eigen::Index i = 0;
  for (auto [x, y] : pts) {
    M(i, 0) = x;
    M(i, 1) = y;
    ++i;
  }
  return M;
}

CheckResult grid_square() {
  const Matrix square = rows2({{1, 1}, {1, -1}, {-1, -1}, {-1, 1}});
  const auto s = limit_set_S(square, Matrix::Identity(2, 2));
  const auto g = oracle::grid_limit_set_check(square, Matrix::Identity(2, 2), s.points);
  const bool ok = g.match && s.points.rows() == 9;
  return make(ok, 2e-3,
              "|S| = " + std::to_string(s.points.rows()) + ", grid hits " + std::to_string(g.grid_hits) +
                  (g.match ? ", sets match" : ", sets differ"),
              {{"hit_to_reported", g.hit_to_reported}, {"reported_to_hit", g.reported_to_hit}});
}

CheckResult grid_instances() {
  struct Case {
    Matrix V;
    Matrix A;
  };
  Matrix A2(2, 2);
  A2 << 1.0, 0.0, 0.0, 2.0;
  const std::vector<Case> cases = {
      {rows2({{2.0, 1.0}, {2.0, -1.0}, {-2.0, -1.0}, {-2.0, 1.0}, {0.0, 0.5}}), A2},
      {rows2({{1.0, 1.0}, {1.0, -1.0}}), Matrix::Identity(2, 2)},
      {rows2({{0.5, 0.0}, {-1.0, 0.0}, {0.0, 1.0}}), Matrix::Identity(2, 2)},
      {(Matrix(3, 1) << -1.0, 0.25, 2.0).finished(), Matrix::Identity(1, 1)},
  };
  int mismatches = 0;
  std::string detail;
  for (std::size_t c = 0; c < cases.size(); ++c) {
    const auto s = limit_set_S(cases[c].V, cases[c].A);
    const auto g = oracle::grid_limit_set_check(cases[c].V, cases[c].A, s.points);
    if (!g.match) {
      ++mismatches;
      detail += " case " + std::to_string(c) + " differs;";
    }
  }
  return make(mismatches == 0, 2e-3,
              mismatches == 0 ? std::to_string(cases.size()) + " grid-aligned instances match" : detail);
}

CheckResult w2_brute_force() {
  int mismatches = 0, total = 0;
  for (std::uint64_t trial = 0; trial < 70; ++trial) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(trial % 7);
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(trial % 3);
    const Matrix a = sample_matrix(n, d, 500 + 2 * trial);
    const Matrix b = sample_matrix(n, d, 501 + 2 * trial);
    ++total;
    if (w2_empirical(a, b) != oracle::brute_force_w2(a, b)) ++mismatches;
  }
  return make(mismatches == 0, 0.0, std::to_string(total - mismatches) + "/" + std::to_string(total) +
                                        " instances (n <= 7) equal the permutation minimum exactly");
}

CheckResult w2_metric() {
  int bad = 0;
  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(trial % 10);
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(trial % 4);
    const Matrix a = sample_matrix(n, d, 900 + 3 * trial);
    const Matrix b = sample_matrix(n, d, 901 + 3 * trial);
    const Matrix c = sample_matrix(n, d, 902 + 3 * trial);
    const double ab = w2_empirical(a, b), ba = w2_empirical(b, a);
    const double bc = w2_empirical(b, c), ac = w2_empirical(a, c);
    if (std::abs(ab - ba) > 1e-12 * std::max(1.0, ab)) ++bad;
    if (ac > ab + bc + 1e-12) ++bad;
  }
  return make(bad == 0, 1e-12, bad == 0 ? "symmetry and triangle inequality on 50 instances" : std::to_string(bad) + " failures");
}

CheckResult nnls_barycentric() {
  int disagreements = 0;
  for (std::uint64_t trial = 0; trial < 200; ++trial) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(trial % 3);
    const Eigen::Index m = 1 + static_cast<Eigen::Index>((trial / 3) % 4);
    const Matrix S = sample_matrix(m, d, 7000 + 2 * trial);
    const Vector x = 1.2 * sample_matrix(d, 1, 7001 + 2 * trial);
    const double dist = oracle::barycentric_distance(x, S);
    const auto got = convex_membership(x, S, 1e-9);
    if (got.member != (dist <= 1e-9) || std::abs(got.residual - dist) > 1e-7) ++disagreements;
  }
  return make(disagreements == 0, 1e-9, std::to_string(200 - disagreements) + "/200 instances agree");
}

// --- numerics ---------------------------------------------------------------

DynamicsSpec random_spec(Variant v, Eigen::Index d, std::uint64_t seed) {
  return make_spec(v, sample_matrix(d, d, seed), sample_matrix(d, d, seed + 1), sample_matrix(d, d, seed + 2));
}

CheckResult rk4_order() {
  const auto spec = random_spec(Variant::RescaledContinuous, 2, 11);
  const Matrix init = sample_init(4, 2, 12, 2.0).tokens;
  auto terminal = [&](double dt) { return run(spec, init, 1.0, dt, 1000000).terminal().tokens; };
  const Matrix ref = terminal(0.00625);
  const double e1 = (terminal(0.05) - ref).norm();
  const double e2 = (terminal(0.025) - ref).norm();
  const double ratio = e1 / e2;
  const double order = std::log2(ratio);
  const bool ok = ratio >= 12.0 && ratio <= 20.0 && order >= 3.5 && order <= 4.5;
  return make(ok, 0.5, "error ratio " + fmt(ratio) + ", observed order " + fmt(order),
              {{"e_0.05", e1}, {"e_0.025", e2}, {"ratio", ratio}, {"order", order}});
}

CheckResult rk4_scalar() {
  const auto spec = make_spec(Variant::RawContinuous, Matrix::Identity(1, 1), Matrix::Identity(1, 1),
                              Matrix::Identity(1, 1));
  const double y = run(spec, Matrix::Constant(1, 1, 1.0), 0.1, 0.1).terminal().tokens(0, 0);
  const double expected = 1.0 + 0.1 + 0.01 / 2 + 0.001 / 6 + 0.0001 / 24;
  return make(std::abs(y - expected) <= 1e-15, 1e-15, "one step factor " + format_real(y));
}

CheckResult expm_checks() {
  double worst_closed = 0.0, worst_semi = 0.0;
  Matrix D = Matrix::Zero(3, 3);
  D.diagonal() << 1.0, -0.5, 2.0;
  const Matrix ED = expm(D, 1.5);
  for (int k = 0; k < 3; ++k) {
    worst_closed = std::max(worst_closed, std::abs(ED(k, k) - std::exp(1.5 * D(k, k))) / std::exp(1.5 * D(k, k)));
  }
  Matrix J(2, 2);
  J << 0.0, -1.0, 1.0, 0.0;
  for (double t : {0.3, 1.0, std::numbers::pi / 2, 4.0}) {
    Matrix rot(2, 2);
    rot << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
    worst_closed = std::max(worst_closed, (expm(J, t) - rot).cwiseAbs().maxCoeff());
  }
  Matrix N(2, 2);
  N << 0.0, 1.0, 0.0, 0.0;
  worst_closed = std::max(worst_closed, (expm(N, 2.5) - (Matrix(2, 2) << 1.0, 2.5, 0.0, 1.0).finished()).cwiseAbs().maxCoeff());

  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(trial % 6);
    const Matrix W = sample_matrix(d, d, 300 + trial);
    const double scale = 5.0 / std::max(1e-12, op_norm(W));
    const Matrix lhs = expm(W, 1.6 * scale);
    const Matrix rhs = expm(W, 0.7 * scale) * expm(W, 0.9 * scale);
    worst_semi = std::max(worst_semi, op_norm(lhs - rhs) / op_norm(lhs));
  }
  const bool ok = worst_closed <= 1e-8 && worst_semi <= 1e-8;
  return make(ok, 1e-8, "closed forms " + fmt(worst_closed) + ", semigroup " + fmt(worst_semi),
              {{"closed_form_error", worst_closed}, {"semigroup_error", worst_semi}});
}

CheckResult eig_checks() {
  double worst = 0.0, worst_roots = 0.0;
  for (std::uint64_t trial = 0; trial < 40; ++trial) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(trial % 12);
    const Matrix V = sample_matrix(d, d, 400 + trial);
    const auto sd = eig(V);
    if (!sd.diagonalizable) continue;
    const ComplexMatrix rec = sd.right_eigenvectors * sd.eigenvalues.asDiagonal() * sd.dual_basis;
    const Matrix err = (rec - V.cast<Complex>()).cwiseAbs();
    worst = std::max(worst, op_norm(err) / std::max(1e-300, op_norm(V)));
  }
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(trial % 4);
    const Matrix V = sample_symmetric(d, 450 + trial);
    const auto roots = oracle::symmetric_charpoly_roots(V);
    const auto ev = eigenvalues(V);
    std::vector<double> ours;
    for (Eigen::Index k = 0; k < d; ++k) ours.push_back(ev(k).real());
    std::sort(ours.begin(), ours.end());
    if (roots.size() != ours.size()) {
      worst_roots = std::numeric_limits<double>::infinity();
      continue;
    }
    for (std::size_t k = 0; k < ours.size(); ++k) worst_roots = std::max(worst_roots, std::abs(ours[k] - roots[k]));
  }
  const bool ok = worst <= 1e-6 && worst_roots <= 1e-8;
  return make(ok, 1e-6, "reconstruction " + fmt(worst) + " (relative), characteristic roots " + fmt(worst_roots),
              {{"reconstruction", worst}, {"charpoly_roots", worst_roots}});
}

CheckResult rescaling_consistency() {
  double worst = 0.0;
  for (std::uint64_t trial = 0; trial < 3; ++trial) {
    const auto raw = random_spec(Variant::RawContinuous, 2, 600 + 3 * trial);
    auto resc = raw;
    resc.variant = Variant::RescaledContinuous;
    const Matrix init = sample_init(5, 2, 610 + trial, 1.0).tokens;
    const auto a = run(raw, init, 5.0, 0.01, 10);
    const auto b = run(resc, init, 5.0, 0.01, 10);
    const std::size_t count = std::min(a.snapshots.size(), b.snapshots.size());
    for (std::size_t s = 0; s < count; ++s) {
      const Matrix mapped = b.snapshots[s].tokens * expm(raw.params.head().V, b.snapshots[s].t).transpose();
      for (Eigen::Index i = 0; i < mapped.rows(); ++i) {
        const double x = a.snapshots[s].tokens.row(i).norm();
        worst = std::max(worst, (a.snapshots[s].tokens.row(i) - mapped.row(i)).norm() / (1.0 + x));
      }
    }
    if (a.snapshots.size() != b.snapshots.size()) worst = std::numeric_limits<double>::infinity();
  }
  return make(worst <= 1e-6, 1e-6, "max |x - e^{tV} z| / (1 + |x|) = " + fmt(worst), {{"error", worst}});
}

CheckResult permutation_equivariance() {
  double worst = 0.0;
  std::uint64_t seed = 700;
  for (Variant v : {Variant::RawContinuous, Variant::RescaledContinuous, Variant::RawDiscrete, Variant::RescaledDiscrete,
                    Variant::FeedForwardRescaled, Variant::MultiheadDiscrete}) {
    auto spec = random_spec(v, 2, seed);
    seed += 10;
    if (v == Variant::FeedForwardRescaled) {
      spec.params.feedforward = FeedForward{sample_matrix(2, 2, seed), Vector::Constant(2, 0.1), Activation::Tanh, true};
    }
    if (v == Variant::MultiheadDiscrete) spec.params.heads.push_back(random_spec(v, 2, seed + 5).params.head());
    const TokenEnsemble init = sample_init(5, 2, seed + 7, 1.0);
    const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
    RunConfig cfg;
    cfg.t_end = 2.0;
    const auto a = integrate(spec, init, cfg);
    const auto b = integrate(spec, permute_tokens(init, perm), cfg);
    if (a.snapshots.size() != b.snapshots.size()) return make(false, 1e-9, std::string(variant_name(v)) + ": lengths differ");
    for (std::size_t s = 0; s < a.snapshots.size(); ++s) {
      worst = std::max(worst, (permute_tokens(a.snapshots[s], perm).tokens - b.snapshots[s].tokens).cwiseAbs().maxCoeff());
    }
  }
  return make(worst <= 1e-9, 1e-9, "all six variants, max deviation " + fmt(worst), {{"error", worst}});
}

CheckResult orthogonal_equivariance() {
  double worst = 0.0;
  std::uint64_t seed = 800;
  for (Variant v : {Variant::RawContinuous, Variant::RescaledContinuous}) {
    const auto spec = random_spec(v, 3, seed);
    Eigen::HouseholderQR<Matrix> qr(sample_matrix(3, 3, seed + 3));
    const Matrix U = qr.householderQ() * Matrix::Identity(3, 3);
    const auto& h = spec.params.head();
    const auto rot = make_spec(v, h.Q * U.transpose(), h.K * U.transpose(), U * h.V * U.transpose());
    const Matrix init = sample_init(6, 3, seed + 4, 1.0).tokens;
    const auto a = run(spec, init, 5.0, 0.1);
    const auto b = run(rot, init * U.transpose(), 5.0, 0.1);
    if (a.snapshots.size() != b.snapshots.size()) return make(false, 1e-8, "lengths differ");
    for (std::size_t s = 0; s < a.snapshots.size(); ++s) {
      const Matrix ua = a.snapshots[s].tokens * U.transpose();
      worst = std::max(worst, (ua - b.snapshots[s].tokens).cwiseAbs().maxCoeff() / std::max(1.0, ua.cwiseAbs().maxCoeff()));
    }
    seed += 10;
  }
  return make(worst <= 1e-8, 1e-8, "raw and rescaled over t in [0,5], max relative deviation " + fmt(worst),
              {{"error", worst}});
}

// --- scenarios --------------------------------------------------------------

CheckResult scenario_check(const Scenario& s) {
  const double limit = s.name == "highdim" ? 600.0 : 60.0;
  const fs::path dir = fs::temp_directory_path() /
                       ("attnflow-verify-" + std::to_string(::getpid())) / s.name;
  const auto t0 = Clock::now();
  const auto traj = run_scenario(s, 0);
  const double run_seconds = seconds_since(t0);
  write_run_dir(dir, s, 0, traj, run_seconds);
  const auto back = read_run_dir(dir);
  const auto report = analyze_run(back);
  atomic_write(dir / "report.json", report.to_json().dump(2) + "\n");
  const double total = seconds_since(t0);

  const std::string csv = trajectory_csv(traj);
  const bool roundtrip = trajectory_csv(back.traj) == csv;
  const bool reproducible = trajectory_csv(run_scenario(s, 0)) == csv;
  const bool completed = traj.stop_reason != StopReason::OverflowGuard;
  const bool complete_report = report.outcomes.size() == s.analyzers.size();
  std::error_code ec;
  fs::remove_all(dir, ec);

  const bool ok = completed && roundtrip && reproducible && complete_report && total < limit;
  std::string detail = std::string(stop_reason_name(traj.stop_reason)) + " at t=" + fmt(traj.terminal().t) + ", " +
                       fmt(total) + " s, verdict " + (report.pass() ? "pass" : "fail");
  if (!roundtrip) detail += ", CSV round trip differs";
  if (!reproducible) detail += ", rerun differs";
  Json verdicts = Json::object();
  for (const auto& o : report.outcomes) verdicts[o.name] = o.pass;
  return make(ok, limit, detail,
              {{"seconds", total}, {"run_seconds", run_seconds}, {"verdict", report.pass()}, {"analyzers", verdicts}});
}

void add(std::vector<NamedCheck>& out, const std::string& suite, const std::string& name,
         std::function<CheckResult()> f) {
  out.push_back({suite, name, std::move(f)});
}

}  // namespace

std::vector<NamedCheck> suite_checks(const std::string& suite) {
  if (std::find(verify_suites().begin(), verify_suites().end(), suite) == verify_suites().end()) {
    std::string known;
    for (const auto& s : verify_suites()) known += (known.empty() ? "" : ", ") + s;
    fail(ErrorCode::UnknownSuite, "unknown suite '" + suite + "'; valid suites: " + known);
  }
  const bool all = suite == "all";
  std::vector<NamedCheck> out;
  if (all || suite == "monotone") {
    add(out, "monotone", "pairwise_distances_two_tokens", pairwise_pair);
    add(out, "monotone", "pairwise_distances_random", pairwise_random);
    add(out, "monotone", "eigencoordinate_bounds_good_triple", eigencoordinate);
    add(out, "monotone", "growth_bound_good_triple", growth);
    add(out, "monotone", "lyapunov_negative_identity", lyapunov);
    add(out, "monotone", "hull_shrinking_identity", hull);
    add(out, "monotone", "w2_stability_10_instances", w2_stability);
  }
  if (all || suite == "oracles") {
    add(out, "oracles", "limit_set_unit_square", grid_square);
    add(out, "oracles", "limit_set_grid_instances", grid_instances);
    add(out, "oracles", "w2_brute_force", w2_brute_force);
    add(out, "oracles", "w2_metric_properties", w2_metric);
    add(out, "oracles", "membership_barycentric", nnls_barycentric);
  }
  if (all || suite == "numerics") {
    add(out, "numerics", "rk4_scalar_step", rk4_scalar);
    add(out, "numerics", "rk4_self_convergence", rk4_order);
    add(out, "numerics", "expm_closed_forms_and_semigroup", expm_checks);
    add(out, "numerics", "eig_reconstruction", eig_checks);
    add(out, "numerics", "rescaling_consistency", rescaling_consistency);
    add(out, "numerics", "permutation_equivariance", permutation_equivariance);
    add(out, "numerics", "orthogonal_equivariance", orthogonal_equivariance);
  }
  if (all || suite == "scenarios") {
    for (const auto& s : builtin_scenarios()) {
      add(out, "scenarios", s.name, [&s] { return scenario_check(s); });
    }
  }
  return out;
}

VerifySummary run_verify(const std::string& suite, unsigned threads) {
  auto checks = suite_checks(suite);
  VerifySummary summary;
  summary.suite = suite;
  summary.checks.resize(checks.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, checks.size())));

  const auto t0 = Clock::now();
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < checks.size(); i = next++) {
      const auto c0 = Clock::now();
      CheckResult r;
      try {
        r = checks[i].run();
      } catch (const Error& e) {
        r = make(false, 0.0, std::string(error_code_name(e.code())) + ": " + e.what());
      } catch (const std::exception& e) {
        r = make(false, 0.0, e.what());
      }
      r.suite = checks[i].suite;
      r.name = checks[i].name;
      r.seconds = seconds_since(c0);
      summary.checks[i] = std::move(r);
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  summary.seconds = seconds_since(t0);
  return summary;
}

}  // namespace attnflow
