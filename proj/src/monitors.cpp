#include "attnflow/monitors.hpp"

#include "attnflow/error.hpp"
#include "attnflow/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace attnflow {

double monotone_tolerance(double dt, double scale) { return 10.0 * std::pow(dt, 5) * std::max(1.0, std::abs(scale)); }

namespace {

bool is_identity(const Matrix& M, double tol = 1e-12) {
  return M.rows() == M.cols() && (M - Matrix::Identity(M.rows(), M.cols())).cwiseAbs().maxCoeff() <= tol;
}

long steps_between(const Trajectory& traj, double t0, double t1) {
  const double dt = traj.spec.params.dt;
  return std::max(1L, std::lround((t1 - t0) / dt));
}

double step_tol(const Trajectory& traj, std::optional<double> tol, double t0, double t1, double scale) {
  if (tol) return *tol;
  return monotone_tolerance(traj.spec.params.dt, scale) * static_cast<double>(steps_between(traj, t0, t1));
}

// Flags increases (sign = +1) or decreases (sign = -1) of column c beyond tolerance.
void scan_monotone(const Trajectory& traj, MonitorLog& log, std::size_t c, int sign, std::optional<double> tol) {
  for (std::size_t s = 1; s < log.samples.size(); ++s) {
    const auto& a = log.samples[s - 1];
    const auto& b = log.samples[s];
    const double change = sign * (b.values[c] - a.values[c]);
    const double scale = std::max(std::abs(a.values[c]), std::abs(b.values[c]));
    const double allowed = step_tol(traj, tol, a.t, b.t, scale);
    if (change > allowed) log.violations.push_back({a.t, b.t, change, c});
  }
}

// Raw-frame coordinates of the snapshot: rescaled runs store z, so x = e^{tV} z.
Matrix raw_frame(const Trajectory& traj, const TokenEnsemble& s) {
  if (!is_rescaled(traj.spec.variant)) return s.tokens;
  return s.tokens * expm(traj.spec.params.head().V, s.t).transpose();
}

}  // namespace

MonitorLog monitor_pairwise_distances(const Trajectory& traj, std::optional<double> tol) {
  MonitorLog log;
  log.name = "pairwise_distances";
  log.columns = {"min_pair_distance"};
  const auto& p = traj.spec.params;
  const bool guaranteed = traj.spec.variant == Variant::RawContinuous && p.heads.size() == 1 &&
                          is_identity(p.head().Q) && is_identity(p.head().K) && is_identity(p.head().V);
  if (!guaranteed) {
    log.advisory = true;
    log.note = "non-decrease is only guaranteed for raw dynamics with Q = K = V = I";
  }
  for (const auto& s : traj.snapshots) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < s.size(); ++i)
      for (Eigen::Index j = i + 1; j < s.size(); ++j) best = std::min(best, (s.tokens.row(i) - s.tokens.row(j)).norm());
    if (s.size() < 2) continue;  // no pairs
    log.samples.push_back({s.t, {best}});
  }
  scan_monotone(traj, log, 0, -1, tol);
  return log;
}

MonitorLog monitor_eigencoordinate_bounds(const Trajectory& traj, const SpectralData& sd, Eigen::Index k,
                                          std::optional<double> tol) {
  if (k < 0 || k >= sd.dim()) fail(ErrorCode::InvalidArgument, "eigen index out of range");
  if (!sd.is_real(k)) {
    fail(ErrorCode::ComplexEigenvalue, "eigenvalue " + std::to_string(k) + " is not real");
  }
  const double lambda = sd.eigenvalues(k).real();
  if (lambda < 0.0) fail(ErrorCode::InvalidArgument, "eigencoordinate bounds need lambda_k >= 0");
  MonitorLog log;
  log.name = "eigencoordinate_bounds";
  log.columns = {"min", "max"};
  if (traj.spec.variant != Variant::RescaledContinuous) {
    log.advisory = true;
    log.note = "bounds are only guaranteed for the rescaled continuous dynamics";
  }
  for (const auto& s : traj.snapshots) {
    const Vector c = sd.dual_coordinates(k, s.tokens);
    log.samples.push_back({s.t, {c.minCoeff(), c.maxCoeff()}});
  }
  scan_monotone(traj, log, 0, -1, tol);
  scan_monotone(traj, log, 1, +1, tol);
  return log;
}

MonitorLog monitor_growth_bound(const Trajectory& traj, const SpectralData& sd, std::optional<double> slack) {
  MonitorLog log;
  log.name = "growth_bound";
  const double sl = slack.value_or(sd.diagonalizable ? 0.0 : 1e-3);
  for (Eigen::Index k = 0; k < sd.dim(); ++k) log.columns.push_back("r_" + std::to_string(k));
  if (is_discrete(traj.spec.variant)) {
    log.advisory = true;
    log.note = "bound is stated for the continuous flow";
  }
  for (const auto& s : traj.snapshots) {
    Matrix x;
    try {
      x = raw_frame(traj, s);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::OverflowGuard) throw;
      log.note = "stopped at t=" + std::to_string(s.t) + ": " + e.what();
      break;
    }
    const ComplexMatrix proj = x.cast<Complex>() * sd.dual_basis.transpose();
    MonitorSample sample{s.t, {}};
    for (Eigen::Index k = 0; k < sd.dim(); ++k) {
      const double m = proj.col(k).cwiseAbs().maxCoeff();
      sample.values.push_back(m * std::exp(-(std::abs(sd.eigenvalues(k)) + sl) * s.t));
    }
    log.samples.push_back(std::move(sample));
  }
  if (log.samples.empty()) return log;
  const auto& first = log.samples.front();
  for (std::size_t s = 1; s < log.samples.size(); ++s) {
    for (std::size_t k = 0; k < log.columns.size(); ++k) {
      const double r0 = first.values[k];
      const double r = log.samples[s].values[k];
      const double bound = 10.0 * r0 + 1e-12;
      if (r > bound) log.violations.push_back({first.t, log.samples[s].t, r - bound, k});
    }
  }
  return log;
}

MonitorLog monitor_lyapunov(const Trajectory& traj, std::optional<double> tol) {
  const auto& p = traj.spec.params;
  const bool ok = traj.spec.variant == Variant::RawContinuous && p.heads.size() == 1 &&
                  is_identity(-p.head().V) && is_identity(p.head().Q.transpose() * p.head().K);
  if (!ok) fail(ErrorCode::WrongVariant, "the Lyapunov functional needs raw dynamics with V = -I and Q^T K = I");
  MonitorLog log;
  log.name = "lyapunov";
  log.columns = {"L"};
  for (const auto& s : traj.snapshots) {
    const Matrix G = s.tokens * s.tokens.transpose();
    log.samples.push_back({s.t, {G.array().exp().sum()}});
  }
  scan_monotone(traj, log, 0, +1, tol);
  return log;
}

TokenEnsemble perturb_tokens(const TokenEnsemble& e, double delta, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif;
  TokenEnsemble out = e;
  const auto d = static_cast<double>(e.dim());
  for (Eigen::Index i = 0; i < e.size(); ++i) {
    Vector dir(e.dim());
    double norm = 0.0;
    while (norm == 0.0) {
      for (Eigen::Index c = 0; c < e.dim(); ++c) dir(c) = gauss(rng);
      norm = dir.norm();
    }
    const double radius = delta * std::pow(unif(rng), 1.0 / d);
    out.tokens.row(i) += (radius / norm) * dir.transpose();
  }
  return out;
}

MonitorLog monitor_w2_pair(const DynamicsSpec& spec, const TokenEnsemble& a, const TokenEnsemble& b, double horizon,
                           const RunConfig& cfg) {
  const double w0 = w2_empirical(a, b);
  if (!(w0 > 0.0)) fail(ErrorCode::ZeroPerturbation, "the two ensembles coincide as measures (W2 = 0)");
  RunConfig run = cfg;
  run.t_end = horizon;
  run.velocity_stop_tol.reset();
  const auto ta = integrate(spec, a, run);
  const auto tb = integrate(spec, b, run);

  MonitorLog log;
  log.name = "w2_stability";
  log.columns = {"g", "log_ratio"};
  const std::size_t count = std::min(ta.snapshots.size(), tb.snapshots.size());
  std::vector<double> ts, ls;
  for (std::size_t s = 1; s < count; ++s) {
    const double t = ta.snapshots[s].t;
    if (!(t > 0.0)) continue;
    const double l = std::log(w2_empirical(ta.snapshots[s], tb.snapshots[s]) / w0);
    log.samples.push_back({t, {l / t, l}});
    if (!std::isfinite(l)) continue;  // the two runs met exactly
    ts.push_back(t);
    ls.push_back(l);
  }
  if (ts.size() < 2) return log;

  // Affine fit l(t) ~ a0 + a1 t; the rate g(t) may not exceed 1.5 |a1|.
  const double nt = static_cast<double>(ts.size());
  double st = 0, sl = 0, stt = 0, stl = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    st += ts[i];
    sl += ls[i];
    stt += ts[i] * ts[i];
    stl += ts[i] * ls[i];
  }
  const double den = nt * stt - st * st;
  const double a1 = den != 0.0 ? (nt * stl - st * sl) / den : 0.0;
  const double a0 = (sl - a1 * st) / nt;
  log.note = "fit intercept " + std::to_string(a0) + ", slope " + std::to_string(a1);
  const double bound = 1.5 * std::abs(a1) + 1e-9;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double g = ls[i] / ts[i];
    if (g > bound) log.violations.push_back({0.0, ts[i], g - bound, 0});
  }
  return log;
}

MonitorLog monitor_w2_stability(const DynamicsSpec& spec, const TokenEnsemble& init, double delta, double horizon,
                                const RunConfig& cfg, std::uint64_t seed) {
  if (!(delta > 0.0)) fail(ErrorCode::ZeroPerturbation, "perturbation size must be positive");
  return monitor_w2_pair(spec, init, perturb_tokens(init, delta, seed), horizon, cfg);
}

}  // namespace attnflow
