#pragma once

// Invariant trackers evaluated over a finished trajectory. None of them
// touch the trajectory itself.

#include "attnflow/dynamics.hpp"
#include "attnflow/spectral.hpp"
#include "attnflow/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace attnflow {

struct MonitorSample {
  double t = 0.0;
  std::vector<double> values;  // one per column
};

struct MonitorViolation {
  double t0 = 0.0;
  double t1 = 0.0;
  double delta = 0.0;  // amount by which the check failed
  std::size_t column = 0;
};

struct MonitorLog {
  std::string name;
  std::vector<std::string> columns;
  std::vector<MonitorSample> samples;
  std::vector<MonitorViolation> violations;
  // Set when the run is outside the setting the quantity is guaranteed for.
  bool advisory = false;
  std::string note;

  bool ok() const { return violations.empty(); }
};

/// Per-step slack for a quantity of magnitude `scale`: 10 dt^5 scale.
double monotone_tolerance(double dt, double scale);

// When tol is empty the step tolerance above is used, multiplied by the
// number of integrator steps between the two snapshots.

/// min_{i<j} |x_i - x_j| per snapshot; violations are decreases.
MonitorLog monitor_pairwise_distances(const Trajectory& traj, std::optional<double> tol = std::nullopt);

/// min_j and max_j of phi*_k(z_j) for a real lambda_k >= 0. Throws
/// ComplexEigenvalue.
MonitorLog monitor_eigencoordinate_bounds(const Trajectory& traj, const SpectralData& sd, Eigen::Index k = 0,
                                          std::optional<double> tol = std::nullopt);

/// r_k(t) = max_i |phi*_k(x_i(t))| e^{-(|lambda_k| + slack) t}; violation when
/// r_k(t) > 10 r_k(0). Default slack: 0 if V is diagonalizable, else 1e-3.
MonitorLog monitor_growth_bound(const Trajectory& traj, const SpectralData& sd,
                                std::optional<double> slack = std::nullopt);

/// sum_ij exp(<x_i, x_j>) for V = -I, Q^T K = I raw runs. Throws WrongVariant.
MonitorLog monitor_lyapunov(const Trajectory& traj, std::optional<double> tol = std::nullopt);

/// Each token moved by an independent uniform vector in the ball of radius delta.
TokenEnsemble perturb_tokens(const TokenEnsemble& e, double delta, std::uint64_t seed);

/// g(t) = log(W2(t) / W2(0)) / t for both runs over (0, horizon]; violation when
/// g exceeds 1.5 times the slope of an affine fit to log(W2(t) / W2(0)). Throws
/// ZeroPerturbation when the two inputs coincide as measures.
MonitorLog monitor_w2_pair(const DynamicsSpec& spec, const TokenEnsemble& a, const TokenEnsemble& b, double horizon,
                           const RunConfig& cfg = {});

MonitorLog monitor_w2_stability(const DynamicsSpec& spec, const TokenEnsemble& init, double delta, double horizon,
                                const RunConfig& cfg = {}, std::uint64_t seed = 0);

}  // namespace attnflow
