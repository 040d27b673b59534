#include "attnflow/experiments.hpp"

#include "attnflow/error.hpp"
#include "attnflow/spectral.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>

namespace attnflow {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double standard_normal(std::mt19937_64& rng) {
  const double u1 = 1.0 - uniform01(rng);  // (0, 1]
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

TokenEnsemble sample_init(Eigen::Index n, Eigen::Index d, std::uint64_t seed, double half_width) {
  if (n < 1 || d < 1) fail(ErrorCode::InvalidArgument, "sample_init needs n, d >= 1");
  std::mt19937_64 rng(seed);
  TokenEnsemble e{0.0, Matrix(n, d)};
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index c = 0; c < d; ++c) e.tokens(i, c) = half_width * (2.0 * uniform01(rng) - 1.0);
  return e;
}

Matrix sample_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  if (rows < 1 || cols < 1) fail(ErrorCode::InvalidArgument, "sample_matrix needs rows, cols >= 1");
  std::mt19937_64 rng(seed);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = 2.0 * uniform01(rng) - 1.0;
  return m;
}

Matrix sample_gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  if (rows < 1 || cols < 1) fail(ErrorCode::InvalidArgument, "sample_gaussian_matrix needs rows, cols >= 1");
  std::mt19937_64 rng(seed);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = standard_normal(rng);
  return m;
}

Matrix sample_symmetric(Eigen::Index d, std::uint64_t seed) {
  const Matrix m = sample_matrix(d, d, seed);
  return 0.5 * (m + m.transpose());
}

bool leading_eigenvalue_good(const ComplexVector& eigs, double tol) {
  if (eigs.size() == 0) return false;
  const Complex l1 = eigs(0);
  if (std::abs(l1.imag()) > tol * std::max(1.0, std::abs(l1)) || !(l1.real() > 0.0)) return false;
  if (eigs.size() == 1) return true;
  return l1.real() - std::abs(eigs(1)) > tol * std::max(1.0, l1.real());
}

GinibreResult ginibre_leading_fraction(Eigen::Index d, int trials, std::uint64_t first_seed) {
  GinibreResult r;
  for (int k = 0; k < trials; ++k) {
    const Matrix M = sample_gaussian_matrix(d, d, first_seed + static_cast<std::uint64_t>(k));
    ++r.trials;
    if (leading_eigenvalue_good(eigenvalues(M))) ++r.good;
  }
  return r;
}

const char* init_rule_name(InitRule r) noexcept {
  switch (r) {
    case InitRule::UniformCube: return "uniform_cube";
    case InitRule::Explicit: return "explicit";
  }
  return "?";
}

void validate_scenario(const Scenario& s) {
  if (s.name.empty()) fail(ErrorCode::Config, "scenario name is empty");
  for (char c : s.name) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) {
      fail(ErrorCode::Config, "scenario name '" + s.name + "' may only use letters, digits, '_' and '-'");
    }
  }
  const auto problems = validate_spec(s.spec);
  if (!problems.empty()) fail(ErrorCode::Config, "scenario " + s.name + ": " + problems.front().message);
  try {
    RunConfig cfg = s.cfg;
    validate_run_config(cfg);
  } catch (const Error& e) {
    fail(ErrorCode::Config, "scenario " + s.name + ": " + e.what());
  }
  const Eigen::Index d = s.spec.params.dim();
  if (s.init_rule == InitRule::UniformCube) {
    if (s.n < 1) fail(ErrorCode::Config, "scenario " + s.name + ": n must be at least 1");
    if (!(s.init_half_width > 0.0)) fail(ErrorCode::Config, "scenario " + s.name + ": init_half_width must be positive");
  } else {
    if (s.init_tokens.rows() < 1) fail(ErrorCode::Config, "scenario " + s.name + ": explicit init has no tokens");
    if (s.init_tokens.cols() != d) {
      fail(ErrorCode::Config, "scenario " + s.name + ": explicit init has dimension " +
                                  std::to_string(s.init_tokens.cols()) + ", model has " + std::to_string(d));
    }
  }
}

namespace {

Scenario base(std::string name, std::string description, Variant v, Matrix Q, Matrix K, Matrix V, Eigen::Index n) {
  Scenario s;
  s.name = std::move(name);
  s.description = std::move(description);
  s.spec = make_spec(v, std::move(Q), std::move(K), std::move(V), 0.1);
  s.n = n;
  s.cfg.dt = 0.1;
  s.cfg.velocity_stop_tol = default_velocity_stop_tol(v);
  return s;
}

Matrix hyperplane_V() {
  // Resample until the spectrum ordered by modulus has signs (+, -).
  for (std::uint64_t r = 0;; ++r) {
    const Matrix V = sample_symmetric(2, kHyperplaneMatrixSeed + r);
    const auto ev = eigenvalues(V);
    if (ev(0).real() > 0.0 && ev(1).real() < 0.0 && leading_eigenvalue_good(ev)) return V;
  }
}

Matrix highdim_V() {
  for (std::uint64_t r = 0;; ++r) {
    const Matrix V = sample_symmetric(128, kHighdimMatrixSeed + r);
    const auto se = symmetric_eig(V);
    if ((se.values.array() > 0.0).count() == kHighdimPositiveEigenvalues) return V;
  }
}

std::vector<Scenario> make_builtins() {
  std::vector<Scenario> out;
  const Matrix I1 = Matrix::Identity(1, 1);
  const Matrix I2 = Matrix::Identity(2, 2);
  const Matrix I3 = Matrix::Identity(3, 3);

  {
    auto s = base("boolean_1d", "d=1, n=40, Q=K=V=1; final attention matrix tested for the Boolean class",
                  Variant::RescaledContinuous, I1, I1, I1, 40);
    s.cfg.t_end = 15.0;
    s.cfg.capture_attention = true;
    s.analyzers = {{"boolean", {{"tol", 1e-3}}}};
    out.push_back(std::move(s));
  }
  {
    auto s = base("polytope_3d", "V=Q=K=I3, n=40; clustering at vertices of a convex polytope",
                  Variant::RescaledContinuous, I3, I3, I3, 40);
    s.cfg.t_end = 40.0;
    s.analyzers = {{"polytope", {{"eps", 1e-2}}}, {"hull", {{"tol", 1e-7}}}};
    out.push_back(std::move(s));
  }
  const Matrix Vh = hyperplane_V();
  {
    auto s = base("hyperplane_2d", "n=40, d=2, Q=K=I2, random symmetric V with one positive and one negative eigenvalue",
                  Variant::RescaledContinuous, I2, I2, Vh, 40);
    s.cfg.t_end = 20.0;
    s.analyzers = {{"hyperplane", {{"eps", 1e-2}}}, {"eigencoordinate", {{"k", 0}}}, {"growth", {}}};
    out.push_back(std::move(s));
  }
  {
    Matrix V = Matrix::Zero(3, 3);
    V.diagonal() << 1.0, 1.0, -0.5;
    auto s = base("mixed_3d", "V=diag(1,1,-1/2), Q=K=I3, n=40; polytope in F times divergence along G",
                  Variant::RescaledContinuous, I3, I3, V, 40);
    s.cfg.t_end = 20.0;
    s.analyzers = {{"mixed", {{"eps", 1e-2}, {"t_early", 5.0}, {"t_late", 15.0}}}};
    out.push_back(std::move(s));
  }
  {
    auto s = base("collapse", "V=-I2, Q=K=I2, n=20, init in [-1,1]^2; raw tokens collapse to the origin",
                  Variant::RawContinuous, I2, I2, -I2, 20);
    s.init_half_width = 1.0;
    s.cfg.t_end = 50.0;
    s.analyzers = {{"collapse", {{"radius", 1e-3}}}, {"lyapunov", {}}};
    out.push_back(std::move(s));
  }
  {
    auto s = base("highdim", "n=256, d=128, random Q and K, random symmetric V with 65 positive eigenvalues",
                  Variant::RescaledContinuous, sample_matrix(128, 128, kHighdimMatrixSeed + 1000),
                  sample_matrix(128, 128, kHighdimMatrixSeed + 2000), highdim_V(), 256);
    // Past t ~ 2 the negative directions hit the coordinate guard for some seeds.
    s.cfg.t_end = 1.5;
    s.analyzers = {{"codimension", {{"eps", 1e-2}}}};
    out.push_back(std::move(s));
  }
  {
    auto s = base("nonpsd_qk", "V=I2 with Q^T K a random matrix (not PSD), n=40", Variant::RescaledContinuous, I2,
                  sample_matrix(2, 2, 11), I2, 40);
    s.cfg.t_end = 20.0;
    s.analyzers = {{"clusters", {{"eps", 1e-2}}}};
    out.push_back(std::move(s));
  }
  auto ffn = [&](std::string name, std::string description, Activation act, Matrix W) {
    auto s = base(std::move(name), std::move(description), Variant::FeedForwardRescaled, I2, I2, Vh, 40);
    s.spec.params.feedforward = FeedForward{std::move(W), Vector::Zero(2), act, true};
    s.cfg.t_end = 10.0;
    s.analyzers = {{"clusters", {{"eps", 1e-2}}}};
    out.push_back(std::move(s));
  };
  ffn("ffn_relu", "hyperplane_2d matrices with W relu(.) appended, W=I2", Activation::Relu, I2);
  ffn("ffn_tanh", "hyperplane_2d matrices with W tanh(.) appended, W=I2", Activation::Tanh, I2);
  ffn("ffn_randomW", "hyperplane_2d matrices with W relu(.) appended, W random", Activation::Relu,
      sample_matrix(2, 2, 13));

  for (const auto& s : out) validate_scenario(s);
  return out;
}

}  // namespace

const std::vector<Scenario>& builtin_scenarios() {
  static const std::vector<Scenario> registry = make_builtins();
  return registry;
}

const Scenario& find_scenario(const std::string& name, const std::vector<Scenario>& extra) {
  for (const auto& s : builtin_scenarios()) {
    if (s.name == name) return s;
  }
  for (const auto& s : extra) {
    if (s.name == name) return s;
  }
  std::string known;
  for (const auto& s : builtin_scenarios()) known += (known.empty() ? "" : ", ") + s.name;
  for (const auto& s : extra) known += ", " + s.name;
  fail(ErrorCode::UnknownScenario, "unknown scenario '" + name + "'; known: " + known);
}

TokenEnsemble scenario_init(const Scenario& s, std::uint64_t seed) {
  if (s.init_rule == InitRule::Explicit) return {0.0, s.init_tokens};
  return sample_init(s.n, s.spec.params.dim(), seed, s.init_half_width);
}

Trajectory run_scenario(const Scenario& s, std::uint64_t seed) {
  RunConfig cfg = s.cfg;
  cfg.seed = seed;
  return integrate(s.spec, scenario_init(s, seed), cfg);
}

}  // namespace attnflow
