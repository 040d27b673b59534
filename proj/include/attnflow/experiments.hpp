#pragma once

// Seeded samplers and the builtin scenario registry.
//
// Sampling: std::mt19937_64 seeded with the seed value as given. A uniform
// draw on [0,1) is (x >> 11) * 2^-53 for one 64-bit output x; Gaussians use
// Box-Muller on two such draws (cosine branch only). Matrices and token sets
// are filled row by row.

#include "attnflow/dynamics.hpp"
#include "attnflow/spectral.hpp"
#include "attnflow/types.hpp"

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace attnflow {

double uniform01(std::mt19937_64& rng);
double standard_normal(std::mt19937_64& rng);

/// n i.i.d. points uniform in [-half_width, half_width]^d at t = 0.
TokenEnsemble sample_init(Eigen::Index n, Eigen::Index d, std::uint64_t seed, double half_width = 5.0);

/// Entries i.i.d. Uniform(-1, 1).
Matrix sample_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed);

/// Entries i.i.d. standard normal.
Matrix sample_gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed);

/// (M + M^T) / 2 for M = sample_matrix(d, d, seed).
Matrix sample_symmetric(Eigen::Index d, std::uint64_t seed);

/// Largest-modulus eigenvalue real, positive and strictly dominant. `eigs` in
/// the order returned by eigenvalues().
bool leading_eigenvalue_good(const ComplexVector& eigs, double tol = 1e-9);

struct GinibreResult {
  int trials = 0;
  int good = 0;
  double fraction() const { return trials ? static_cast<double>(good) / trials : 0.0; }
};

/// Gaussian d x d matrices with seeds first_seed, first_seed + 1, ...
GinibreResult ginibre_leading_fraction(Eigen::Index d, int trials, std::uint64_t first_seed = 0);

enum class InitRule { UniformCube, Explicit };

const char* init_rule_name(InitRule r) noexcept;

struct AnalyzerRequest {
  std::string name;
  std::map<std::string, double> params;
};

struct Scenario {
  std::string name;
  std::string description;
  DynamicsSpec spec;
  InitRule init_rule = InitRule::UniformCube;
  Eigen::Index n = 0;
  double init_half_width = 5.0;
  Matrix init_tokens;  // Explicit rule only
  RunConfig cfg;
  std::vector<AnalyzerRequest> analyzers;
};

/// Checks names, shapes and the run config. Throws Config.
void validate_scenario(const Scenario& s);

const std::vector<Scenario>& builtin_scenarios();

/// Builtins first, then `extra`. Throws UnknownScenario listing what exists.
const Scenario& find_scenario(const std::string& name, const std::vector<Scenario>& extra = {});

TokenEnsemble scenario_init(const Scenario& s, std::uint64_t seed);

/// Integrates the scenario with cfg.seed = seed.
Trajectory run_scenario(const Scenario& s, std::uint64_t seed);

// Matrix seeds and retry counts behind the regenerated matrices.
inline constexpr std::uint64_t kHyperplaneMatrixSeed = 5;
inline constexpr std::uint64_t kHighdimMatrixSeed = 7;
inline constexpr int kHighdimPositiveEigenvalues = 65;

}  // namespace attnflow
