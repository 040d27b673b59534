#pragma once

// Limit-geometry analyzers: convex membership, clusters, the limit set S,
// hyperplane and mixed verdicts, and W2 between empirical measures.

#include "attnflow/spectral.hpp"
#include "attnflow/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace attnflow {

/// Lawson-Hanson active-set NNLS: argmin ||A x - b|| subject to x >= 0.
Vector nnls(const Matrix& A, const Vector& b, int max_iter = 0);

struct Membership {
  bool member = false;
  double residual = 0.0;
  Vector weights;  // convex weights, sum to one
};

/// Is x in conv(rows of S) within tol? Solved as NNLS on the system stacked
/// with a weighted row of ones, after shifting x to the origin.
Membership convex_membership(const Vector& x, const Matrix& S, double tol = 1e-9);

struct HullViolation {
  std::size_t snapshot = 0;  // index of the later snapshot of the pair
  Eigen::Index token = 0;
  double residual = 0.0;
};

std::vector<HullViolation> hull_shrinking_check(const Trajectory& traj, double tol = 1e-7);

struct ClusterAssignment {
  std::vector<int> labels;
  Matrix centers;  // one row per cluster, cluster means
  double radius = 0.0;

  int count() const { return static_cast<int>(centers.rows()); }
};

/// Single-linkage grouping at threshold eps.
ClusterAssignment extract_clusters(const Matrix& tokens, double eps);

inline constexpr int kMaxLimitSetVertices = 24;

struct LimitSetS {
  Matrix vertices;  // rows
  Matrix points;    // rows
  Matrix A;
};

/// Every point w of conv(vertices) with ||Aw||^2 = max_j <Aw, Av_j>.
LimitSetS limit_set_S(const Matrix& vertices, const Matrix& A);

/// Distance from x to the nearest row of P.
double nearest_distance(const Vector& x, const Matrix& P);

struct PolytopeOptions {
  // Single-linkage threshold; 0 means 1e-3 times the initial diameter.
  double cluster_eps = 0.0;
  // Terminal max velocity must be below this.
  double stationary_tol = 1e-6;
};

struct PolytopeReport {
  bool pass = false;
  ClusterAssignment clusters;
  Matrix vertices;
  LimitSetS S;
  Vector distances;
  double max_distance = 0.0;
  // Tokens farther than eps from S (possible facet-interior limits).
  std::vector<Eigen::Index> outliers;
  double terminal_velocity = 0.0;
  double cluster_eps = 0.0;
};

/// Verdict on explicit terminal points (no stationarity check).
PolytopeReport polytope_verdict_points(const Matrix& tokens, const Matrix& A, double eps, double cluster_eps);

/// Throws NotConverged unless the terminal snapshot is near-stationary.
PolytopeReport polytope_verdict(const Trajectory& traj, const Matrix& A, double eps, const PolytopeOptions& opts = {});

/// Max token speed of the run's own field at its terminal snapshot.
double terminal_velocity(const Trajectory& traj);

/// Diameter of a point set (max pairwise distance).
double diameter(const Matrix& tokens);

struct HyperplaneReport {
  bool pass = false;
  Vector phi1;
  std::vector<double> levels;
  std::vector<int> assignment;
  double max_residual = 0.0;
  double initial_min = 0.0;
  double initial_max = 0.0;
  bool within_initial_band = false;
  bool has_zero_level = false;
};

/// Clusters phi*_1 coordinates of the terminal tokens. Throws NotGoodTriple.
HyperplaneReport hyperplane_verdict(const Trajectory& traj, const TripleClass& tc, double eps = 1e-2);

/// Coordinates relative to the splitting F + G: columns [0, dim F) are F
/// coordinates, the rest G coordinates.
Matrix split_coordinates(const Matrix& tokens, const TripleClass& tc);

struct MixedReport {
  bool pass = false;
  PolytopeReport polytope;  // in F coordinates
  Matrix A_F;
  std::vector<double> times;
  std::vector<double> g_max_norm;  // max_i |G-component of z_i(t)| per snapshot
  double f_velocity = 0.0;
};

/// Throws NotParanormal.
MixedReport mixed_verdict(const Trajectory& traj, const TripleClass& tc, double eps = 1e-2,
                          const PolytopeOptions& opts = {});

/// Exact W2 between uniform empirical measures via the Hungarian algorithm.
double w2_empirical(const Matrix& a, const Matrix& b);
double w2_empirical(const TokenEnsemble& a, const TokenEnsemble& b);

/// Minimum-cost perfect assignment; returns column assigned to each row.
std::vector<Eigen::Index> hungarian(const Matrix& cost);

struct CodimensionDirection {
  Eigen::Index index = 0;
  Complex eigenvalue;
  std::vector<double> mean;
  std::vector<double> variance;
  double final_variance = 0.0;
  int final_levels = 0;
  bool concentrated = false;
  // For Re(lambda) < 0: final over initial max |phi*_k(z_i)|.
  double growth = 0.0;
};

struct CodimensionReport {
  std::vector<double> times;
  std::vector<CodimensionDirection> directions;
};

CodimensionReport codimension_probe(const Trajectory& traj, const SpectralData& sd, double eps = 1e-2);

}  // namespace attnflow
