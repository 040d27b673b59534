#pragma once

// Independent brute-force reference computations. Deliberately slow and
// simple; used by the verification suites and the unit tests to cross-check
// the production algorithms.

#include "attnflow/types.hpp"

#include <vector>

namespace attnflow::oracle {

/// Determinant by cofactor expansion along the first row (d <= 6).
double cofactor_det(const Matrix& M);

/// Real roots of det(V - x I) for symmetric V, d <= 4, found by sign scanning
/// plus bisection. Ascending.
std::vector<double> symmetric_charpoly_roots(const Matrix& V);

/// Minimum over all n! assignments, n <= 8.
double brute_force_w2(const Matrix& a, const Matrix& b);

/// Distance from x to conv(rows of S) by enumerating every face subset. |S| <= 6.
double barycentric_distance(const Vector& x, const Matrix& S);

struct GridOracleResult {
  bool match = false;
  std::size_t grid_hits = 0;
  // Worst distance from a grid hit to the nearest reported point, and vice versa.
  double hit_to_reported = 0.0;
  double reported_to_hit = 0.0;
};

/// Scans conv(vertices) (d = 1 or 2) on a grid of the given pitch, keeping
/// points where | |Ax|^2 - max_j <Ax, Av_j> | <= cond_tol, and compares that
/// set to `reported` (rows) with matching radius `match_radius`.
GridOracleResult grid_limit_set_check(const Matrix& vertices, const Matrix& A, const Matrix& reported,
                                      double pitch = 1e-3, double cond_tol = 1e-6, double match_radius = 2e-3);

}  // namespace attnflow::oracle
