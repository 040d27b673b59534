#include "attnflow/oracles.hpp"

#include "attnflow/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace attnflow::oracle {

double cofactor_det(const Matrix& M) {
  const Eigen::Index n = M.rows();
  if (n != M.cols()) fail(ErrorCode::DimensionMismatch, "cofactor_det needs a square matrix");
  if (n > 6) fail(ErrorCode::DimensionMismatch, "cofactor_det is limited to d <= 6");
  if (n == 0) return 1.0;
  if (n == 1) return M(0, 0);
  double det = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    Matrix minor(n - 1, n - 1);
    for (Eigen::Index r = 1; r < n; ++r) {
      Eigen::Index cc = 0;
      for (Eigen::Index c = 0; c < n; ++c) {
        if (c == j) continue;
        minor(r - 1, cc++) = M(r, c);
      }
    }
    const double sign = (j % 2 == 0) ? 1.0 : -1.0;
    det += sign * M(0, j) * cofactor_det(minor);
  }
  return det;
}

std::vector<double> symmetric_charpoly_roots(const Matrix& V) {
  const Eigen::Index d = V.rows();
  if (d > 4) fail(ErrorCode::DimensionMismatch, "charpoly oracle is limited to d <= 4");
  // Gershgorin bound on the spectrum.
  double R = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) R = std::max(R, V.row(i).cwiseAbs().sum());
  R += 1.0;
  auto f = [&](double x) { return cofactor_det(V - x * Matrix::Identity(d, d)); };

  std::vector<double> roots;
  const int steps = 200000;
  const double h = 2.0 * R / steps;
  double x0 = -R;
  double f0 = f(x0);
  for (int s = 1; s <= steps; ++s) {
    const double x1 = -R + s * h;
    const double f1 = f(x1);
    if (f1 == 0.0) {
      roots.push_back(x1);
    } else if ((f0 < 0.0) != (f1 < 0.0) && f0 != 0.0) {
      double lo = x0, hi = x1, flo = f0;
      for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if ((fm < 0.0) == (flo < 0.0)) {
          lo = mid;
          flo = fm;
        } else {
          hi = mid;
        }
      }
      roots.push_back(0.5 * (lo + hi));
    }
    x0 = x1;
    f0 = f1;
  }
  return roots;
}

double brute_force_w2(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) fail(ErrorCode::SizeMismatch, "ensembles differ in shape");
  const Eigen::Index n = a.rows();
  if (n > 8) fail(ErrorCode::InvalidArgument, "brute force W2 is limited to n <= 8");
  if (n == 0) return 0.0;
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) cost += (a.row(i) - b.row(perm[static_cast<std::size_t>(i)])).squaredNorm();
    best = std::min(best, cost);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::sqrt(best / static_cast<double>(n));
}

double barycentric_distance(const Vector& x, const Matrix& S) {
  const Eigen::Index m = S.rows();
  const Eigen::Index d = S.cols();
  if (m < 1 || m > 6) fail(ErrorCode::InvalidArgument, "barycentric oracle needs 1..6 points");
  if (x.size() != d) fail(ErrorCode::DimensionMismatch, "point dimension differs from S");
  double best = std::numeric_limits<double>::infinity();
  for (unsigned mask = 1; mask < (1u << m); ++mask) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (mask & (1u << j)) idx.push_back(j);
    }
    const auto k = static_cast<Eigen::Index>(idx.size());
    // x ~ s_0 + sum_{l>0} beta_l (s_l - s_0)
    const Vector s0 = S.row(idx[0]).transpose();
    Vector alpha = Vector::Zero(k);
    Vector proj = s0;
    if (k == 1) {
      alpha(0) = 1.0;
    } else {
      Matrix D(d, k - 1);
      for (Eigen::Index l = 1; l < k; ++l) D.col(l - 1) = S.row(idx[static_cast<std::size_t>(l)]).transpose() - s0;
      const Vector beta = D.completeOrthogonalDecomposition().solve(x - s0);
      alpha(0) = 1.0 - beta.sum();
      alpha.tail(k - 1) = beta;
      proj = s0 + D * beta;
    }
    if (alpha.minCoeff() < -1e-12) continue;
    best = std::min(best, (x - proj).norm());
  }
  return best;
}

namespace {

// Andrew's monotone chain; returns hull vertices counter-clockwise.
std::vector<Eigen::Vector2d> hull2d(std::vector<Eigen::Vector2d> pts) {
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y()); });
  pts.erase(std::unique(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a == b; }), pts.end());
  if (pts.size() < 3) return pts;
  auto cross = [](const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
  };
  std::vector<Eigen::Vector2d> h(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], p) <= 0) --k;
    h[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
    h[k++] = pts[i];
  }
  h.resize(k - 1);
  return h;
}

bool in_polygon(const std::vector<Eigen::Vector2d>& hull, const Eigen::Vector2d& p, double tol) {
  if (hull.size() == 1) return (p - hull[0]).norm() <= tol;
  if (hull.size() == 2) {
    const Eigen::Vector2d a = hull[0], b = hull[1];
    const double len2 = (b - a).squaredNorm();
    const double s = std::clamp((p - a).dot(b - a) / len2, 0.0, 1.0);
    return (a + s * (b - a) - p).norm() <= tol;
  }
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const Eigen::Vector2d a = hull[i];
    const Eigen::Vector2d b = hull[(i + 1) % hull.size()];
    const Eigen::Vector2d e = b - a;
    const double c = e.x() * (p.y() - a.y()) - e.y() * (p.x() - a.x());
    if (c < -tol * e.norm()) return false;
  }
  return true;
}

}  // namespace

GridOracleResult grid_limit_set_check(const Matrix& vertices, const Matrix& A, const Matrix& reported, double pitch,
                                      double cond_tol, double match_radius) {
  const Eigen::Index d = vertices.cols();
  if (d < 1 || d > 2) fail(ErrorCode::DimensionMismatch, "grid oracle supports d = 1 or 2");
  if (A.rows() != d || A.cols() != d || reported.cols() != d) fail(ErrorCode::DimensionMismatch, "grid oracle shapes");

  const Matrix AV = vertices * A.transpose();  // rows A v_j
  std::vector<Vector> hits;
  auto test_point = [&](const Vector& x) {
    const Vector ax = A * x;
    const double lhs = ax.squaredNorm();
    const double rhs = (AV * ax).maxCoeff();
    if (std::abs(lhs - rhs) <= cond_tol) hits.push_back(x);
  };

  const Vector lo = vertices.colwise().minCoeff();
  const Vector hi = vertices.colwise().maxCoeff();
  const auto i0 = static_cast<long>(std::ceil(lo(0) / pitch - 1e-9));
  const auto i1 = static_cast<long>(std::floor(hi(0) / pitch + 1e-9));
  if (d == 1) {
    for (long i = i0; i <= i1; ++i) test_point(Vector::Constant(1, static_cast<double>(i) * pitch));
  } else {
    std::vector<Eigen::Vector2d> pts;
    for (Eigen::Index r = 0; r < vertices.rows(); ++r) pts.emplace_back(vertices(r, 0), vertices(r, 1));
    const auto hull = hull2d(pts);
    const auto j0 = static_cast<long>(std::ceil(lo(1) / pitch - 1e-9));
    const auto j1 = static_cast<long>(std::floor(hi(1) / pitch + 1e-9));
    for (long i = i0; i <= i1; ++i) {
      for (long j = j0; j <= j1; ++j) {
        const Eigen::Vector2d p(static_cast<double>(i) * pitch, static_cast<double>(j) * pitch);
        if (!in_polygon(hull, p, 1e-9)) continue;
        test_point(p);
      }
    }
  }

  GridOracleResult res;
  res.grid_hits = hits.size();
  for (const auto& h : hits) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < reported.rows(); ++r) best = std::min(best, (reported.row(r).transpose() - h).norm());
    res.hit_to_reported = std::max(res.hit_to_reported, best);
  }
  for (Eigen::Index r = 0; r < reported.rows(); ++r) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& h : hits) best = std::min(best, (reported.row(r).transpose() - h).norm());
    res.reported_to_hit = std::max(res.reported_to_hit, best);
  }
  res.match = !hits.empty() && res.hit_to_reported <= match_radius && res.reported_to_hit <= match_radius;
  return res;
}

}  // namespace attnflow::oracle
