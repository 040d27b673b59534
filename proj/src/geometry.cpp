#include "attnflow/geometry.hpp"

#include "attnflow/dynamics.hpp"
#include "attnflow/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace attnflow {

// --- NNLS / membership -------------------------------------------------------

namespace {

// b - A x accumulated in long double; near-interior points leave a residual
// many orders below |b| and a plain double product is mostly cancellation.
Vector residual_ld(const Matrix& A, const Vector& x, const Vector& b) {
  Vector r(b.size());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    long double acc = b(i);
    for (Eigen::Index j = 0; j < A.cols(); ++j) acc -= static_cast<long double>(A(i, j)) * x(j);
    r(i) = static_cast<double>(acc);
  }
  return r;
}

}  // namespace

Vector nnls(const Matrix& A, const Vector& b, int max_iter) {
  const Eigen::Index m = A.rows();
  const Eigen::Index n = A.cols();
  if (b.size() != m) fail(ErrorCode::DimensionMismatch, "nnls: right-hand side length");
  if (max_iter <= 0) max_iter = static_cast<int>(3 * n + 10);

  Vector x = Vector::Zero(n);
  std::vector<char> passive(static_cast<std::size_t>(n), 0);
  // Columns whose entry failed to go positive; cleared whenever x moves.
  std::vector<char> blocked(static_cast<std::size_t>(n), 0);
  // Dual tolerance scales with the current residual so faint improvements
  // (clusters of nearly equal columns) are still taken.
  const double tol_base = 10.0 * std::numeric_limits<double>::epsilon() * A.cwiseAbs().colwise().sum().maxCoeff() *
                          static_cast<double>(std::max(m, n));

  auto solve_passive = [&]() {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (passive[static_cast<std::size_t>(j)]) idx.push_back(j);
    }
    Matrix Ap(m, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c) Ap.col(static_cast<Eigen::Index>(c)) = A.col(idx[c]);
    const Eigen::CompleteOrthogonalDecomposition<Matrix> cod(Ap);
    Vector sp = cod.solve(b);
    // Refinement: the residual is tiny next to b when the point is nearly
    // inside, so a single solve leaves noise of order eps * cond * |b|.
    for (int pass = 0; pass < 3; ++pass) sp += cod.solve(residual_ld(Ap, sp, b));
    Vector s = Vector::Zero(n);
    for (std::size_t c = 0; c < idx.size(); ++c) s(idx[c]) = sp(static_cast<Eigen::Index>(c));
    return s;
  };

  Vector r = residual_ld(A, x, b);
  Vector w = A.transpose() * r;
  for (int outer = 0; outer < max_iter; ++outer) {
    const double tol = tol_base * r.norm();
    Eigen::Index jmax = -1;
    double wmax = tol;
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      if (!passive[ju] && !blocked[ju] && w(j) > wmax) {
        wmax = w(j);
        jmax = j;
      }
    }
    if (jmax < 0) break;
    passive[static_cast<std::size_t>(jmax)] = 1;

    Vector s = solve_passive();
    if (s(jmax) <= 0.0) {
      // Numerically dependent on the passive set; try the next candidate.
      passive[static_cast<std::size_t>(jmax)] = 0;
      blocked[static_cast<std::size_t>(jmax)] = 1;
      continue;
    }
    for (Eigen::Index inner = 0; inner <= n; ++inner) {
      Eigen::Index hit = -1;
      double alpha = 1.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[static_cast<std::size_t>(j)] && s(j) <= 0.0) {
          const double a = x(j) / (x(j) - s(j));
          if (hit < 0 || a < alpha) {
            alpha = a;
            hit = j;
          }
        }
      }
      if (hit < 0) break;
      x += alpha * (s - x);
      x(hit) = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[static_cast<std::size_t>(j)] && x(j) <= 0.0) {
          passive[static_cast<std::size_t>(j)] = 0;
          x(j) = 0.0;
        }
      }
      s = solve_passive();
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!passive[static_cast<std::size_t>(j)]) s(j) = 0.0;
    }
    x = s.cwiseMax(0.0);
    std::fill(blocked.begin(), blocked.end(), 0);
    r = residual_ld(A, x, b);
    w = A.transpose() * r;
  }
  return x;
}

Membership convex_membership(const Vector& x, const Matrix& S, double tol) {
  if (S.rows() < 1) fail(ErrorCode::InvalidArgument, "convex_membership needs a non-empty set");
  if (x.size() != S.cols()) fail(ErrorCode::DimensionMismatch, "point and set dimensions differ");
  const Eigen::Index m = S.rows();
  const Eigen::Index d = S.cols();
  const Matrix shifted = S.rowwise() - x.transpose();
  // Any positive weight works: rescaling the NNLS weights onto the simplex
  // recovers the nearest hull point. Matching the data scale keeps it well conditioned.
  const double spread = shifted.cwiseAbs().maxCoeff();
  const double weight = spread > 0.0 ? spread : 1.0;

  // Shift so x is the origin, then stack a weighted row of ones.
  Matrix A(d + 1, m);
  A.topRows(d) = shifted.transpose();
  A.row(d).setConstant(weight);
  Vector b = Vector::Zero(d + 1);
  b(d) = weight;

  Membership out;
  Vector alpha = nnls(A, b);
  const double total = alpha.sum();
  if (total > 0.0) {
    alpha /= total;
  } else {
    alpha.setConstant(1.0 / static_cast<double>(m));
  }
  out.weights = alpha;
  out.residual = residual_ld(shifted.transpose(), alpha, Vector::Zero(d)).norm();
  out.member = out.residual <= tol;
  return out;
}

std::vector<HullViolation> hull_shrinking_check(const Trajectory& traj, double tol) {
  std::vector<HullViolation> out;
  for (std::size_t s = 1; s < traj.snapshots.size(); ++s) {
    const Matrix& prev = traj.snapshots[s - 1].tokens;
    const Matrix& cur = traj.snapshots[s].tokens;
    for (Eigen::Index i = 0; i < cur.rows(); ++i) {
      const auto m = convex_membership(cur.row(i).transpose(), prev, tol);
      if (!m.member) out.push_back({s, i, m.residual});
    }
  }
  return out;
}

// --- clusters ----------------------------------------------------------------

namespace {

struct UnionFind {
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::vector<std::size_t> parent;
};

}  // namespace

ClusterAssignment extract_clusters(const Matrix& tokens, double eps) {
  if (!(eps > 0.0)) fail(ErrorCode::InvalidArgument, "cluster threshold must be positive");
  const auto n = static_cast<std::size_t>(tokens.rows());
  UnionFind uf(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if ((tokens.row(static_cast<Eigen::Index>(i)) - tokens.row(static_cast<Eigen::Index>(j))).norm() <= eps) uf.unite(i, j);
    }
  }
  ClusterAssignment out;
  out.labels.assign(n, -1);
  std::vector<std::size_t> roots;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = uf.find(i);
    auto it = std::find(roots.begin(), roots.end(), r);
    if (it == roots.end()) {
      roots.push_back(r);
      it = roots.end() - 1;
    }
    out.labels[i] = static_cast<int>(it - roots.begin());
  }
  out.centers = Matrix::Zero(static_cast<Eigen::Index>(roots.size()), tokens.cols());
  std::vector<int> counts(roots.size(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    out.centers.row(out.labels[i]) += tokens.row(static_cast<Eigen::Index>(i));
    ++counts[static_cast<std::size_t>(out.labels[i])];
  }
  for (std::size_t c = 0; c < roots.size(); ++c) out.centers.row(static_cast<Eigen::Index>(c)) /= counts[c];
  for (std::size_t i = 0; i < n; ++i) {
    out.radius = std::max(out.radius, (tokens.row(static_cast<Eigen::Index>(i)) - out.centers.row(out.labels[i])).norm());
  }
  return out;
}

double diameter(const Matrix& tokens) {
  double d = 0.0;
  for (Eigen::Index i = 0; i < tokens.rows(); ++i)
    for (Eigen::Index j = i + 1; j < tokens.rows(); ++j) d = std::max(d, (tokens.row(i) - tokens.row(j)).norm());
  return d;
}

double nearest_distance(const Vector& x, const Matrix& P) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index r = 0; r < P.rows(); ++r) best = std::min(best, (P.row(r).transpose() - x).norm());
  return best;
}

// --- limit set S ---------------------------------------------------------------

LimitSetS limit_set_S(const Matrix& vertices, const Matrix& A) {
  const Eigen::Index m = vertices.rows();
  const Eigen::Index d = vertices.cols();
  if (m < 1) fail(ErrorCode::InvalidArgument, "limit_set_S needs at least one vertex");
  if (m > kMaxLimitSetVertices) {
    fail(ErrorCode::TooManyVertices, std::to_string(m) + " vertices exceeds the cap of " +
                                         std::to_string(kMaxLimitSetVertices));
  }
  if (A.rows() != d || A.cols() != d) fail(ErrorCode::DimensionMismatch, "A must be d x d");

  const Matrix M = A.transpose() * A;
  const Matrix AV = vertices * A.transpose();  // row j = (A v_j)^T
  std::vector<Vector> found;

  auto admit = [&](const Vector& w) {
    const Vector aw = A * w;
    const double lhs = aw.squaredNorm();
    const double rhs = (AV * aw).maxCoeff();
    if (std::abs(lhs - rhs) > 1e-8 * std::max(1.0, lhs)) return;
    if (!convex_membership(w, vertices, 1e-8).member) return;
    for (const auto& f : found) {
      if ((f - w).norm() <= 1e-8) return;
    }
    found.push_back(w);
  };

  const std::uint32_t total = 1u << m;
  for (std::uint32_t mask = 1; mask < total; ++mask) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (mask & (1u << j)) idx.push_back(j);
    }
    const Vector v0 = vertices.row(idx[0]).transpose();
    Vector w = v0;
    if (idx.size() > 1) {
      Matrix D(d, static_cast<Eigen::Index>(idx.size()) - 1);
      for (std::size_t l = 1; l < idx.size(); ++l) D.col(static_cast<Eigen::Index>(l) - 1) = vertices.row(idx[l]).transpose() - v0;
      // A-orthogonal projection of the origin onto the affine hull.
      const Matrix G = D.transpose() * M * D;
      const Vector rhs = -D.transpose() * M * v0;
      const Vector beta = G.completeOrthogonalDecomposition().solve(rhs);
      w = v0 + D * beta;
    }
    admit(w);
  }
  if (convex_membership(Vector::Zero(d), vertices, 1e-8).member) admit(Vector::Zero(d));

  LimitSetS out;
  out.vertices = vertices;
  out.A = A;
  out.points.resize(static_cast<Eigen::Index>(found.size()), d);
  for (std::size_t k = 0; k < found.size(); ++k) out.points.row(static_cast<Eigen::Index>(k)) = found[k].transpose();
  return out;
}

// --- polytope verdict --------------------------------------------------------

PolytopeReport polytope_verdict_points(const Matrix& tokens, const Matrix& A, double eps, double cluster_eps) {
  PolytopeReport rep;
  rep.cluster_eps = cluster_eps;
  rep.clusters = extract_clusters(tokens, cluster_eps);
  const Matrix& centers = rep.clusters.centers;
  const Eigen::Index c = centers.rows();

  // Drop centers that lie in the hull of the remaining ones.
  std::vector<Eigen::Index> keep;
  for (Eigen::Index k = 0; k < c; ++k) {
    if (c == 1) {
      keep.push_back(k);
      break;
    }
    Matrix others(c - 1, centers.cols());
    for (Eigen::Index j = 0, r = 0; j < c; ++j) {
      if (j != k) others.row(r++) = centers.row(j);
    }
    if (!convex_membership(centers.row(k).transpose(), others, 0.5 * eps).member) keep.push_back(k);
  }
  rep.vertices.resize(static_cast<Eigen::Index>(keep.size()), centers.cols());
  for (std::size_t k = 0; k < keep.size(); ++k) rep.vertices.row(static_cast<Eigen::Index>(k)) = centers.row(keep[k]);

  rep.S = limit_set_S(rep.vertices, A);
  rep.distances.resize(tokens.rows());
  for (Eigen::Index i = 0; i < tokens.rows(); ++i) {
    rep.distances(i) = nearest_distance(tokens.row(i).transpose(), rep.S.points);
    if (rep.distances(i) > eps) rep.outliers.push_back(i);
  }
  rep.max_distance = tokens.rows() ? rep.distances.maxCoeff() : 0.0;
  rep.pass = rep.max_distance <= eps;
  return rep;
}

double terminal_velocity(const Trajectory& traj) {
  const auto& last = traj.terminal();
  const auto& p = traj.spec.params;
  Matrix v;
  switch (traj.spec.variant) {
    case Variant::RawContinuous: v = field_raw(last.t, last, p); break;
    case Variant::RescaledContinuous: v = field_rescaled(last.t, last, p); break;
    case Variant::FeedForwardRescaled: v = field_feedforward(last.t, last, p); break;
    case Variant::RawDiscrete:
    case Variant::MultiheadDiscrete: v = (step_discrete_raw(last, p).tokens - last.tokens) / p.dt; break;
    case Variant::RescaledDiscrete: {
      const long k = std::lround(last.t / p.dt);
      v = (step_discrete_rescaled(last, p, k).tokens - last.tokens) / p.dt;
      break;
    }
  }
  return v.rows() ? v.rowwise().norm().maxCoeff() : 0.0;
}

namespace {

double resolve_cluster_eps(const Trajectory& traj, const PolytopeOptions& opts) {
  if (opts.cluster_eps > 0.0) return opts.cluster_eps;
  const double diam = diameter(traj.initial().tokens);
  return std::max(1e-3 * diam, 1e-12);
}

}  // namespace

PolytopeReport polytope_verdict(const Trajectory& traj, const Matrix& A, double eps, const PolytopeOptions& opts) {
  if (traj.snapshots.empty()) fail(ErrorCode::InvalidArgument, "empty trajectory");
  const double vel = terminal_velocity(traj);
  if (!(vel < opts.stationary_tol)) {
    fail(ErrorCode::NotConverged, "terminal max velocity " + std::to_string(vel) + " is not below " +
                                      std::to_string(opts.stationary_tol));
  }
  auto rep = polytope_verdict_points(traj.terminal().tokens, A, eps, resolve_cluster_eps(traj, opts));
  rep.terminal_velocity = vel;
  return rep;
}

// --- hyperplanes -------------------------------------------------------------

namespace {

// 1D single linkage: sorted values split wherever the gap exceeds eps.
std::vector<int> cluster_line(const Vector& c, double eps, std::vector<double>& levels) {
  const Eigen::Index n = c.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return c(a) < c(b); });
  std::vector<int> label(static_cast<std::size_t>(n), 0);
  levels.clear();
  std::vector<int> counts;
  int cur = -1;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (k == 0 || c(order[k]) - c(order[k - 1]) > eps) {
      ++cur;
      levels.push_back(0.0);
      counts.push_back(0);
    }
    label[static_cast<std::size_t>(order[k])] = cur;
    levels[static_cast<std::size_t>(cur)] += c(order[k]);
    ++counts[static_cast<std::size_t>(cur)];
  }
  for (std::size_t l = 0; l < levels.size(); ++l) levels[l] /= counts[l];
  return label;
}

}  // namespace

HyperplaneReport hyperplane_verdict(const Trajectory& traj, const TripleClass& tc, double eps) {
  if (tc.kind != TripleKind::Good) fail(ErrorCode::NotGoodTriple, "hyperplane analysis needs a good triple");
  if (traj.snapshots.empty()) fail(ErrorCode::InvalidArgument, "empty trajectory");
  HyperplaneReport rep;
  rep.phi1 = tc.phi1;
  const Vector c0 = traj.initial().tokens * tc.phi1_dual;
  const Vector c = traj.terminal().tokens * tc.phi1_dual;
  rep.initial_min = c0.minCoeff();
  rep.initial_max = c0.maxCoeff();
  rep.assignment = cluster_line(c, eps, rep.levels);
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    rep.max_residual = std::max(rep.max_residual, std::abs(c(i) - rep.levels[static_cast<std::size_t>(rep.assignment[static_cast<std::size_t>(i)])]));
  }
  rep.within_initial_band = std::all_of(rep.levels.begin(), rep.levels.end(), [&](double l) {
    return l >= rep.initial_min - eps && l <= rep.initial_max + eps;
  });
  rep.has_zero_level = std::any_of(rep.levels.begin(), rep.levels.end(), [&](double l) { return std::abs(l) <= eps; });
  rep.pass = rep.levels.size() <= 3 && rep.within_initial_band && rep.max_residual <= eps;
  return rep;
}

// --- mixed case ----------------------------------------------------------------

Matrix split_coordinates(const Matrix& tokens, const TripleClass& tc) {
  const Eigen::Index k = tc.F_basis.cols();
  const Eigen::Index g = tc.G_basis.cols();
  const Eigen::Index d = k + g;
  if (tokens.cols() != d) fail(ErrorCode::DimensionMismatch, "token dimension differs from the F + G splitting");
  Matrix B(d, d);
  B.leftCols(k) = tc.F_basis;
  B.rightCols(g) = tc.G_basis;
  return B.partialPivLu().solve(tokens.transpose()).transpose();
}

MixedReport mixed_verdict(const Trajectory& traj, const TripleClass& tc, double eps, const PolytopeOptions& opts) {
  if (!tc.paranormal) fail(ErrorCode::NotParanormal, "mixed analysis needs a paranormal triple with Q^T K > 0");
  if (traj.snapshots.empty()) fail(ErrorCode::InvalidArgument, "empty trajectory");
  const Eigen::Index k = tc.F_basis.cols();
  MixedReport rep;

  const Matrix M = qk_form(traj.spec.params.head());
  rep.A_F = sqrt_psd(tc.F_basis.transpose() * M * tc.F_basis);

  for (const auto& s : traj.snapshots) {
    const Matrix coords = split_coordinates(s.tokens, tc);
    double g = 0.0;
    if (tc.G_basis.cols() > 0) {
      const Matrix gpart = coords.rightCols(tc.G_basis.cols()) * tc.G_basis.transpose();
      g = gpart.rowwise().norm().maxCoeff();
    }
    rep.times.push_back(s.t);
    rep.g_max_norm.push_back(g);
  }

  // Stationarity is only required along F.
  const auto& last = traj.terminal();
  Matrix vel;
  switch (traj.spec.variant) {
    case Variant::RescaledContinuous: vel = field_rescaled(last.t, last, traj.spec.params); break;
    case Variant::FeedForwardRescaled: vel = field_feedforward(last.t, last, traj.spec.params); break;
    default: vel = Matrix::Zero(last.size(), last.dim()); break;
  }
  rep.f_velocity = split_coordinates(vel, tc).leftCols(k).rowwise().norm().maxCoeff();
  if (!(rep.f_velocity < opts.stationary_tol)) {
    fail(ErrorCode::NotConverged, "terminal F-velocity " + std::to_string(rep.f_velocity) + " is not below " +
                                      std::to_string(opts.stationary_tol));
  }

  const Matrix f0 = split_coordinates(traj.initial().tokens, tc).leftCols(k);
  const double ceps = opts.cluster_eps > 0.0 ? opts.cluster_eps : std::max(1e-3 * diameter(f0), 1e-12);
  const Matrix f = split_coordinates(last.tokens, tc).leftCols(k);
  rep.polytope = polytope_verdict_points(f, rep.A_F, eps, ceps);
  rep.polytope.terminal_velocity = rep.f_velocity;
  rep.pass = rep.polytope.pass;
  return rep;
}

// --- W2 ----------------------------------------------------------------------

std::vector<Eigen::Index> hungarian(const Matrix& cost) {
  const Eigen::Index n = cost.rows();
  if (cost.cols() != n) fail(ErrorCode::SizeMismatch, "assignment cost must be square");
  const double inf = std::numeric_limits<double>::infinity();
  // Potentials formulation, 1-based with a dummy column 0.
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(n + 1), 0.0);
  std::vector<Eigen::Index> p(static_cast<std::size_t>(n + 1), 0), way(static_cast<std::size_t>(n + 1), 0);
  for (Eigen::Index i = 1; i <= n; ++i) {
    p[0] = i;
    Eigen::Index j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n + 1), inf);
    std::vector<bool> used(static_cast<std::size_t>(n + 1), false);
    do {
      used[static_cast<std::size_t>(j0)] = true;
      const Eigen::Index i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      Eigen::Index j1 = 0;
      for (Eigen::Index j = 1; j <= n; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        if (used[ju]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[ju];
        if (cur < minv[ju]) {
          minv[ju] = cur;
          way[ju] = j0;
        }
        if (minv[ju] < delta) {
          delta = minv[ju];
          j1 = j;
        }
      }
      for (Eigen::Index j = 0; j <= n; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        if (used[ju]) {
          u[static_cast<std::size_t>(p[ju])] += delta;
          v[ju] -= delta;
        } else {
          minv[ju] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const Eigen::Index j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<Eigen::Index> assign(static_cast<std::size_t>(n), 0);
  for (Eigen::Index j = 1; j <= n; ++j) assign[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
  return assign;
}

double w2_empirical(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(ErrorCode::SizeMismatch, "W2 needs ensembles with equal n and d");
  }
  const Eigen::Index n = a.rows();
  if (n == 0) return 0.0;
  Matrix cost(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) cost(i, j) = (a.row(i) - b.row(j)).squaredNorm();
  const auto assign = hungarian(cost);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) total += (a.row(i) - b.row(assign[static_cast<std::size_t>(i)])).squaredNorm();
  return std::sqrt(total / static_cast<double>(n));
}

double w2_empirical(const TokenEnsemble& a, const TokenEnsemble& b) { return w2_empirical(a.tokens, b.tokens); }

// --- codimension probe ---------------------------------------------------------

CodimensionReport codimension_probe(const Trajectory& traj, const SpectralData& sd, double eps) {
  CodimensionReport rep;
  for (const auto& s : traj.snapshots) rep.times.push_back(s.t);
  for (Eigen::Index k = 0; k < sd.dim(); ++k) {
    const Complex lam = sd.eigenvalues(k);
    if (lam.real() == 0.0) continue;
    CodimensionDirection dir;
    dir.index = k;
    dir.eigenvalue = lam;
    double first_max = 0.0;
    double last_max = 0.0;
    Vector last_coords;
    for (std::size_t s = 0; s < traj.snapshots.size(); ++s) {
      const Vector c = sd.dual_coordinates(k, traj.snapshots[s].tokens);
      const double mean = c.mean();
      const double var = (c.array() - mean).square().mean();
      dir.mean.push_back(mean);
      dir.variance.push_back(var);
      const double mx = c.cwiseAbs().maxCoeff();
      if (s == 0) first_max = mx;
      last_max = mx;
      last_coords = c;
    }
    dir.final_variance = dir.variance.empty() ? 0.0 : dir.variance.back();
    if (lam.real() > 0.0) {
      std::vector<double> levels;
      if (last_coords.size() > 0) cluster_line(last_coords, eps, levels);
      dir.final_levels = static_cast<int>(levels.size());
      dir.concentrated = dir.final_variance < eps && dir.final_levels <= 3;
    } else {
      dir.growth = first_max > 0.0 ? last_max / first_max : 0.0;
    }
    rep.directions.push_back(std::move(dir));
  }
  return rep;
}

}  // namespace attnflow
