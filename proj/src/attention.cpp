#include "attnflow/attention.hpp"

#include "attnflow/error.hpp"
#include "attnflow/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace attnflow {

Vector softmax_row(const Vector& logits) {
  const Eigen::Index n = logits.size();
  if (n == 0) fail(ErrorCode::InvalidArgument, "softmax of an empty row");
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < n; ++j) {
    const double l = logits(j);
    if (std::isnan(l) || l == std::numeric_limits<double>::infinity()) {
      fail(ErrorCode::OverflowGuard, "attention logit overflowed");
    }
    mx = std::max(mx, l);
  }
  if (mx == -std::numeric_limits<double>::infinity()) fail(ErrorCode::AllNegInfinity, "every logit is -inf");

  Vector out(n);
  double sum = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double s = logits(j) - mx;
    out(j) = s < -kHardmaxSpread ? 0.0 : std::exp(s);
    sum += out(j);
  }
  return out / sum;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix P(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) P.row(i) = softmax_row(logits.row(i).transpose()).transpose();
  return P;
}

namespace {

Matrix logits_of(const Matrix& X, const HeadParams& h) {
  if (X.cols() != h.Q.cols()) fail(ErrorCode::DimensionMismatch, "token dimension differs from Q/K columns");
  const Matrix qx = X * h.Q.transpose();
  const Matrix kx = X * h.K.transpose();
  return qx * kx.transpose();
}

}  // namespace

Matrix attention_raw(const TokenEnsemble& e, const HeadParams& h) { return softmax_rows(logits_of(e.tokens, h)); }

Matrix attention_mapped(const Matrix& tokens, const HeadParams& h, const Matrix& propagator) {
  return softmax_rows(logits_of(tokens * propagator.transpose(), h));
}

Matrix attention_rescaled(const TokenEnsemble& e, const HeadParams& h, double t) {
  return attention_mapped(e.tokens, h, expm(h.V, t));
}

bool is_row_stochastic(const Matrix& P, double tol) {
  if (P.rows() == 0 || P.rows() != P.cols()) return false;
  if (!P.allFinite()) return false;
  if (P.minCoeff() < -tol || P.maxCoeff() > 1.0 + tol) return false;
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    if (std::abs(P.row(i).sum() - 1.0) > tol) return false;
  }
  return true;
}

const char* row_kind_name(RowKind k) noexcept {
  switch (k) {
    case RowKind::First: return "e_first";
    case RowKind::Last: return "e_last";
    case RowKind::Free: return "free";
    case RowKind::OtherBoolean: return "other_boolean";
  }
  return "free";
}

BooleanLimitReport classify_boolean_limit(const Matrix& P, double tol) {
  if (!is_row_stochastic(P, 1e-8)) fail(ErrorCode::NotStochastic, "matrix is not row-stochastic");
  const Eigen::Index n = P.rows();
  BooleanLimitReport rep;
  rep.rows.resize(static_cast<std::size_t>(n));

  auto dist_to_unit = [&](Eigen::Index i, Eigen::Index k) {
    double d = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) d = std::max(d, std::abs(P(i, j) - (j == k ? 1.0 : 0.0)));
    return d;
  };

  std::vector<Eigen::Index> free_rows;
  std::vector<double> free_score;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d1 = dist_to_unit(i, 0);
    const double dn = dist_to_unit(i, n - 1);
    auto& kind = rep.rows[static_cast<std::size_t>(i)];
    if (d1 <= tol && d1 <= dn) {
      kind = RowKind::First;
      rep.max_deviation = std::max(rep.max_deviation, d1);
    } else if (dn <= tol) {
      kind = RowKind::Last;
      rep.max_deviation = std::max(rep.max_deviation, dn);
    } else {
      Eigen::Index arg = 0;
      const double top = P.row(i).maxCoeff(&arg);
      if (1.0 - top <= tol) {
        kind = RowKind::OtherBoolean;
        rep.diagnostics.push_back("row " + std::to_string(i) + " is Boolean at interior index " + std::to_string(arg));
      } else {
        kind = RowKind::Free;
      }
      free_rows.push_back(i);
      free_score.push_back(std::min(d1, dn));
    }
  }

  const bool any_other = std::any_of(rep.rows.begin(), rep.rows.end(), [](RowKind k) { return k == RowKind::OtherBoolean; });
  rep.in_P_class = !any_other && free_rows.size() <= 1;
  if (free_rows.size() > 1) {
    rep.diagnostics.push_back(std::to_string(free_rows.size()) + " rows are not within tol of e_1 or e_n");
  }
  if (!free_rows.empty()) {
    const auto best = std::max_element(free_score.begin(), free_score.end()) - free_score.begin();
    rep.free_row = free_rows[static_cast<std::size_t>(best)];
    rep.free_row_probabilities = P.row(*rep.free_row).transpose();
  }

  // Distinct limit rows: Boolean rows snap to their targets, the rest are
  // grouped greedily at l-inf radius tol.
  const bool has_first = std::find(rep.rows.begin(), rep.rows.end(), RowKind::First) != rep.rows.end();
  const bool has_last = std::find(rep.rows.begin(), rep.rows.end(), RowKind::Last) != rep.rows.end();
  rep.rank_estimate = static_cast<int>(has_first) + static_cast<int>(has_last && n > 1);
  std::vector<Vector> reps;
  for (auto i : free_rows) {
    const Vector r = P.row(i).transpose();
    const bool seen = std::any_of(reps.begin(), reps.end(), [&](const Vector& v) { return (v - r).cwiseAbs().maxCoeff() <= tol; });
    if (!seen) reps.push_back(r);
  }
  rep.rank_estimate += static_cast<int>(reps.size());
  return rep;
}

Matrix reorder_by_key(const Matrix& P, const Vector& keys) {
  const Eigen::Index n = P.rows();
  if (keys.size() != n || P.cols() != n) fail(ErrorCode::DimensionMismatch, "reorder_by_key shapes");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return keys(a) < keys(b); });
  Matrix out(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b) out(a, b) = P(order[static_cast<std::size_t>(a)], order[static_cast<std::size_t>(b)]);
  return out;
}

}  // namespace attnflow
