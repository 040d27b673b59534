#pragma once

// Self-attention matrices and the Boolean limit classifier.

#include "attnflow/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace attnflow {

/// Shifted logit spread beyond which an entry is set to exactly zero.
inline constexpr double kHardmaxSpread = 700.0;

/// Row softmax with max shift. Entries may be -inf; all -inf throws AllNegInfinity.
Vector softmax_row(const Vector& logits);

/// Row-wise softmax of a logit matrix.
Matrix softmax_rows(const Matrix& logits);

/// P_ij = softmax_j <Q x_i, K x_j>.
Matrix attention_raw(const TokenEnsemble& e, const HeadParams& h);

/// Same, with tokens first mapped through `propagator` (e^{tV} or R^k).
Matrix attention_mapped(const Matrix& tokens, const HeadParams& h, const Matrix& propagator);

/// P_ij = softmax_j <Q e^{tV} z_i, K e^{tV} z_j>.
Matrix attention_rescaled(const TokenEnsemble& e, const HeadParams& h, double t);

/// Row sums within tol of 1 and entries in [-tol, 1 + tol].
bool is_row_stochastic(const Matrix& P, double tol = 1e-12);

enum class RowKind { First, Last, Free, OtherBoolean };

const char* row_kind_name(RowKind k) noexcept;

struct BooleanLimitReport {
  bool in_P_class = false;
  std::vector<RowKind> rows;
  std::optional<Eigen::Index> free_row;
  Vector free_row_probabilities;
  int rank_estimate = 0;
  // Largest l-inf distance of a Boolean row to its e_1 / e_n target.
  double max_deviation = 0.0;
  std::vector<std::string> diagnostics;
};

/// Rows within tol (l-inf) of e_1 or e_n are Boolean; P is in the class when
/// at most one row is not. Throws NotStochastic.
BooleanLimitReport classify_boolean_limit(const Matrix& P, double tol = 1e-3);

/// Reorders rows and columns of P so tokens appear in ascending `keys` order.
Matrix reorder_by_key(const Matrix& P, const Vector& keys);

}  // namespace attnflow
