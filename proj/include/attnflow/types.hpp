#pragma once

// Domain types shared by every module: model weights, token states,
// trajectories and the dynamics-variant descriptor.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace attnflow {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Query/key/value weights of a single head. Q and K are m x d, V is d x d.
struct HeadParams {
  Matrix Q;
  Matrix K;
  Matrix V;

  Eigen::Index dim() const { return V.rows(); }
};

enum class Activation { Relu, Tanh, Identity };

struct FeedForward {
  Matrix W;
  Vector b;
  Activation activation = Activation::Identity;
  // Bias added to the pre-activation (true) or after W (false).
  bool bias_inside = true;
};

struct ModelParams {
  std::vector<HeadParams> heads;
  std::optional<FeedForward> feedforward;
  double dt = 0.1;

  Eigen::Index dim() const { return heads.empty() ? 0 : heads.front().dim(); }
  const HeadParams& head() const { return heads.front(); }
};

/// Tokens at one time. Row i of `tokens` is token i; order is positional.
struct TokenEnsemble {
  double t = 0.0;
  Matrix tokens;

  Eigen::Index size() const { return tokens.rows(); }
  Eigen::Index dim() const { return tokens.cols(); }
};

enum class Variant {
  RawContinuous,
  RescaledContinuous,
  RawDiscrete,
  RescaledDiscrete,
  FeedForwardRescaled,
  MultiheadDiscrete,
};

const char* variant_name(Variant v) noexcept;
std::optional<Variant> parse_variant(std::string_view name) noexcept;
bool is_discrete(Variant v) noexcept;
bool is_rescaled(Variant v) noexcept;

const char* activation_name(Activation a) noexcept;
std::optional<Activation> parse_activation(std::string_view name) noexcept;

struct DynamicsSpec {
  Variant variant = Variant::RescaledContinuous;
  ModelParams params;
};

enum class StopReason { Completed, VelocityConverged, OverflowGuard };

const char* stop_reason_name(StopReason r) noexcept;
std::optional<StopReason> parse_stop_reason(std::string_view name) noexcept;

struct Trajectory {
  DynamicsSpec spec;
  std::vector<TokenEnsemble> snapshots;
  // Aligned with `snapshots` when captured (head 0 for multi-head runs).
  std::vector<Matrix> attention_snapshots;
  StopReason stop_reason = StopReason::Completed;
  std::string diagnostic;

  const TokenEnsemble& initial() const { return snapshots.front(); }
  const TokenEnsemble& terminal() const { return snapshots.back(); }
};

// --- validation -------------------------------------------------------------

enum class ViolationKind { DimensionMismatch, NonInvertibleStep, MissingFeedForward, UnsupportedHeads, InvalidStep };

struct Violation {
  ViolationKind kind;
  std::string message;
};

/// Every invariant violation of `spec`; empty means the spec is valid.
std::vector<Violation> validate_spec(const DynamicsSpec& spec);

/// Throws attnflow::Error with the first violation's code and all messages.
void require_valid(const DynamicsSpec& spec);

/// Checks n >= 1, consistent dimension and finite coordinates.
std::vector<std::string> validate_ensemble(const TokenEnsemble& e);

/// Token i of the result is token perm[i] of the input.
TokenEnsemble permute_tokens(const TokenEnsemble& e, std::span<const std::size_t> perm);

std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> perm);

/// Single-head spec helper used throughout tests and scenarios.
DynamicsSpec make_spec(Variant variant, Matrix Q, Matrix K, Matrix V, double dt = 0.1);

}  // namespace attnflow
