#include "attnflow/types.hpp"

#include "attnflow/error.hpp"

#include <array>
#include <cmath>
#include <sstream>

namespace attnflow {

namespace {

constexpr std::array<std::pair<Variant, const char*>, 6> kVariants{{
    {Variant::RawContinuous, "raw_continuous"},
    {Variant::RescaledContinuous, "rescaled_continuous"},
    {Variant::RawDiscrete, "raw_discrete"},
    {Variant::RescaledDiscrete, "rescaled_discrete"},
    {Variant::FeedForwardRescaled, "feedforward_rescaled"},
    {Variant::MultiheadDiscrete, "multihead_discrete"},
}};

constexpr std::array<std::pair<Activation, const char*>, 3> kActivations{{
    {Activation::Relu, "relu"},
    {Activation::Tanh, "tanh"},
    {Activation::Identity, "identity"},
}};

constexpr std::array<std::pair<StopReason, const char*>, 3> kStopReasons{{
    {StopReason::Completed, "completed"},
    {StopReason::VelocityConverged, "velocity_converged"},
    {StopReason::OverflowGuard, "overflow_guard"},
}};

template <typename E, std::size_t N>
const char* lookup_name(const std::array<std::pair<E, const char*>, N>& table, E value) {
  for (const auto& [v, name] : table) {
    if (v == value) return name;
  }
  return "unknown";
}

template <typename E, std::size_t N>
std::optional<E> lookup_value(const std::array<std::pair<E, const char*>, N>& table, std::string_view name) {
  for (const auto& [v, n] : table) {
    if (name == n) return v;
  }
  return std::nullopt;
}

std::string shape(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

}  // namespace

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Config: return "ConfigError";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonInvertibleStep: return "NonInvertibleStep";
    case ErrorCode::MissingFeedForward: return "MissingFeedForward";
    case ErrorCode::UnsupportedHeads: return "UnsupportedHeads";
    case ErrorCode::InvalidPermutation: return "InvalidPermutation";
    case ErrorCode::OverflowGuard: return "OverflowGuard";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::NotPSD: return "NotPSD";
    case ErrorCode::AllNegInfinity: return "AllNegInfinity";
    case ErrorCode::NotStochastic: return "NotStochastic";
    case ErrorCode::TooManyVertices: return "TooManyVertices";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::NotGoodTriple: return "NotGoodTriple";
    case ErrorCode::NotParanormal: return "NotParanormal";
    case ErrorCode::ComplexEigenvalue: return "ComplexEigenvalue";
    case ErrorCode::WrongVariant: return "WrongVariant";
    case ErrorCode::ZeroPerturbation: return "ZeroPerturbation";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::MissingArtifacts: return "MissingArtifacts";
    case ErrorCode::UnknownSuite: return "UnknownSuite";
    case ErrorCode::UnknownAnalyzer: return "UnknownAnalyzer";
    case ErrorCode::UnknownScenario: return "UnknownScenario";
    case ErrorCode::Io: return "IoError";
  }
  return "Unknown";
}

const char* variant_name(Variant v) noexcept { return lookup_name(kVariants, v); }
std::optional<Variant> parse_variant(std::string_view name) noexcept { return lookup_value(kVariants, name); }

bool is_discrete(Variant v) noexcept {
  return v == Variant::RawDiscrete || v == Variant::RescaledDiscrete || v == Variant::MultiheadDiscrete;
}

bool is_rescaled(Variant v) noexcept {
  return v == Variant::RescaledContinuous || v == Variant::RescaledDiscrete || v == Variant::FeedForwardRescaled;
}

const char* activation_name(Activation a) noexcept { return lookup_name(kActivations, a); }
std::optional<Activation> parse_activation(std::string_view name) noexcept {
  return lookup_value(kActivations, name);
}

const char* stop_reason_name(StopReason r) noexcept { return lookup_name(kStopReasons, r); }
std::optional<StopReason> parse_stop_reason(std::string_view name) noexcept {
  return lookup_value(kStopReasons, name);
}

std::vector<Violation> validate_spec(const DynamicsSpec& spec) {
  std::vector<Violation> out;
  const auto& p = spec.params;

  if (!(p.dt > 0.0) || !std::isfinite(p.dt)) {
    out.push_back({ViolationKind::InvalidStep, "dt must be a positive finite number"});
  }
  if (p.heads.empty()) {
    out.push_back({ViolationKind::DimensionMismatch, "at least one head is required"});
    return out;
  }
  if (p.heads.size() > 1 && spec.variant != Variant::MultiheadDiscrete) {
    out.push_back({ViolationKind::UnsupportedHeads,
                   std::string("variant ") + variant_name(spec.variant) + " supports a single head"});
  }

  const Eigen::Index d = p.heads.front().V.rows();
  for (std::size_t h = 0; h < p.heads.size(); ++h) {
    const auto& head = p.heads[h];
    const std::string tag = "head " + std::to_string(h) + ": ";
    if (head.V.rows() != head.V.cols() || head.V.rows() == 0) {
      out.push_back({ViolationKind::DimensionMismatch, tag + "V must be square and non-empty, got " + shape(head.V)});
      continue;
    }
    if (head.V.rows() != d) {
      out.push_back({ViolationKind::DimensionMismatch, tag + "V side differs from head 0"});
    }
    if (head.Q.cols() != d || head.K.cols() != d) {
      out.push_back({ViolationKind::DimensionMismatch,
                     tag + "Q and K need d=" + std::to_string(d) + " columns, got Q " + shape(head.Q) + ", K " +
                         shape(head.K)});
    }
    if (head.Q.rows() != head.K.rows() || head.Q.rows() == 0) {
      out.push_back({ViolationKind::DimensionMismatch,
                     tag + "Q and K must have equal non-zero row counts, got Q " + shape(head.Q) + ", K " +
                         shape(head.K)});
    }
    if (!head.Q.allFinite() || !head.K.allFinite() || !head.V.allFinite()) {
      out.push_back({ViolationKind::DimensionMismatch, tag + "non-finite weight entry"});
    }
  }

  if (spec.variant == Variant::FeedForwardRescaled && !p.feedforward) {
    out.push_back({ViolationKind::MissingFeedForward, "feedforward_rescaled requires feed-forward weights"});
  }
  if (p.feedforward) {
    const auto& ff = *p.feedforward;
    if (ff.W.rows() != d || ff.W.cols() != d) {
      out.push_back({ViolationKind::DimensionMismatch, "feed-forward W must be " + std::to_string(d) + "x" +
                                                           std::to_string(d) + ", got " + shape(ff.W)});
    }
    if (ff.b.size() != d) {
      out.push_back({ViolationKind::DimensionMismatch, "feed-forward b must have length " + std::to_string(d)});
    }
  }

  if (spec.variant == Variant::RescaledDiscrete && p.heads.front().V.rows() == d && d > 0 && p.dt > 0.0) {
    const Matrix R = Matrix::Identity(d, d) + p.heads.front().V * p.dt;
    Eigen::JacobiSVD<Matrix> svd(R);
    const auto& s = svd.singularValues();
    const double smax = s(0);
    const double smin = s(s.size() - 1);
    if (!(smin > 1e-12 * std::max(1.0, smax))) {
      out.push_back({ViolationKind::NonInvertibleStep, "I + V*dt is singular"});
    }
  }
  return out;
}

void require_valid(const DynamicsSpec& spec) {
  const auto violations = validate_spec(spec);
  if (violations.empty()) return;
  std::string msg;
  for (const auto& v : violations) {
    if (!msg.empty()) msg += "; ";
    msg += v.message;
  }
  ErrorCode code = ErrorCode::DimensionMismatch;
  switch (violations.front().kind) {
    case ViolationKind::DimensionMismatch: code = ErrorCode::DimensionMismatch; break;
    case ViolationKind::NonInvertibleStep: code = ErrorCode::NonInvertibleStep; break;
    case ViolationKind::MissingFeedForward: code = ErrorCode::MissingFeedForward; break;
    case ViolationKind::UnsupportedHeads: code = ErrorCode::UnsupportedHeads; break;
    case ViolationKind::InvalidStep: code = ErrorCode::InvalidArgument; break;
  }
  fail(code, msg);
}

std::vector<std::string> validate_ensemble(const TokenEnsemble& e) {
  std::vector<std::string> out;
  if (e.tokens.rows() < 1) out.emplace_back("ensemble needs at least one token");
  if (e.tokens.cols() < 1) out.emplace_back("tokens need dimension >= 1");
  if (!e.tokens.allFinite()) out.emplace_back("token coordinates must be finite");
  if (!std::isfinite(e.t)) out.emplace_back("time must be finite");
  return out;
}

TokenEnsemble permute_tokens(const TokenEnsemble& e, std::span<const std::size_t> perm) {
  const auto n = static_cast<std::size_t>(e.size());
  if (perm.size() != n) fail(ErrorCode::InvalidPermutation, "permutation length differs from token count");
  std::vector<bool> seen(n, false);
  for (auto p : perm) {
    if (p >= n || seen[p]) fail(ErrorCode::InvalidPermutation, "not a bijection on the token indices");
    seen[p] = true;
  }
  TokenEnsemble out{e.t, Matrix(e.tokens.rows(), e.tokens.cols())};
  for (std::size_t i = 0; i < n; ++i) out.tokens.row(static_cast<Eigen::Index>(i)) = e.tokens.row(static_cast<Eigen::Index>(perm[i]));
  return out;
}

std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> perm) {
  std::vector<std::size_t> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] >= perm.size()) fail(ErrorCode::InvalidPermutation, "index out of range");
    inv[perm[i]] = i;
  }
  return inv;
}

DynamicsSpec make_spec(Variant variant, Matrix Q, Matrix K, Matrix V, double dt) {
  DynamicsSpec spec;
  spec.variant = variant;
  spec.params.heads.push_back(HeadParams{std::move(Q), std::move(K), std::move(V)});
  spec.params.dt = dt;
  return spec;
}

}  // namespace attnflow
