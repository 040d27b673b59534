#include "attnflow/dynamics.hpp"

#include "attnflow/attention.hpp"
#include "attnflow/error.hpp"
#include "attnflow/spectral.hpp"

#include <cmath>
#include <sstream>

namespace attnflow {

std::optional<double> default_velocity_stop_tol(Variant v) {
  if (is_rescaled(v)) return 1e-8;
  return std::nullopt;
}

void validate_run_config(const RunConfig& cfg) {
  if (!(cfg.dt > 0.0) || !std::isfinite(cfg.dt)) fail(ErrorCode::InvalidArgument, "dt must be a positive finite number");
  if (!(cfg.t_end >= cfg.dt) || !std::isfinite(cfg.t_end)) {
    fail(ErrorCode::InvalidArgument, "t_end must be finite and at least dt");
  }
  if (cfg.snapshot_stride < 1) fail(ErrorCode::InvalidArgument, "snapshot_stride must be >= 1");
  if (cfg.velocity_stop_tol && !(*cfg.velocity_stop_tol > 0.0)) {
    fail(ErrorCode::InvalidArgument, "velocity_stop_tol must be positive");
  }
  if (!(cfg.coordinate_guard > 0.0)) fail(ErrorCode::InvalidArgument, "coordinate_guard must be positive");
  if (cfg.expm_refresh < 1) fail(ErrorCode::InvalidArgument, "expm_refresh must be >= 1");
}

long step_count(const RunConfig& cfg) { return static_cast<long>(std::ceil(cfg.t_end / cfg.dt - 1e-9)); }

Matrix apply_activation(Activation a, const Matrix& u) {
  switch (a) {
    case Activation::Relu: return u.cwiseMax(0.0);
    case Activation::Tanh: return u.array().tanh().matrix();
    case Activation::Identity: return u;
  }
  return u;
}

Matrix field_raw(double, const TokenEnsemble& e, const ModelParams& p) {
  Matrix v = Matrix::Zero(e.size(), e.dim());
  for (const auto& h : p.heads) v += attention_raw(e, h) * e.tokens * h.V.transpose();
  return v;
}

namespace {

// Rows are sum_j P_ij (z_j - z_i). The diagonal is rebuilt from the
// off-diagonal mass so nearly-Boolean rows do not cancel catastrophically.
Matrix differences(Matrix P, const Matrix& Z) {
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    P(i, i) = 0.0;
    P(i, i) = -P.row(i).sum();
  }
  return P * Z;
}

}  // namespace

Matrix field_rescaled_mapped(const Matrix& Z, const ModelParams& p, const Matrix& propagator) {
  const auto& h = p.head();
  return differences(attention_mapped(Z, h, propagator), Z) * h.V.transpose();
}

Matrix field_feedforward_mapped(const Matrix& Z, const ModelParams& p, const Matrix& propagator) {
  if (!p.feedforward) fail(ErrorCode::MissingFeedForward, "feed-forward weights are missing");
  const auto& ff = *p.feedforward;
  const Matrix u = field_rescaled_mapped(Z, p, propagator);
  if (ff.bias_inside) {
    const Matrix pre = u.rowwise() + ff.b.transpose();
    return apply_activation(ff.activation, pre) * ff.W.transpose();
  }
  Matrix out = apply_activation(ff.activation, u) * ff.W.transpose();
  return out.rowwise() + ff.b.transpose();
}

Matrix field_rescaled(double t, const TokenEnsemble& e, const ModelParams& p) {
  return field_rescaled_mapped(e.tokens, p, expm(p.head().V, t));
}

Matrix field_feedforward(double t, const TokenEnsemble& e, const ModelParams& p) {
  return field_feedforward_mapped(e.tokens, p, expm(p.head().V, t));
}

TokenEnsemble step_discrete_raw(const TokenEnsemble& e, const ModelParams& p) {
  return {e.t + p.dt, e.tokens + p.dt * field_raw(e.t, e, p)};
}

namespace {

Matrix inverse_step(const ModelParams& p, Matrix& R) {
  const Eigen::Index d = p.dim();
  R = Matrix::Identity(d, d) + p.dt * p.head().V;
  Eigen::FullPivLU<Matrix> lu(R);
  if (!lu.isInvertible()) fail(ErrorCode::NonInvertibleStep, "I + V*dt is singular");
  return lu.solve(p.head().V);
}

}  // namespace

TokenEnsemble step_discrete_rescaled_with(const TokenEnsemble& e, const ModelParams& p, const Matrix& Rk,
                                          const Matrix& RinvV) {
  const Matrix& Z = e.tokens;
  return {e.t + p.dt, Z + p.dt * differences(attention_mapped(Z, p.head(), Rk), Z) * RinvV.transpose()};
}

TokenEnsemble step_discrete_rescaled(const TokenEnsemble& e, const ModelParams& p, long k) {
  Matrix R;
  const Matrix RinvV = inverse_step(p, R);
  Matrix Rk = Matrix::Identity(p.dim(), p.dim());
  for (long i = 0; i < k; ++i) Rk = R * Rk;
  return step_discrete_rescaled_with(e, p, Rk, RinvV);
}

DiscreteRescaledStepper::DiscreteRescaledStepper(const ModelParams& p) : params_(p) {
  RinvV_ = inverse_step(params_, R_);
  Rk_ = Matrix::Identity(params_.dim(), params_.dim());
}

TokenEnsemble DiscreteRescaledStepper::step(const TokenEnsemble& e) {
  TokenEnsemble next = step_discrete_rescaled_with(e, params_, Rk_, RinvV_);
  Rk_ = R_ * Rk_;
  ++k_;
  return next;
}

// --- driver ---------------------------------------------------------------

namespace {

double max_row_norm(const Matrix& v) { return v.rows() == 0 ? 0.0 : v.rowwise().norm().maxCoeff(); }

class Runner {
 public:
  Runner(const DynamicsSpec& spec, const TokenEnsemble& init, const RunConfig& cfg) : cfg_(cfg) {
    traj_.spec = spec;
    traj_.spec.params.dt = cfg.dt;
    require_valid(traj_.spec);
    const auto problems = validate_ensemble(init);
    if (!problems.empty()) fail(ErrorCode::InvalidArgument, problems.front());
    if (init.dim() != traj_.spec.params.dim()) {
      fail(ErrorCode::DimensionMismatch, "initial tokens have dimension " + std::to_string(init.dim()) +
                                             " but the model has d=" + std::to_string(traj_.spec.params.dim()));
    }
    variant_ = traj_.spec.variant;
    params_ = &traj_.spec.params;
    const Eigen::Index d = params_->dim();
    if (variant_ == Variant::RescaledContinuous || variant_ == Variant::FeedForwardRescaled) {
      half_ = expm(params_->head().V, 0.5 * cfg.dt);
      E_ = Matrix::Identity(d, d);
    }
    if (variant_ == Variant::RescaledDiscrete) {
      RinvV_ = inverse_step(*params_, R_);
      Rk_ = Matrix::Identity(d, d);
    }
  }

  Trajectory run(const TokenEnsemble& init) {
    TokenEnsemble state{0.0, init.tokens};
    const long steps = step_count(cfg_);
    const double h = cfg_.dt;
    bool recorded_current = false;

    for (long k = 0; k <= steps; ++k) {
      state.t = static_cast<double>(k) * h;
      recorded_current = false;
      try {
        if (k % cfg_.snapshot_stride == 0) {
          record(state);
          recorded_current = true;
        }
        if (k == steps) break;

        const Matrix k1 = velocity(state.tokens, 0);
        if (cfg_.velocity_stop_tol && max_row_norm(k1) < *cfg_.velocity_stop_tol) {
          if (!recorded_current) record(state);
          recorded_current = true;
          traj_.stop_reason = StopReason::VelocityConverged;
          std::ostringstream os;
          os << "max velocity below " << *cfg_.velocity_stop_tol << " at t=" << state.t;
          traj_.diagnostic = os.str();
          return finish();
        }

        Matrix next;
        if (is_discrete(variant_)) {
          next = state.tokens + h * k1;
          if (variant_ == Variant::RescaledDiscrete) Rk_ = R_ * Rk_;
        } else {
          const Matrix k2 = velocity(state.tokens + 0.5 * h * k1, 1);
          const Matrix k3 = velocity(state.tokens + 0.5 * h * k2, 1);
          const Matrix k4 = velocity(state.tokens + h * k3, 2);
          next = state.tokens + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
          advance_propagator(k + 1);
        }

        if (!next.allFinite()) {
          std::ostringstream os;
          os << "non-finite token coordinate after the step from t=" << state.t;
          fail(ErrorCode::NonFinite, os.str());
        }
        state.tokens = std::move(next);
        if (state.tokens.cwiseAbs().maxCoeff() > cfg_.coordinate_guard) {
          state.t = static_cast<double>(k + 1) * h;
          record(state);
          traj_.stop_reason = StopReason::OverflowGuard;
          std::ostringstream os;
          os << "token coordinate exceeded " << cfg_.coordinate_guard << " at t=" << state.t;
          traj_.diagnostic = os.str();
          return finish();
        }
      } catch (const Error& err) {
        if (err.code() != ErrorCode::OverflowGuard) throw;
        if (!recorded_current) record_tokens_only(state);
        traj_.stop_reason = StopReason::OverflowGuard;
        traj_.diagnostic = std::string(err.what()) + " near t=" + std::to_string(state.t);
        return finish();
      }
    }
    if (!recorded_current) record(state);
    return finish();
  }

 private:
  // stage: 0 = t_k, 1 = t_k + h/2, 2 = t_k + h.
  Matrix velocity(const Matrix& Z, int stage) {
    switch (variant_) {
      case Variant::RawContinuous:
      case Variant::RawDiscrete:
      case Variant::MultiheadDiscrete: {
        Matrix v = Matrix::Zero(Z.rows(), Z.cols());
        for (const auto& hd : params_->heads) v += attention_mapped(Z, hd, identity()) * Z * hd.V.transpose();
        return v;
      }
      case Variant::RescaledContinuous: return field_rescaled_mapped(Z, *params_, stage_propagator(stage));
      case Variant::FeedForwardRescaled: return field_feedforward_mapped(Z, *params_, stage_propagator(stage));
      case Variant::RescaledDiscrete: {
        const auto& hd = params_->head();
        return differences(attention_mapped(Z, hd, Rk_), Z) * RinvV_.transpose();
      }
    }
    return Matrix();
  }

  const Matrix& identity() {
    if (I_.rows() != params_->dim()) I_ = Matrix::Identity(params_->dim(), params_->dim());
    return I_;
  }

  const Matrix& stage_propagator(int stage) {
    if (stage == 0) return E_;
    if (stage == 1) {
      Emid_ = E_ * half_;
      return Emid_;
    }
    Eend_ = Emid_ * half_;
    return Eend_;
  }

  void advance_propagator(long k_next) {
    if (E_.size() == 0) return;
    if (k_next % cfg_.expm_refresh == 0) {
      E_ = expm(params_->head().V, static_cast<double>(k_next) * cfg_.dt);
    } else {
      E_ = Emid_ * half_;
    }
  }

  Matrix snapshot_attention(const Matrix& Z) {
    switch (variant_) {
      case Variant::RescaledContinuous:
      case Variant::FeedForwardRescaled: return attention_mapped(Z, params_->head(), E_);
      case Variant::RescaledDiscrete: return attention_mapped(Z, params_->head(), Rk_);
      default: return attention_mapped(Z, params_->head(), identity());
    }
  }

  void record(const TokenEnsemble& s) {
    if (!traj_.snapshots.empty() && traj_.snapshots.back().t == s.t) return;
    Matrix P;
    if (cfg_.capture_attention) P = snapshot_attention(s.tokens);
    traj_.snapshots.push_back(s);
    if (cfg_.capture_attention) traj_.attention_snapshots.push_back(std::move(P));
  }

  // Used when the attention itself overflowed; keeps snapshots and attention aligned
  // by dropping the attention record for this state.
  void record_tokens_only(const TokenEnsemble& s) {
    if (!traj_.snapshots.empty() && traj_.snapshots.back().t == s.t) return;
    if (cfg_.capture_attention) return;
    traj_.snapshots.push_back(s);
  }

  Trajectory finish() { return std::move(traj_); }

  RunConfig cfg_;
  Trajectory traj_;
  Variant variant_ = Variant::RawContinuous;
  const ModelParams* params_ = nullptr;
  Matrix half_, E_, Emid_, Eend_, I_;
  Matrix R_, Rk_, RinvV_;
};

}  // namespace

Trajectory integrate(const DynamicsSpec& spec, const TokenEnsemble& init, const RunConfig& cfg) {
  validate_run_config(cfg);
  Runner runner(spec, init, cfg);
  return runner.run(init);
}

}  // namespace attnflow
