#pragma once

// Vector fields, discrete step maps and the fixed-step RK4 driver.

#include "attnflow/types.hpp"

#include <cstdint>
#include <optional>

namespace attnflow {

struct RunConfig {
  double t_end = 10.0;
  double dt = 0.1;
  int snapshot_stride = 1;
  std::optional<double> velocity_stop_tol;
  std::uint64_t seed = 0;
  bool capture_attention = false;
  double coordinate_guard = 1e12;
  // Steps between full e^{tV} recomputations in rescaled runs.
  int expm_refresh = 1000;
};

/// 1e-8 for rescaled variants, unset for raw ones (they diverge by design).
std::optional<double> default_velocity_stop_tol(Variant v);

/// Throws InvalidArgument naming the offending field.
void validate_run_config(const RunConfig& cfg);

/// Number of fixed steps needed to reach t_end.
long step_count(const RunConfig& cfg);

Matrix apply_activation(Activation a, const Matrix& u);

/// v_i = sum_h sum_j P^h_ij V_h x_j.
Matrix field_raw(double t, const TokenEnsemble& e, const ModelParams& p);

/// v_i = sum_j P_ij V (z_j - z_i), logits through e^{tV}.
Matrix field_rescaled(double t, const TokenEnsemble& e, const ModelParams& p);

/// v_i = W sigma(u_i + b) with u_i = V sum_j P_ij (z_j - z_i); bias placement per FeedForward::bias_inside.
Matrix field_feedforward(double t, const TokenEnsemble& e, const ModelParams& p);

/// Same fields with the token propagator supplied by the caller.
Matrix field_rescaled_mapped(const Matrix& Z, const ModelParams& p, const Matrix& propagator);
Matrix field_feedforward_mapped(const Matrix& Z, const ModelParams& p, const Matrix& propagator);

/// x_i <- x_i + dt sum_h sum_j P^h_ij V_h x_j (covers the multi-head map).
TokenEnsemble step_discrete_raw(const TokenEnsemble& e, const ModelParams& p);

/// z_i <- z_i + dt sum_j P_ij R^{-1} V (z_j - z_i), logits through R^k, R = I + V dt.
TokenEnsemble step_discrete_rescaled(const TokenEnsemble& e, const ModelParams& p, long k);

/// Keeps R^k between calls so a run costs one product per step.
class DiscreteRescaledStepper {
 public:
  explicit DiscreteRescaledStepper(const ModelParams& p);

  TokenEnsemble step(const TokenEnsemble& e);
  const Matrix& power() const { return Rk_; }
  long index() const { return k_; }

 private:
  ModelParams params_;
  Matrix R_;
  Matrix RinvV_;
  Matrix Rk_;
  long k_ = 0;
};

TokenEnsemble step_discrete_rescaled_with(const TokenEnsemble& e, const ModelParams& p, const Matrix& Rk,
                                          const Matrix& RinvV);

/// Runs any variant from `init`. Continuous variants use classical RK4 with
/// step cfg.dt; discrete variants iterate their map with dt = cfg.dt.
Trajectory integrate(const DynamicsSpec& spec, const TokenEnsemble& init, const RunConfig& cfg);

}  // namespace attnflow
