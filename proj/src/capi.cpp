#include "attnflow/attnflow.h"

#include "attnflow/analysis.hpp"
#include "attnflow/dynamics.hpp"
#include "attnflow/error.hpp"
#include "attnflow/experiments.hpp"
#include "attnflow/io.hpp"
#include "attnflow/plotdata.hpp"
#include "attnflow/verify.hpp"

#include <chrono>
#include <cmath>
#include <new>
#include <string>

using namespace attnflow;

struct af_context {
  std::string error;
  std::string result;
};

struct af_spec {
  DynamicsSpec spec;
};

struct af_trajectory {
  Trajectory traj;
};

namespace {

af_status to_status(ErrorCode c) { return static_cast<af_status>(static_cast<int>(c)); }

template <class F>
af_status guarded(af_context* ctx, F&& f) {
  if (!ctx) return AF_INVALID_ARGUMENT;
  ctx->error.clear();
  try {
    return f();
  } catch (const Error& e) {
    ctx->error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    ctx->error = "out of memory";
    return AF_INTERNAL;
  } catch (const std::exception& e) {
    ctx->error = e.what();
    return AF_INTERNAL;
  }
}

void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorCode::InvalidArgument, what);
}

Matrix from_row_major(const double* p, size_t rows, size_t cols) {
  Matrix M(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (size_t i = 0; i < rows; ++i) {
    for (size_t j = 0; j < cols; ++j) M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = p[i * cols + j];
  }
  return M;
}

void to_row_major(const Matrix& M, double* out) {
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) out[i * M.cols() + j] = M(i, j);
  }
}

Variant variant_arg(const char* name) {
  require(name != nullptr, "variant is NULL");
  const auto v = parse_variant(name);
  if (!v) fail(ErrorCode::InvalidArgument, std::string("unknown variant '") + name + "'");
  return *v;
}

RunConfig run_config(const af_run_options& o, Variant v) {
  RunConfig cfg;
  cfg.t_end = o.t_end;
  cfg.dt = o.dt;
  cfg.snapshot_stride = o.snapshot_stride;
  if (o.velocity_stop > 0) {
    cfg.velocity_stop_tol = o.velocity_stop_tol;
  } else if (o.velocity_stop < 0) {
    cfg.velocity_stop_tol = default_velocity_stop_tol(v);
  }
  cfg.capture_attention = o.capture_attention != 0;
  cfg.coordinate_guard = o.coordinate_guard;
  cfg.expm_refresh = o.expm_refresh;
  return cfg;
}

Json scenario_summary(const Scenario& s, const std::string& source) {
  Json analyzers = Json::array();
  for (const auto& a : s.analyzers) analyzers.push_back({{"name", a.name}, {"params", a.params}});
  return {{"name", s.name},
          {"description", s.description},
          {"variant", variant_name(s.spec.variant)},
          {"n", s.n},
          {"d", s.spec.params.dim()},
          {"heads", s.spec.params.heads.size()},
          {"t_end", s.cfg.t_end},
          {"dt", s.cfg.dt},
          {"init", init_rule_name(s.init_rule)},
          {"analyzers", analyzers},
          {"source", source}};
}

const af_trajectory* checked(const af_trajectory* t, size_t snapshot) {
  require(t != nullptr, "trajectory is NULL");
  require(snapshot < t->traj.snapshots.size(), "snapshot " + std::to_string(snapshot) + " out of range (" +
                                                   std::to_string(t->traj.snapshots.size()) + " snapshots)");
  return t;
}

}  // namespace

extern "C" {

const char* af_version(void) { return "1.0.0"; }

const char* af_status_name(af_status status) {
  if (status == AF_OK) return "ok";
  if (status == AF_INTERNAL) return "internal";
  if (status >= AF_INVALID_ARGUMENT && status <= AF_IO) return error_code_name(static_cast<ErrorCode>(status));
  return "unknown";
}

af_status af_context_create(af_context** out) {
  if (!out) return AF_INVALID_ARGUMENT;
  *out = new (std::nothrow) af_context;
  return *out ? AF_OK : AF_INTERNAL;
}

void af_context_destroy(af_context* ctx) { delete ctx; }

const char* af_last_error(const af_context* ctx) { return ctx ? ctx->error.c_str() : "context is NULL"; }

const char* af_last_result(const af_context* ctx) { return ctx ? ctx->result.c_str() : ""; }

af_status af_spec_create(af_context* ctx, const char* variant, size_t d, const double* Q, const double* K,
                         const double* V, double dt, af_spec** out) {
  return guarded(ctx, [&] {
    require(out != nullptr, "out is NULL");
    require(Q && K && V, "Q, K and V must be non-NULL");
    require(d > 0, "dimension must be positive");
    const Variant v = variant_arg(variant);
    auto spec = std::make_unique<af_spec>();
    spec->spec = make_spec(v, from_row_major(Q, d, d), from_row_major(K, d, d), from_row_major(V, d, d), dt);
    *out = spec.release();
    return AF_OK;
  });
}

af_status af_spec_add_head(af_context* ctx, af_spec* spec, const double* Q, const double* K, const double* V) {
  return guarded(ctx, [&] {
    require(spec != nullptr, "spec is NULL");
    require(Q && K && V, "Q, K and V must be non-NULL");
    const auto d = static_cast<size_t>(spec->spec.params.dim());
    spec->spec.params.heads.push_back({from_row_major(Q, d, d), from_row_major(K, d, d), from_row_major(V, d, d)});
    return AF_OK;
  });
}

af_status af_spec_set_feedforward(af_context* ctx, af_spec* spec, const double* W, const double* b,
                                  const char* activation, int bias_inside) {
  return guarded(ctx, [&] {
    require(spec != nullptr, "spec is NULL");
    require(W != nullptr, "W is NULL");
    require(activation != nullptr, "activation is NULL");
    const auto act = parse_activation(activation);
    if (!act) fail(ErrorCode::InvalidArgument, std::string("unknown activation '") + activation + "'");
    const auto d = static_cast<size_t>(spec->spec.params.dim());
    FeedForward ff;
    ff.W = from_row_major(W, d, d);
    ff.b = b ? Vector(from_row_major(b, d, 1)) : Vector::Zero(static_cast<Eigen::Index>(d));
    ff.activation = *act;
    ff.bias_inside = bias_inside != 0;
    spec->spec.params.feedforward = ff;
    return AF_OK;
  });
}

af_status af_spec_dim(af_context* ctx, const af_spec* spec, size_t* d) {
  return guarded(ctx, [&] {
    require(spec && d, "spec and d must be non-NULL");
    *d = static_cast<size_t>(spec->spec.params.dim());
    return AF_OK;
  });
}

af_status af_spec_load_head_dir(af_context* ctx, const char* variant, const char* dir, double dt, af_spec** out) {
  return guarded(ctx, [&] {
    require(out && dir, "dir and out must be non-NULL");
    const Variant v = variant_arg(variant);
    const HeadParams h = load_head_dir(dir);
    auto spec = std::make_unique<af_spec>();
    spec->spec = make_spec(v, h.Q, h.K, h.V, dt);
    *out = spec.release();
    return AF_OK;
  });
}

void af_spec_destroy(af_spec* spec) { delete spec; }

void af_run_options_default(af_run_options* opts) {
  if (!opts) return;
  const RunConfig cfg;
  opts->t_end = cfg.t_end;
  opts->dt = cfg.dt;
  opts->snapshot_stride = cfg.snapshot_stride;
  opts->velocity_stop = -1;
  opts->velocity_stop_tol = 0.0;
  opts->capture_attention = 0;
  opts->coordinate_guard = cfg.coordinate_guard;
  opts->expm_refresh = cfg.expm_refresh;
}

af_status af_integrate(af_context* ctx, const af_spec* spec, size_t n, const double* tokens,
                       const af_run_options* opts, af_trajectory** out) {
  return guarded(ctx, [&] {
    require(spec && tokens && out, "spec, tokens and out must be non-NULL");
    require(n > 0, "token count must be positive");
    af_run_options o;
    af_run_options_default(&o);
    if (opts) o = *opts;
    const auto d = static_cast<size_t>(spec->spec.params.dim());
    auto t = std::make_unique<af_trajectory>();
    t->traj = integrate(spec->spec, {0.0, from_row_major(tokens, n, d)}, run_config(o, spec->spec.variant));
    const bool overflow = t->traj.stop_reason == StopReason::OverflowGuard;
    if (overflow) ctx->error = t->traj.diagnostic;
    *out = t.release();
    return overflow ? AF_OVERFLOW_GUARD : AF_OK;
  });
}

void af_trajectory_destroy(af_trajectory* traj) { delete traj; }

size_t af_trajectory_snapshot_count(const af_trajectory* traj) { return traj ? traj->traj.snapshots.size() : 0; }

size_t af_trajectory_token_count(const af_trajectory* traj) {
  return traj && !traj->traj.snapshots.empty() ? static_cast<size_t>(traj->traj.terminal().size()) : 0;
}

size_t af_trajectory_dim(const af_trajectory* traj) {
  return traj && !traj->traj.snapshots.empty() ? static_cast<size_t>(traj->traj.terminal().dim()) : 0;
}

af_status af_trajectory_time(af_context* ctx, const af_trajectory* traj, size_t snapshot, double* t) {
  return guarded(ctx, [&] {
    require(t != nullptr, "t is NULL");
    *t = checked(traj, snapshot)->traj.snapshots[snapshot].t;
    return AF_OK;
  });
}

af_status af_trajectory_tokens(af_context* ctx, const af_trajectory* traj, size_t snapshot, double* out,
                               size_t capacity) {
  return guarded(ctx, [&] {
    const Matrix& X = checked(traj, snapshot)->traj.snapshots[snapshot].tokens;
    require(out != nullptr, "out is NULL");
    if (capacity < static_cast<size_t>(X.size())) {
      fail(ErrorCode::SizeMismatch, "buffer holds " + std::to_string(capacity) + " values, need " +
                                        std::to_string(X.size()));
    }
    to_row_major(X, out);
    return AF_OK;
  });
}

af_status af_trajectory_attention(af_context* ctx, const af_trajectory* traj, size_t snapshot, double* out,
                                  size_t capacity) {
  return guarded(ctx, [&] {
    checked(traj, snapshot);
    require(traj->traj.attention_snapshots.size() == traj->traj.snapshots.size(), "attention was not captured");
    require(out != nullptr, "out is NULL");
    const Matrix& P = traj->traj.attention_snapshots[snapshot];
    if (capacity < static_cast<size_t>(P.size())) {
      fail(ErrorCode::SizeMismatch, "buffer holds " + std::to_string(capacity) + " values, need " +
                                        std::to_string(P.size()));
    }
    to_row_major(P, out);
    return AF_OK;
  });
}

const char* af_trajectory_stop_reason(const af_trajectory* traj) {
  return traj ? stop_reason_name(traj->traj.stop_reason) : "";
}

af_status af_run(af_context* ctx, const af_run_request* req) {
  return guarded(ctx, [&] {
    require(req != nullptr, "request is NULL");
    require((req->scenario != nullptr) != (req->config_path != nullptr),
            "exactly one of scenario and config_path must be given");
    Scenario s;
    if (req->config_path) {
      s = load_scenario_config(req->config_path);
    } else {
      std::vector<Scenario> extra;
      if (req->scenario_dir) extra = load_scenario_dir(req->scenario_dir);
      s = find_scenario(req->scenario, extra);
    }
    if (req->has_t_end) {
      s.cfg.t_end = req->t_end;
      validate_scenario(s);
    }
    const fs::path out = req->out_dir ? fs::path(req->out_dir)
                                      : default_output_root() / (s.name + "-seed" + std::to_string(req->seed));
    const auto t0 = std::chrono::steady_clock::now();
    const Trajectory traj = run_scenario(s, req->seed);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_run_dir(out, s, req->seed, traj, wall);
    ctx->result = Json{{"out_dir", out.string()},
                       {"scenario", s.name},
                       {"seed", req->seed},
                       {"stop_reason", stop_reason_name(traj.stop_reason)},
                       {"t_final", traj.terminal().t},
                       {"snapshots", traj.snapshots.size()},
                       {"wall_time_s", wall}}
                      .dump();
    if (traj.stop_reason == StopReason::OverflowGuard) {
      ctx->error = traj.diagnostic;
      return AF_OVERFLOW_GUARD;
    }
    return AF_OK;
  });
}

af_status af_analyze(af_context* ctx, const char* run_dir, const char* analyzer, const char* params,
                     const char* report_path, int* verdict_pass) {
  return guarded(ctx, [&] {
    require(run_dir != nullptr, "run_dir is NULL");
    require(analyzer != nullptr || params == nullptr, "params given without an analyzer");
    const RunRecord run = read_run_dir(run_dir);
    std::vector<AnalyzerRequest> requests;
    if (analyzer) {
      find_analyzer(analyzer);
      requests.push_back({analyzer, params ? parse_params(params) : std::map<std::string, double>{}});
    }
    const AnalysisReport report = analyze_run(run, requests);
    const Json j = report.to_json();
    const fs::path path = report_path ? fs::path(report_path) : fs::path(run_dir) / "report.json";
    atomic_write(path, j.dump(2) + "\n");
    ctx->result = j.dump();
    if (verdict_pass) *verdict_pass = report.pass() ? 1 : 0;
    return AF_OK;
  });
}

af_status af_verify(af_context* ctx, const char* suite, unsigned threads, const char* summary_path, int* all_pass) {
  return guarded(ctx, [&] {
    require(suite != nullptr, "suite is NULL");
    const VerifySummary summary = run_verify(suite, threads);
    const Json j = summary.to_json();
    if (summary_path) atomic_write(summary_path, j.dump(2) + "\n");
    ctx->result = j.dump();
    if (all_pass) *all_pass = summary.pass() ? 1 : 0;
    return AF_OK;
  });
}

af_status af_scenarios_list(af_context* ctx, const char* dir) {
  return guarded(ctx, [&] {
    Json list = Json::array();
    for (const auto& s : builtin_scenarios()) list.push_back(scenario_summary(s, "builtin"));
    if (dir) {
      for (const auto& s : load_scenario_dir(dir)) list.push_back(scenario_summary(s, dir));
    }
    ctx->result = list.dump();
    return AF_OK;
  });
}

af_status af_scenarios_export(af_context* ctx, const char* dir) {
  return guarded(ctx, [&] {
    require(dir != nullptr, "dir is NULL");
    export_scenario_dir(dir, builtin_scenarios());
    Json names = Json::array();
    for (const auto& s : builtin_scenarios()) names.push_back((fs::path(dir) / (s.name + ".cfg")).string());
    ctx->result = names.dump();
    return AF_OK;
  });
}

af_status af_analyzers_list(af_context* ctx) {
  return guarded(ctx, [&] {
    Json list = Json::array();
    for (const auto& a : analyzer_catalog()) {
      list.push_back({{"name", a.name},
                      {"gating", a.gating},
                      {"summary", a.summary},
                      {"defaults", a.defaults},
                      {"optional", a.optional}});
    }
    ctx->result = list.dump();
    return AF_OK;
  });
}

af_status af_export_plot_data(af_context* ctx, const char* run_dir, const char* out_dir) {
  return guarded(ctx, [&] {
    require(run_dir && out_dir, "run_dir and out_dir must be non-NULL");
    ctx->result = export_plot_data(run_dir, out_dir).manifest.dump();
    return AF_OK;
  });
}

}  // extern "C"
