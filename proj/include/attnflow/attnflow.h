#ifndef ATTNFLOW_H
#define ATTNFLOW_H

/* C interface to the attnflow simulator. All matrices are row-major doubles.
 * Every call that can fail returns an af_status; the message of the most
 * recent failure is kept on the context. Strings returned by the library stay
 * valid until the next call on the same context. A context is not safe to
 * share between threads. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define AF_API __declspec(dllexport)
#else
#define AF_API __attribute__((visibility("default")))
#endif

typedef enum af_status {
  AF_OK = 0,
  AF_INVALID_ARGUMENT = 1,
  AF_CONFIG = 2,
  AF_DIMENSION_MISMATCH = 3,
  AF_NON_INVERTIBLE_STEP = 4,
  AF_MISSING_FEED_FORWARD = 5,
  AF_UNSUPPORTED_HEADS = 6,
  AF_INVALID_PERMUTATION = 7,
  AF_OVERFLOW_GUARD = 8,
  AF_NON_FINITE = 9,
  AF_NON_CONVERGENCE = 10,
  AF_NOT_SYMMETRIC = 11,
  AF_NOT_PSD = 12,
  AF_ALL_NEG_INFINITY = 13,
  AF_NOT_STOCHASTIC = 14,
  AF_TOO_MANY_VERTICES = 15,
  AF_NOT_CONVERGED = 16,
  AF_NOT_GOOD_TRIPLE = 17,
  AF_NOT_PARANORMAL = 18,
  AF_COMPLEX_EIGENVALUE = 19,
  AF_WRONG_VARIANT = 20,
  AF_ZERO_PERTURBATION = 21,
  AF_SIZE_MISMATCH = 22,
  AF_MISSING_ARTIFACTS = 23,
  AF_UNKNOWN_SUITE = 24,
  AF_UNKNOWN_ANALYZER = 25,
  AF_UNKNOWN_SCENARIO = 26,
  AF_IO = 27,
  AF_INTERNAL = 100
} af_status;

typedef struct af_context af_context;
typedef struct af_spec af_spec;
typedef struct af_trajectory af_trajectory;

AF_API const char* af_version(void);
AF_API const char* af_status_name(af_status status);

AF_API af_status af_context_create(af_context** out);
AF_API void af_context_destroy(af_context* ctx);
/* Message of the last failure on ctx, "" after a success. */
AF_API const char* af_last_error(const af_context* ctx);
/* JSON text produced by the last command-level call (af_run, af_analyze, ...). */
AF_API const char* af_last_result(const af_context* ctx);

/* ---- models ------------------------------------------------------------- */

/* variant: raw_continuous, rescaled_continuous, raw_discrete,
 * rescaled_discrete, feedforward_rescaled, multihead_discrete.
 * Q, K, V are d x d. */
AF_API af_status af_spec_create(af_context* ctx, const char* variant, size_t d, const double* Q, const double* K,
                                const double* V, double dt, af_spec** out);
AF_API af_status af_spec_add_head(af_context* ctx, af_spec* spec, const double* Q, const double* K, const double* V);
/* W is d x d, b has d entries (may be NULL for zero). activation: relu, tanh, identity. */
AF_API af_status af_spec_set_feedforward(af_context* ctx, af_spec* spec, const double* W, const double* b,
                                         const char* activation, int bias_inside);
AF_API af_status af_spec_dim(af_context* ctx, const af_spec* spec, size_t* d);
/* Loads Q.txt, K.txt and V.txt from a directory. */
AF_API af_status af_spec_load_head_dir(af_context* ctx, const char* variant, const char* dir, double dt, af_spec** out);
AF_API void af_spec_destroy(af_spec* spec);

/* ---- integration -------------------------------------------------------- */

typedef struct af_run_options {
  double t_end;
  double dt;
  int snapshot_stride;
  /* 1 uses velocity_stop_tol; 0 disables the early stop; -1 applies the
   * variant default. */
  int velocity_stop;
  double velocity_stop_tol;
  int capture_attention;
  double coordinate_guard;
  int expm_refresh;
} af_run_options;

AF_API void af_run_options_default(af_run_options* opts);

/* tokens is n x d. A run stopped by the coordinate guard still yields a
 * trajectory and returns AF_OVERFLOW_GUARD. */
AF_API af_status af_integrate(af_context* ctx, const af_spec* spec, size_t n, const double* tokens,
                              const af_run_options* opts, af_trajectory** out);
AF_API void af_trajectory_destroy(af_trajectory* traj);
AF_API size_t af_trajectory_snapshot_count(const af_trajectory* traj);
AF_API size_t af_trajectory_token_count(const af_trajectory* traj);
AF_API size_t af_trajectory_dim(const af_trajectory* traj);
AF_API af_status af_trajectory_time(af_context* ctx, const af_trajectory* traj, size_t snapshot, double* t);
/* Copies n x d values into out (capacity in doubles). */
AF_API af_status af_trajectory_tokens(af_context* ctx, const af_trajectory* traj, size_t snapshot, double* out,
                                      size_t capacity);
/* Copies n x n values; AF_INVALID_ARGUMENT when attention was not captured. */
AF_API af_status af_trajectory_attention(af_context* ctx, const af_trajectory* traj, size_t snapshot, double* out,
                                         size_t capacity);
/* completed, velocity_converged or overflow_guard. */
AF_API const char* af_trajectory_stop_reason(const af_trajectory* traj);

/* ---- commands ----------------------------------------------------------- */

typedef struct af_run_request {
  const char* scenario;     /* builtin or scenario_dir name; NULL with config_path */
  const char* config_path;  /* scenario config file; NULL with scenario */
  const char* scenario_dir; /* extra scenario configs, searched after the builtins; may be NULL */
  const char* out_dir;      /* NULL: <output root>/<scenario>-seed<seed> */
  uint64_t seed;
  int has_t_end;
  double t_end;
} af_run_request;

/* Writes a run directory. Result JSON: out_dir, scenario, seed, stop_reason,
 * t_final, snapshots, wall_time_s. Returns AF_OVERFLOW_GUARD after writing the
 * partial run. */
AF_API af_status af_run(af_context* ctx, const af_run_request* req);

/* analyzer NULL runs the run's own analyzers. params is "k=v,k=v" or NULL.
 * report_path NULL writes <run_dir>/report.json. The report JSON is the result. */
AF_API af_status af_analyze(af_context* ctx, const char* run_dir, const char* analyzer, const char* params,
                            const char* report_path, int* verdict_pass);

/* suite: monotone, oracles, numerics, scenarios, all. threads 0 uses every
 * core. summary_path may be NULL. The summary JSON is the result. */
AF_API af_status af_verify(af_context* ctx, const char* suite, unsigned threads, const char* summary_path,
                           int* all_pass);

/* Result: JSON array describing the builtin scenarios plus those in dir (may be NULL). */
AF_API af_status af_scenarios_list(af_context* ctx, const char* dir);
/* Writes <name>.cfg for every builtin scenario. */
AF_API af_status af_scenarios_export(af_context* ctx, const char* dir);
/* Result: the analyzer catalog as JSON. */
AF_API af_status af_analyzers_list(af_context* ctx);

/* Result: the plot manifest JSON. */
AF_API af_status af_export_plot_data(af_context* ctx, const char* run_dir, const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif
