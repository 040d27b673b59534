// Links the shared library only.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "attnflow/attnflow.h"

#include <json.hpp>

#include <unistd.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

struct Ctx {
  af_context* c = nullptr;
  Ctx() { REQUIRE(af_context_create(&c) == AF_OK); }
  ~Ctx() { af_context_destroy(c); }
  Json result() const { return Json::parse(af_last_result(c)); }
};

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("attnflow-test-capi-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

af_spec* scalar_spec(Ctx& ctx, const char* variant, double v) {
  const double one = 1.0;
  af_spec* s = nullptr;
  REQUIRE(af_spec_create(ctx.c, variant, 1, &one, &one, &v, 0.1, &s) == AF_OK);
  return s;
}

}  // namespace

TEST_CASE("status names and version") {
  CHECK(std::string(af_status_name(AF_OK)) == "ok");
  CHECK(std::string(af_status_name(AF_CONFIG)) == "ConfigError");
  CHECK(std::string(af_status_name(AF_IO)) != "unknown");
  CHECK(std::string(af_status_name(AF_INTERNAL)) == "internal");
  CHECK(std::string(af_status_name(static_cast<af_status>(55))) == "unknown");
  CHECK(std::strlen(af_version()) > 0);
  CHECK(af_context_create(nullptr) == AF_INVALID_ARGUMENT);
}

TEST_CASE("spec construction errors are reported on the context") {
  Ctx ctx;
  const double one = 1.0;
  af_spec* s = nullptr;
  CHECK(af_spec_create(ctx.c, "sideways", 1, &one, &one, &one, 0.1, &s) == AF_INVALID_ARGUMENT);
  CHECK(std::string(af_last_error(ctx.c)).find("sideways") != std::string::npos);
  CHECK(af_spec_create(ctx.c, "raw_continuous", 1, nullptr, &one, &one, 0.1, &s) == AF_INVALID_ARGUMENT);
  CHECK(af_spec_create(nullptr, "raw_continuous", 1, &one, &one, &one, 0.1, &s) == AF_INVALID_ARGUMENT);
  CHECK(af_spec_create(ctx.c, "raw_continuous", 1, &one, &one, &one, 0.1, &s) == AF_OK);
  CHECK(std::string(af_last_error(ctx.c)).empty());
  size_t d = 0;
  CHECK(af_spec_dim(ctx.c, s, &d) == AF_OK);
  CHECK(d == 1);
  CHECK(af_spec_set_feedforward(ctx.c, s, &one, nullptr, "softplus", 1) == AF_INVALID_ARGUMENT);
  af_spec_destroy(s);
}

TEST_CASE("one token follows x' = x") {
  // A single token attends only to itself, so x(t) = e^t x(0) up to RK4 error.
  Ctx ctx;
  af_spec* s = scalar_spec(ctx, "raw_continuous", 1.0);
  af_run_options o;
  af_run_options_default(&o);
  o.t_end = 1.0;
  o.dt = 0.01;
  const double x0 = 0.5;
  af_trajectory* t = nullptr;
  REQUIRE(af_integrate(ctx.c, s, 1, &x0, &o, &t) == AF_OK);
  const size_t count = af_trajectory_snapshot_count(t);
  CHECK(count == 101);
  CHECK(af_trajectory_token_count(t) == 1);
  CHECK(af_trajectory_dim(t) == 1);
  double time = 0.0, x = 0.0;
  CHECK(af_trajectory_time(ctx.c, t, count - 1, &time) == AF_OK);
  CHECK(time == doctest::Approx(1.0));
  CHECK(af_trajectory_tokens(ctx.c, t, count - 1, &x, 1) == AF_OK);
  CHECK(std::abs(x - 0.5 * std::exp(1.0)) < 1e-9);
  CHECK(std::string(af_trajectory_stop_reason(t)) == "completed");
  CHECK(af_trajectory_time(ctx.c, t, count, &time) == AF_INVALID_ARGUMENT);
  CHECK(af_trajectory_attention(ctx.c, t, 0, &x, 1) == AF_INVALID_ARGUMENT);
  af_trajectory_destroy(t);
  af_spec_destroy(s);
}

TEST_CASE("attention capture and buffer sizes") {
  Ctx ctx;
  af_spec* s = scalar_spec(ctx, "rescaled_continuous", 1.0);
  af_run_options o;
  af_run_options_default(&o);
  o.t_end = 0.5;
  o.capture_attention = 1;
  const double x0[3] = {-1.0, 0.0, 2.0};
  af_trajectory* t = nullptr;
  REQUIRE(af_integrate(ctx.c, s, 3, x0, &o, &t) == AF_OK);
  std::vector<double> P(9);
  CHECK(af_trajectory_attention(ctx.c, t, 0, P.data(), 8) == AF_SIZE_MISMATCH);
  REQUIRE(af_trajectory_attention(ctx.c, t, 0, P.data(), P.size()) == AF_OK);
  for (int i = 0; i < 3; ++i) {
    CHECK(P[3 * i] + P[3 * i + 1] + P[3 * i + 2] == doctest::Approx(1.0));
  }
  std::vector<double> X(3);
  CHECK(af_trajectory_tokens(ctx.c, t, 0, X.data(), 2) == AF_SIZE_MISMATCH);
  CHECK(af_trajectory_tokens(ctx.c, t, 0, X.data(), 3) == AF_OK);
  CHECK(X[2] == 2.0);
  af_trajectory_destroy(t);
  af_spec_destroy(s);
}

TEST_CASE("coordinate guard yields a partial trajectory") {
  Ctx ctx;
  af_spec* s = scalar_spec(ctx, "raw_continuous", 10.0);
  af_run_options o;
  af_run_options_default(&o);
  o.t_end = 10.0;
  o.coordinate_guard = 1e6;
  const double x0 = 1.0;
  af_trajectory* t = nullptr;
  CHECK(af_integrate(ctx.c, s, 1, &x0, &o, &t) == AF_OVERFLOW_GUARD);
  REQUIRE(t != nullptr);
  CHECK(std::string(af_trajectory_stop_reason(t)) == "overflow_guard");
  CHECK(af_trajectory_snapshot_count(t) > 1);
  CHECK(af_trajectory_snapshot_count(t) < 101);
  af_trajectory_destroy(t);
  af_spec_destroy(s);
}

TEST_CASE("multi-head and feed-forward specs integrate") {
  Ctx ctx;
  const double I[4] = {1, 0, 0, 1};
  const double V[4] = {0.5, 0.1, 0.0, -0.3};
  af_spec* s = nullptr;
  REQUIRE(af_spec_create(ctx.c, "multihead_discrete", 2, I, I, V, 0.1, &s) == AF_OK);
  REQUIRE(af_spec_add_head(ctx.c, s, I, I, I) == AF_OK);
  const double x0[4] = {0.1, 0.2, -0.3, 0.4};
  af_run_options o;
  af_run_options_default(&o);
  o.t_end = 1.0;
  af_trajectory* t = nullptr;
  CHECK(af_integrate(ctx.c, s, 2, x0, &o, &t) == AF_OK);
  af_trajectory_destroy(t);
  af_spec_destroy(s);

  REQUIRE(af_spec_create(ctx.c, "feedforward_rescaled", 2, I, I, V, 0.1, &s) == AF_OK);
  CHECK(af_integrate(ctx.c, s, 2, x0, &o, &t) == AF_MISSING_FEED_FORWARD);
  REQUIRE(af_spec_set_feedforward(ctx.c, s, I, nullptr, "tanh", 1) == AF_OK);
  CHECK(af_integrate(ctx.c, s, 2, x0, &o, &t) == AF_OK);
  af_trajectory_destroy(t);
  af_spec_destroy(s);
}

TEST_CASE("head directory loader through the C API") {
  Ctx ctx;
  TempDir tmp("heads");
  fs::create_directories(tmp.path);
  for (const char* f : {"Q.txt", "K.txt"}) {
    FILE* fp = std::fopen((tmp.path / f).c_str(), "w");
    std::fputs("1 0\n0 1\n", fp);
    std::fclose(fp);
  }
  af_spec* s = nullptr;
  CHECK(af_spec_load_head_dir(ctx.c, "rescaled_continuous", tmp.path.c_str(), 0.1, &s) == AF_CONFIG);
  FILE* fp = std::fopen((tmp.path / "V.txt").c_str(), "w");
  std::fputs("2 0\n0 -1\n", fp);
  std::fclose(fp);
  REQUIRE(af_spec_load_head_dir(ctx.c, "rescaled_continuous", tmp.path.c_str(), 0.1, &s) == AF_OK);
  size_t d = 0;
  af_spec_dim(ctx.c, s, &d);
  CHECK(d == 2);
  af_spec_destroy(s);
}

TEST_CASE("command-level calls") {
  Ctx ctx;
  TempDir tmp("cmd");

  af_run_request req{};
  req.scenario = "polytope_3d";
  req.has_t_end = 1;
  req.t_end = 0.0;
  CHECK(af_run(ctx.c, &req) == AF_CONFIG);
  CHECK(std::string(af_last_error(ctx.c)).find("t_end") != std::string::npos);
  req.scenario = "no_such";
  req.has_t_end = 0;
  CHECK(af_run(ctx.c, &req) == AF_UNKNOWN_SCENARIO);
  req.scenario = nullptr;
  CHECK(af_run(ctx.c, &req) == AF_INVALID_ARGUMENT);

  const std::string out = (tmp.path / "hp").string();
  req.scenario = "hyperplane_2d";
  req.seed = 3;
  req.out_dir = out.c_str();
  REQUIRE(af_run(ctx.c, &req) == AF_OK);
  const Json run = ctx.result();
  CHECK(run["stop_reason"] == "completed");
  CHECK(run["seed"] == 3);
  CHECK(fs::exists(tmp.path / "hp" / "manifest.json"));

  int verdict = -1;
  REQUIRE(af_analyze(ctx.c, out.c_str(), nullptr, nullptr, nullptr, &verdict) == AF_OK);
  CHECK(verdict == 1);
  CHECK(fs::exists(tmp.path / "hp" / "report.json"));
  CHECK(ctx.result()["format"] == "attnflow-report");
  CHECK(af_analyze(ctx.c, out.c_str(), "hyperplane", "eps=1e-2,bogus=1", nullptr, &verdict) == AF_INVALID_ARGUMENT);
  CHECK(af_analyze(ctx.c, out.c_str(), "nope", nullptr, nullptr, &verdict) == AF_UNKNOWN_ANALYZER);
  CHECK(af_analyze(ctx.c, (tmp.path / "absent").c_str(), nullptr, nullptr, nullptr, &verdict) ==
        AF_MISSING_ARTIFACTS);
  const std::string alt = (tmp.path / "alt.json").string();
  REQUIRE(af_analyze(ctx.c, out.c_str(), "clusters", "eps=0.1", alt.c_str(), &verdict) == AF_OK);
  CHECK(fs::exists(alt));

  const std::string plot = (tmp.path / "plot").string();
  REQUIRE(af_export_plot_data(ctx.c, out.c_str(), plot.c_str()) == AF_OK);
  CHECK(ctx.result()["format"] == "attnflow-plot-data");
  CHECK(fs::exists(tmp.path / "plot" / "trajectory2d.csv"));

  REQUIRE(af_scenarios_list(ctx.c, nullptr) == AF_OK);
  const size_t builtin = ctx.result().size();
  CHECK(builtin >= 10);
  const std::string cfgs = (tmp.path / "cfgs").string();
  REQUIRE(af_scenarios_export(ctx.c, cfgs.c_str()) == AF_OK);
  REQUIRE(af_scenarios_list(ctx.c, cfgs.c_str()) == AF_OK);
  CHECK(ctx.result().size() == 2 * builtin);
  REQUIRE(af_analyzers_list(ctx.c) == AF_OK);
  CHECK(ctx.result().size() >= 13);

  int all = -1;
  CHECK(af_verify(ctx.c, "everything", 1, nullptr, &all) == AF_UNKNOWN_SUITE);
  CHECK(std::string(af_last_error(ctx.c)).find("monotone") != std::string::npos);
  const std::string summary = (tmp.path / "verify.json").string();
  REQUIRE(af_verify(ctx.c, "oracles", 2, summary.c_str(), &all) == AF_OK);
  CHECK(all == 1);
  CHECK(fs::exists(summary));
  CHECK(ctx.result()["checks"].size() >= 3);
}
