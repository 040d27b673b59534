#include "doctest.h"

#include "attnflow/error.hpp"
#include "attnflow/experiments.hpp"
#include "attnflow/io.hpp"
#include "attnflow/spectral.hpp"

#include <unistd.h>

#include <cmath>
#include <cstring>
#include <limits>

using namespace attnflow;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("attnflow-test-io-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::InvalidArgument;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

const char* kMinimalConfig =
    "name = tiny\n"
    "variant = raw_continuous\n"
    "t_end = 1\n"
    "Q = 1, 0; 0, 1\n"
    "K = 1, 0; 0, 1\n"
    "V = 1, 0; 0, -1\n"
    "init.n = 4\n";

}  // namespace

TEST_CASE("format_real round-trips doubles bitwise") {
  const double values[] = {0.0, -0.0, 0.1, 1.0 / 3.0, -2.5e-300, 1e300, 4.9406564584124654e-324,
                           std::numeric_limits<double>::max(), 123456789.123456789, -7.0};
  for (double x : values) {
    const double y = parse_real(format_real(x), "x");
    CHECK(std::memcmp(&x, &y, sizeof x) == 0);
  }
}

TEST_CASE("parse_real is strict") {
  CHECK(parse_real(" 2.5 ", "x") == 2.5);
  CHECK(parse_real("-1e-3", "x") == -1e-3);
  for (const char* bad : {"", "abc", "1.0x", "1,5", "--1"}) {
    CHECK(code_of([&] { parse_real(bad, "threshold"); }) == ErrorCode::Config);
  }
  CHECK(message_of([] { parse_real("zz", "t_end"); }).find("t_end") != std::string::npos);
}

TEST_CASE("matrix text: separators, comments and ragged rows") {
  const Matrix M = parse_matrix_text("# header\n1 2, 3\n\n4,5 6  # trailing\n", "m");
  REQUIRE(M.rows() == 2);
  REQUIRE(M.cols() == 3);
  CHECK(M(0, 2) == 3.0);
  CHECK(M(1, 0) == 4.0);
  const auto msg = message_of([] { parse_matrix_text("1 2\n3\n", "m.txt"); });
  CHECK(msg.find("m.txt") != std::string::npos);
  CHECK(msg.find("row 2") != std::string::npos);
  CHECK(code_of([] { parse_matrix_text("# only a comment\n", "m"); }) == ErrorCode::Config);
  CHECK(code_of([] { parse_matrix_text("1 x\n", "m"); }) == ErrorCode::Config);

  const Matrix R = sample_matrix(3, 4, 77);
  CHECK(bitwise_equal(parse_matrix_text(matrix_to_text(R), "r"), R));
  CHECK(bitwise_equal(parse_inline_matrix(inline_matrix(R), "r"), R));
}

TEST_CASE("head directory loader on a synthetic good triple") {
  TempDir tmp("heads");
  // V = P diag(1.5, 0.3, -0.7) P^{-1}; the leading direction is P e_1 = (1, 1, 0).
  Matrix P(3, 3);
  P << 1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0;
  Matrix D = Matrix::Zero(3, 3);
  D.diagonal() << 1.5, 0.3, -0.7;
  const Matrix V = P * D * P.inverse();
  Matrix Q = Matrix::Identity(3, 3);
  Q(0, 1) = 0.2;
  const Matrix K = Matrix::Identity(3, 3);
  atomic_write(tmp.path / "Q.txt", matrix_to_text(Q));
  atomic_write(tmp.path / "K.txt", "# key matrix\n" + matrix_to_text(K));
  atomic_write(tmp.path / "V.txt", matrix_to_text(V));

  const HeadParams h = load_head_dir(tmp.path);
  CHECK(bitwise_equal(h.Q, Q));
  CHECK(bitwise_equal(h.K, K));
  CHECK(bitwise_equal(h.V, V));
  const auto tc = classify_triple(h);
  CHECK(tc.kind == TripleKind::Good);
  CHECK(tc.lambda1 == doctest::Approx(1.5).epsilon(1e-12));
  // <Q phi, K phi> for phi = (1,1,0)/sqrt(2): (1.2 + 1) / 2 > 0.
  CHECK(tc.qk_along_phi1 == doctest::Approx(1.1).epsilon(1e-9));

  fs::remove(tmp.path / "K.txt");
  CHECK(code_of([&] { load_head_dir(tmp.path); }) == ErrorCode::Config);
  atomic_write(tmp.path / "K.txt", "1 0\n0 1\n");
  CHECK(code_of([&] { load_head_dir(tmp.path); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("every builtin scenario survives a config round trip") {
  for (const auto& s : builtin_scenarios()) {
    CAPTURE(s.name);
    const std::string text = scenario_to_config(s);
    const Scenario back = parse_scenario_config(text, s.name + ".cfg");
    CHECK(scenario_to_config(back) == text);
    CHECK(back.spec.variant == s.spec.variant);
    REQUIRE(back.spec.params.heads.size() == s.spec.params.heads.size());
    CHECK(bitwise_equal(back.spec.params.head().V, s.spec.params.head().V));
    CHECK(bitwise_equal(scenario_init(back, 3).tokens, scenario_init(s, 3).tokens));
    CHECK(back.analyzers.size() == s.analyzers.size());
  }
}

TEST_CASE("config parsing: defaults and file references") {
  TempDir tmp("cfg");
  const Scenario s = parse_scenario_config(kMinimalConfig, "tiny.cfg");
  CHECK(s.name == "tiny");
  CHECK(s.cfg.t_end == 1.0);
  CHECK(s.cfg.dt == 0.1);
  CHECK(!s.cfg.velocity_stop_tol.has_value());
  CHECK(s.init_rule == InitRule::UniformCube);
  CHECK(s.analyzers.empty());

  const Scenario r = parse_scenario_config(
      "name = r\nvariant = rescaled_continuous\nQ = 1\nK = 1\nV = 1\ninit.n = 3\nvelocity_stop_tol = none\n", "r.cfg");
  CHECK(!r.cfg.velocity_stop_tol.has_value());
  CHECK(parse_scenario_config("name = r\nvariant = rescaled_continuous\nQ = 1\nK = 1\nV = 1\ninit.n = 3\n", "r.cfg")
            .cfg.velocity_stop_tol == default_velocity_stop_tol(Variant::RescaledContinuous));

  atomic_write(tmp.path / "m" / "V.txt", "2 0\n0 -1\n");
  const std::string with_file = std::string(kMinimalConfig).replace(std::string(kMinimalConfig).find("V = 1, 0; 0, -1"),
                                                                    15, "V = @m/V.txt");
  atomic_write(tmp.path / "tiny.cfg", with_file);
  const Scenario f = load_scenario_config(tmp.path / "tiny.cfg");
  CHECK(f.spec.params.head().V(0, 0) == 2.0);

  const Scenario e = parse_scenario_config(
      "name = e\nvariant = raw_continuous\nQ = 1\nK = 1\nV = -1\ninit = explicit\ninit.tokens = 0.5; -0.25\n"
      "analyzer.collapse = radius=1e-2\n",
      "e.cfg");
  CHECK(e.init_rule == InitRule::Explicit);
  CHECK(e.n == 2);
  CHECK(scenario_init(e, 99).tokens(1, 0) == -0.25);
  REQUIRE(e.analyzers.size() == 1);
  CHECK(e.analyzers[0].params.at("radius") == 1e-2);
}

TEST_CASE("config errors name the file, line and field") {
  auto err = [](const std::string& text) { return message_of([&] { parse_scenario_config(text, "bad.cfg"); }); };
  auto code = [](const std::string& text) { return code_of([&] { parse_scenario_config(text, "bad.cfg"); }); };
  const std::string base = kMinimalConfig;

  CHECK(err(base + "colour = blue\n").find("bad.cfg:8") != std::string::npos);
  CHECK(err(base + "colour = blue\n").find("colour") != std::string::npos);
  CHECK(err(base + "t_end = 2\n").find("duplicate key 't_end'") != std::string::npos);
  CHECK(err("name = x\nQ = 1\nK = 1\nV = 1\ninit.n = 2\n").find("'variant'") != std::string::npos);
  CHECK(err("name = x\nvariant = sideways\nQ = 1\nK = 1\nV = 1\ninit.n = 2\n").find("sideways") != std::string::npos);
  const std::string bad_dt = std::string(base).replace(base.find("t_end = 1"), 9, "t_end = soon");
  CHECK(err(bad_dt).find("bad.cfg:3") != std::string::npos);
  CHECK(err(bad_dt).find("t_end") != std::string::npos);
  CHECK(err(base + "not a pair\n").find("bad.cfg:8") != std::string::npos);
  CHECK(err(std::string(base).replace(base.find("V = 1, 0; 0, -1"), 15, "V = 1, 0; 0")).find("'V'") !=
        std::string::npos);

  for (const std::string& text : {base + "colour = blue\n", std::string(base).replace(base.find("t_end = 1"), 9, "t_end = 0"),
                                  base + "ffn.activation = relu\n", base + "analyzer.boolean = tol\n",
                                  std::string(base).replace(base.find("name = tiny"), 11, "name = a/b")}) {
    CAPTURE(text);
    CHECK(code(text) == ErrorCode::Config);
  }
  CHECK(code_of([] { load_scenario_config("/nonexistent/x.cfg"); }) == ErrorCode::Config);
}

TEST_CASE("scenario directories: export, load, duplicate names") {
  TempDir tmp("dir");
  export_scenario_dir(tmp.path / "all", builtin_scenarios());
  const auto loaded = load_scenario_dir(tmp.path / "all");
  REQUIRE(loaded.size() == builtin_scenarios().size());
  for (const auto& s : loaded) CHECK(scenario_to_config(s) == scenario_to_config(find_scenario(s.name)));

  atomic_write(tmp.path / "dup" / "a.cfg", kMinimalConfig);
  atomic_write(tmp.path / "dup" / "b.cfg", kMinimalConfig);
  CHECK(code_of([&] { load_scenario_dir(tmp.path / "dup"); }) == ErrorCode::Config);
  CHECK(code_of([&] { load_scenario_dir(tmp.path / "missing"); }) == ErrorCode::Config);
}

TEST_CASE("atomic_write replaces content and leaves no temporaries") {
  TempDir tmp("atomic");
  const fs::path f = tmp.path / "deep" / "er" / "x.csv";
  atomic_write(f, "first\n");
  CHECK(read_file(f) == "first\n");
  atomic_write(f, "second\n");
  CHECK(read_file(f) == "second\n");
  int entries = 0;
  for (const auto& e : fs::directory_iterator(f.parent_path())) {
    ++entries;
    CHECK(e.path().filename() == "x.csv");
  }
  CHECK(entries == 1);
  CHECK(code_of([&] { read_file(tmp.path / "nope"); }) == ErrorCode::Io);
  // A regular file where a directory is needed.
  CHECK(code_of([&] { atomic_write(f / "child.txt", "x"); }) == ErrorCode::Io);
}

TEST_CASE("trajectory and attention CSVs are bitwise round trips") {
  Scenario s = find_scenario("boolean_1d");
  s.cfg.t_end = 1.0;
  const Trajectory traj = run_scenario(s, 5);
  const std::string csv = trajectory_csv(traj);
  CHECK(csv.rfind("t,token_index,coord_0\n", 0) == 0);
  CHECK(csv.find('\r') == std::string::npos);
  const auto back = parse_trajectory_csv(csv, "traj.csv");
  REQUIRE(back.size() == traj.snapshots.size());
  for (std::size_t k = 0; k < back.size(); ++k) {
    CHECK(back[k].t == traj.snapshots[k].t);
    CHECK(bitwise_equal(back[k].tokens, traj.snapshots[k].tokens));
  }
  REQUIRE(!traj.attention_snapshots.empty());
  const Matrix& P = traj.attention_snapshots.back();
  CHECK(bitwise_equal(parse_attention_csv(attention_csv(P), "p.csv"), P));

  CHECK(code_of([] { parse_trajectory_csv("t,token_index,coord_0\n0,0\n", "short.csv"); }) == ErrorCode::Io);
  CHECK(code_of([] { parse_trajectory_csv("", "empty.csv"); }) == ErrorCode::Io);
}

TEST_CASE("run directories: write, read back, missing artifacts") {
  TempDir tmp("run");
  Scenario s = find_scenario("boolean_1d");
  s.cfg.t_end = 0.5;
  const Trajectory traj = run_scenario(s, 2);
  const fs::path dir = tmp.path / "b";
  write_run_dir(dir, s, 2, traj, 0.25);

  CHECK(fs::exists(dir / "trajectory.csv"));
  CHECK(fs::exists(dir / "manifest.json"));
  CHECK(fs::exists(dir / "attention" / "attention_00000.csv"));
  CHECK(fs::exists(dir / "attention" / "attention_00000.json"));

  const RunRecord run = read_run_dir(dir);
  CHECK(run.seed == 2);
  CHECK(run.scenario.name == "boolean_1d");
  CHECK(scenario_to_config(run.scenario) == scenario_to_config(s));
  CHECK(run.wall_time == 0.25);
  CHECK(run.traj.stop_reason == traj.stop_reason);
  CHECK(trajectory_csv(run.traj) == trajectory_csv(traj));
  REQUIRE(run.traj.attention_snapshots.size() == traj.attention_snapshots.size());
  CHECK(bitwise_equal(run.traj.attention_snapshots.back(), traj.attention_snapshots.back()));
  CHECK(run.manifest["format"] == "attnflow-run");
  CHECK(run.manifest["n"] == 40);
  CHECK(run.manifest["d"] == 1);
  CHECK(run.manifest["stop_reason"] == "completed");

  fs::copy(dir, tmp.path / "no_traj", fs::copy_options::recursive);
  fs::remove(tmp.path / "no_traj" / "trajectory.csv");
  CHECK(code_of([&] { read_run_dir(tmp.path / "no_traj"); }) == ErrorCode::MissingArtifacts);
  fs::remove(dir / "manifest.json");
  CHECK(code_of([&] { read_run_dir(dir); }) == ErrorCode::MissingArtifacts);
}
