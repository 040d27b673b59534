#include "doctest.h"

#include "attnflow/error.hpp"
#include "attnflow/experiments.hpp"
#include "attnflow/plotdata.hpp"

#include <unistd.h>

#include <cmath>
#include <sstream>

using namespace attnflow;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("attnflow-test-plot-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

fs::path make_run(const fs::path& root, const std::string& name, double t_end, std::uint64_t seed = 0) {
  Scenario s = find_scenario(name);
  s.cfg.t_end = t_end;
  const auto traj = run_scenario(s, seed);
  write_run_dir(root / name, s, seed, traj, 0.0);
  return root / name;
}

}  // namespace

TEST_CASE("2D export: trajectory rows and eigen-coordinate bands") {
  TempDir tmp("2d");
  const fs::path run = make_run(tmp.path, "hyperplane_2d", 2.0);
  const auto ex = export_plot_data(run, tmp.path / "out");
  CHECK(ex.manifest["format"] == "attnflow-plot-data");
  CHECK(ex.manifest["kinds"] == Json::array({"trajectory2d", "eig_variance_band"}));

  const auto traj = read_run_dir(run).traj;
  const auto rows = csv_rows(read_file(tmp.path / "out" / "trajectory2d.csv"));
  CHECK(rows[0] == std::vector<std::string>{"t", "token", "x", "y"});
  CHECK(rows.size() == 1 + traj.snapshots.size() * 40);

  // Symmetric V: the dual functional of the positive eigenvalue is the unit
  // eigenvector, up to sign. Closed form for [[a, b], [b, c]].
  const Matrix& V = traj.spec.params.head().V;
  const double a = V(0, 0), b = V(0, 1), c = V(1, 1);
  const double lam = 0.5 * (a + c) + std::sqrt(0.25 * (a - c) * (a - c) + b * b);
  Vector u(2);
  u << b, lam - a;
  u.normalize();

  const auto band = csv_rows(read_file(tmp.path / "out" / "eig_variance_band.csv"));
  CHECK(band[0] == std::vector<std::string>{"t", "k", "eigenvalue", "mean", "variance"});
  REQUIRE(band.size() == 1 + traj.snapshots.size());
  for (std::size_t s = 0; s < traj.snapshots.size(); ++s) {
    const Vector coords = traj.snapshots[s].tokens * u;
    const double mean = coords.mean();
    const double var = (coords.array() - mean).square().mean();
    const auto& row = band[s + 1];
    CHECK(std::stod(row[2]) == doctest::Approx(lam).epsilon(1e-12));
    CHECK(std::abs(std::stod(row[3])) == doctest::Approx(std::abs(mean)).epsilon(1e-9));
    CHECK(std::stod(row[4]) == doctest::Approx(var).epsilon(1e-9));
  }

  const Json limits = Json::parse(read_file(tmp.path / "out" / "limits.json"));
  REQUIRE(limits.contains("hyperplane"));
  CHECK(limits["hyperplane"]["normal"].size() == 2);
}

TEST_CASE("1D export: long-format attention") {
  TempDir tmp("1d");
  const fs::path run = make_run(tmp.path, "boolean_1d", 0.3);
  const auto ex = export_plot_data(run, tmp.path / "out");
  CHECK(std::find(ex.kinds.begin(), ex.kinds.end(), "attention_heatmap") != ex.kinds.end());
  CHECK(!fs::exists(tmp.path / "out" / "trajectory2d.csv"));
  const auto rows = csv_rows(read_file(tmp.path / "out" / "attention_long.csv"));
  const auto traj = read_run_dir(run).traj;
  REQUIRE(rows.size() == 1 + traj.snapshots.size() * 40 * 40);
  CHECK(rows[0] == std::vector<std::string>{"snapshot", "t", "i", "j", "p"});
  // Row sums of the first snapshot.
  for (int i = 0; i < 40; ++i) {
    double sum = 0.0;
    for (int j = 0; j < 40; ++j) sum += std::stod(rows[1 + 40 * i + j][4]);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("3D export with polytope overlay and missing runs") {
  TempDir tmp("3d");
  const fs::path run = make_run(tmp.path, "polytope_3d", 40.0);
  export_plot_data(run, tmp.path / "out");
  const Json limits = Json::parse(read_file(tmp.path / "out" / "limits.json"));
  REQUIRE(limits.contains("polytope"));
  CHECK(limits["polytope"]["S"].size() >= limits["polytope"]["vertices"].size());
  CHECK(fs::exists(tmp.path / "out" / "trajectory3d.csv"));
  CHECK_THROWS_AS(export_plot_data(tmp.path / "nothing", tmp.path / "o2"), Error);
}
