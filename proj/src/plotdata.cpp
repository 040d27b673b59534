#include "attnflow/plotdata.hpp"

#include "attnflow/analysis.hpp"
#include "attnflow/error.hpp"
#include "attnflow/geometry.hpp"
#include "attnflow/spectral.hpp"

#include <algorithm>

namespace attnflow {

namespace {

std::string trajectory_xy_csv(const Trajectory& traj) {
  const Eigen::Index d = traj.terminal().dim();
  std::string out = "t,token,x,y";
  if (d == 3) out += ",z";
  out += '\n';
  for (const auto& s : traj.snapshots) {
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      out += format_real(s.t) + ',' + std::to_string(i);
      for (Eigen::Index c = 0; c < d; ++c) out += ',' + format_real(s.tokens(i, c));
      out += '\n';
    }
  }
  return out;
}

std::string attention_long_csv(const Trajectory& traj) {
  std::string out = "snapshot,t,i,j,p\n";
  for (std::size_t s = 0; s < traj.attention_snapshots.size(); ++s) {
    const Matrix& P = traj.attention_snapshots[s];
    const std::string prefix = std::to_string(s) + ',' + format_real(traj.snapshots[s].t) + ',';
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
      for (Eigen::Index j = 0; j < P.cols(); ++j) {
        out += prefix + std::to_string(i) + ',' + std::to_string(j) + ',' + format_real(P(i, j)) + '\n';
      }
    }
  }
  return out;
}

// Empty when V has no real positive eigenvalue.
std::string eig_band_csv(const Trajectory& traj) {
  const auto sd = eig(traj.spec.params.head().V);
  const auto probe = codimension_probe(traj, sd);
  std::string out;
  for (const auto& dir : probe.directions) {
    if (!sd.is_real(dir.index) || dir.eigenvalue.real() <= 0.0) continue;
    for (std::size_t s = 0; s < probe.times.size() && s < dir.mean.size(); ++s) {
      out += format_real(probe.times[s]) + ',' + std::to_string(dir.index) + ',' + format_real(dir.eigenvalue.real()) +
             ',' + format_real(dir.mean[s]) + ',' + format_real(dir.variance[s]) + '\n';
    }
  }
  return out.empty() ? out : "t,k,eigenvalue,mean,variance\n" + out;
}

Json limits_json(const RunRecord& run) {
  Json j = Json::object();
  // Overlays come from the geometric analyzers the run was registered with.
  for (const auto& a : run.scenario.analyzers) {
    if (a.name == "clusters") {
      j["clusters"] = matrix_json(extract_clusters(run.traj.terminal().tokens, a.params.count("eps") ? a.params.at("eps") : 1e-2).centers);
      continue;
    }
    if (a.name != "polytope" && a.name != "mixed" && a.name != "hyperplane") continue;
    try {
      const auto o = run_analyzer(run.traj, a, run.scenario.cfg);
      if (a.name == "hyperplane") {
        j["hyperplane"] = {{"normal", o.details["phi1"]}, {"levels", o.details["levels"]}};
      } else if (a.name == "polytope") {
        j["polytope"] = {{"vertices", o.details["vertices"]}, {"S", o.details["S"]}};
      } else {
        // Polytope coordinates are in F_basis; the ambient point is F_basis f.
        const Json& p = o.details["polytope_in_F"];
        j["polytope_in_F"] = {{"vertices", p["vertices"]},
                              {"S", p["S"]},
                              {"F_basis", matrix_json(classify_triple(run.traj.spec.params.head()).F_basis)}};
      }
    } catch (const Error& e) {
      j["skipped"][a.name] = e.what();
    }
  }
  return j;
}

}  // namespace

PlotExport export_plot_data(const fs::path& run_dir, const fs::path& out_dir) {
  const RunRecord run = read_run_dir(run_dir);
  const Trajectory& traj = run.traj;
  const Eigen::Index d = traj.terminal().dim();

  PlotExport ex;
  ex.out_dir = out_dir;
  Json files = Json::object();
  if (d == 2 || d == 3) {
    const std::string kind = d == 2 ? "trajectory2d" : "trajectory3d";
    atomic_write(out_dir / (kind + ".csv"), trajectory_xy_csv(traj));
    files[kind] = kind + ".csv";
    ex.kinds.push_back(kind);
  }
  if (!traj.attention_snapshots.empty()) {
    atomic_write(out_dir / "attention_long.csv", attention_long_csv(traj));
    files["attention_heatmap"] = "attention_long.csv";
    files["attention_bipartite"] = "attention_long.csv";
    ex.kinds.push_back("attention_heatmap");
    ex.kinds.push_back("attention_bipartite");
  }
  if (run.scenario.spec.params.heads.size() == 1) {
    const std::string band = eig_band_csv(traj);
    if (!band.empty()) {
      atomic_write(out_dir / "eig_variance_band.csv", band);
      files["eig_variance_band"] = "eig_variance_band.csv";
      ex.kinds.push_back("eig_variance_band");
    }
  }
  atomic_write(out_dir / "limits.json", limits_json(run).dump(2) + "\n");

  Json m;
  m["format"] = "attnflow-plot-data";
  m["version"] = 1;
  m["scenario"] = run.scenario.name;
  m["seed"] = run.seed;
  m["variant"] = variant_name(traj.spec.variant);
  m["n"] = traj.terminal().size();
  m["d"] = d;
  m["snapshots"] = traj.snapshots.size();
  m["kinds"] = ex.kinds;
  m["files"] = files;
  m["limits"] = "limits.json";
  m["run_dir"] = fs::absolute(run_dir).lexically_normal().string();
  const fs::path report = run_dir / "report.json";
  if (fs::exists(report)) {
    const Json r = Json::parse(read_file(report), nullptr, false);
    if (!r.is_discarded() && r.contains("pass")) m["report_pass"] = r["pass"];
  }
  atomic_write(out_dir / "plot_manifest.json", m.dump(2) + "\n");
  ex.manifest = std::move(m);
  return ex;
}

}  // namespace attnflow
