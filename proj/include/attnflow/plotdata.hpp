#pragma once

// Reshapes a run directory into per-figure files for the plotting scripts.
// Schemas are listed in docs/formats.md.

#include "attnflow/io.hpp"

#include <string>
#include <vector>

namespace attnflow {

struct PlotExport {
  fs::path out_dir;
  // Plot kinds the written files support.
  std::vector<std::string> kinds;
  Json manifest;
};

/// Reads `run_dir` (and its report.json if present) and writes into `out_dir`:
///   trajectory2d.csv or trajectory3d.csv   t,token,x,y[,z]
///   attention_long.csv                     snapshot,t,i,j,p  (captured runs)
///   eig_variance_band.csv                  t,k,eigenvalue,mean,variance
///   limits.json                            overlays: clusters, polytope, hyperplane
///   plot_manifest.json                     written last
PlotExport export_plot_data(const fs::path& run_dir, const fs::path& out_dir);

}  // namespace attnflow
