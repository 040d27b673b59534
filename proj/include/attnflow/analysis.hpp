#pragma once

// Named analyzers over a finished run and the JSON report they produce.

#include "attnflow/experiments.hpp"
#include "attnflow/io.hpp"
#include "attnflow/monitors.hpp"

#include <map>
#include <string>
#include <vector>

namespace attnflow {

struct AnalyzerInfo {
  std::string name;
  // Exploratory analyzers never fail a report.
  bool gating = true;
  std::string summary;
  std::map<std::string, double> defaults;
  // Accepted without a default (absent means "derive it").
  std::vector<std::string> optional;
};

const std::vector<AnalyzerInfo>& analyzer_catalog();

/// Throws UnknownAnalyzer listing the known names.
const AnalyzerInfo& find_analyzer(const std::string& name);

struct AnalyzerOutcome {
  std::string name;
  std::map<std::string, double> params;  // defaults merged with the request
  bool gating = true;
  bool pass = false;
  Json details;
};

/// Throws UnknownAnalyzer, InvalidArgument for unknown parameter names, and
/// whatever the underlying analyzer raises (NotGoodTriple, NotConverged, ...).
AnalyzerOutcome run_analyzer(const Trajectory& traj, const AnalyzerRequest& req, const RunConfig& cfg = {});

struct AnalysisReport {
  std::string scenario;
  std::uint64_t seed = 0;
  std::vector<AnalyzerOutcome> outcomes;

  /// Every gating outcome passed.
  bool pass() const;
  Json to_json() const;
};

/// Runs `requests`, or the run's own analyzer list when empty.
AnalysisReport analyze_run(const RunRecord& run, const std::vector<AnalyzerRequest>& requests = {});

Json monitor_json(const MonitorLog& log);

/// "k=v,k=v" into a parameter map. Throws InvalidArgument.
std::map<std::string, double> parse_params(const std::string& text);

}  // namespace attnflow
