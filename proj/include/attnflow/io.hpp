#pragma once

// Files: matrix text, scenario configs, trajectory/attention CSV and run
// directories. Formats are described in docs/formats.md.

#include "attnflow/experiments.hpp"
#include "attnflow/types.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace attnflow {

namespace fs = std::filesystem;
using Json = nlohmann::json;

inline constexpr const char* kOutputRootEnv = "ATTNFLOW_OUTPUT_ROOT";

/// $ATTNFLOW_OUTPUT_ROOT if set and non-empty, else "runs".
fs::path default_output_root();

/// %.17g; round-trips every finite double.
std::string format_real(double x);

/// Parses a whole string as a double (no trailing junk). Throws Config.
double parse_real(std::string_view s, const std::string& what);

/// Writes to a temporary sibling and renames over `path`. Creates parent
/// directories. Throws Io.
void atomic_write(const fs::path& path, std::string_view content);

std::string read_file(const fs::path& path);

// --- matrices ---------------------------------------------------------------

/// One row per line, entries separated by whitespace and/or commas; '#'
/// starts a comment. Throws Config on ragged or non-numeric input.
Matrix parse_matrix_text(std::string_view text, const std::string& origin);
Matrix load_matrix_file(const fs::path& path);
std::string matrix_to_text(const Matrix& M);

/// Q.txt, K.txt and V.txt from one directory.
HeadParams load_head_dir(const fs::path& dir);

/// Inline form used in configs: rows separated by ';'.
Matrix parse_inline_matrix(std::string_view value, const std::string& what);
std::string inline_matrix(const Matrix& M);

// --- scenario configs -------------------------------------------------------

/// `base_dir` resolves '@file' matrix references.
Scenario parse_scenario_config(std::string_view text, const std::string& origin, const fs::path& base_dir = {});
Scenario load_scenario_config(const fs::path& path);
std::string scenario_to_config(const Scenario& s);

/// One <name>.cfg per scenario.
void export_scenario_dir(const fs::path& dir, const std::vector<Scenario>& scenarios);

/// Every *.cfg in the directory, sorted by file name. Throws Config on
/// duplicate names.
std::vector<Scenario> load_scenario_dir(const fs::path& dir);

// --- trajectories -----------------------------------------------------------

std::string trajectory_csv(const Trajectory& traj);
std::vector<TokenEnsemble> parse_trajectory_csv(std::string_view text, const std::string& origin);

std::string attention_csv(const Matrix& P);
Matrix parse_attention_csv(std::string_view text, const std::string& origin);

Json matrix_json(const Matrix& M);
Matrix json_matrix(const Json& j, const std::string& what);
Json spec_json(const DynamicsSpec& spec);
DynamicsSpec json_spec(const Json& j);
Json run_config_json(const RunConfig& cfg);
RunConfig json_run_config(const Json& j);

// --- run directories --------------------------------------------------------

struct RunRecord {
  Scenario scenario;
  std::uint64_t seed = 0;
  Trajectory traj;
  double wall_time = 0.0;
  Json manifest;
};

/// trajectory.csv, attention/attention_NNNNN.{csv,json} when captured, and
/// manifest.json last.
void write_run_dir(const fs::path& dir, const Scenario& s, std::uint64_t seed, const Trajectory& traj,
                   double wall_time);

/// Throws MissingArtifacts when the manifest or the trajectory is absent.
RunRecord read_run_dir(const fs::path& dir);

}  // namespace attnflow
