// attnflow command-line front end. Talks to the library only through the C API.

#include "attnflow/attnflow.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using Json = nlohmann::json;

enum Exit { kOk = 0, kInput = 1, kGuard = 2, kVerdict = 3 };

struct Context {
  af_context* ctx = nullptr;
  Context() {
    if (af_context_create(&ctx) != AF_OK) throw std::runtime_error("cannot allocate context");
  }
  ~Context() { af_context_destroy(ctx); }
  Context(const Context&) = delete;
  Context& operator=(const Context&) = delete;
  Json result() const { return Json::parse(af_last_result(ctx)); }
};

int report_error(const Context& c, af_status st) {
  std::cerr << "error: " << af_status_name(st) << ": " << af_last_error(c.ctx) << "\n";
  return st == AF_OVERFLOW_GUARD ? kGuard : kInput;
}

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

std::string pass_word(bool p) { return p ? "PASS" : "FAIL"; }

struct RunArgs {
  std::string scenario, config, scenario_dir, out;
  std::uint64_t seed = 0;
  std::optional<double> t_end;
  bool json = false;
};

int cmd_run(const RunArgs& a) {
  Context c;
  af_run_request req{};
  req.scenario = opt(a.scenario);
  req.config_path = opt(a.config);
  req.scenario_dir = opt(a.scenario_dir);
  req.out_dir = opt(a.out);
  req.seed = a.seed;
  req.has_t_end = a.t_end.has_value();
  req.t_end = a.t_end.value_or(0.0);
  const af_status st = af_run(c.ctx, &req);
  if (st != AF_OK && st != AF_OVERFLOW_GUARD) return report_error(c, st);
  const Json r = c.result();
  if (a.json) {
    std::cout << r.dump(2) << "\n";
  } else {
    std::cout << r["scenario"].get<std::string>() << " seed " << r["seed"] << ": " << r["stop_reason"].get<std::string>()
              << " at t=" << r["t_final"] << ", " << r["snapshots"] << " snapshots -> "
              << r["out_dir"].get<std::string>() << "\n";
  }
  return st == AF_OK ? kOk : report_error(c, st);
}

struct AnalyzeArgs {
  std::string run_dir, analyzer, report;
  std::vector<std::string> params;
  bool json = false;
  bool list = false;
};

int cmd_analyze(const AnalyzeArgs& a) {
  Context c;
  if (a.list) {
    const af_status st = af_analyzers_list(c.ctx);
    if (st != AF_OK) return report_error(c, st);
    for (const auto& an : c.result()) {
      std::cout << an["name"].get<std::string>() << (an["gating"].get<bool>() ? "" : " (exploratory)") << ": "
                << an["summary"].get<std::string>() << "\n";
      for (const auto& [k, v] : an["defaults"].items()) std::cout << "    " << k << " = " << v << "\n";
      for (const auto& k : an["optional"]) std::cout << "    " << k.get<std::string>() << " (optional)\n";
    }
    return kOk;
  }
  if (a.run_dir.empty()) {
    std::cerr << "error: analyze needs a run directory\n";
    return kInput;
  }
  std::string params;
  for (const auto& p : a.params) params += (params.empty() ? "" : ",") + p;
  int verdict = 0;
  const af_status st = af_analyze(c.ctx, a.run_dir.c_str(), opt(a.analyzer), opt(params), opt(a.report), &verdict);
  if (st != AF_OK) return report_error(c, st);
  const Json r = c.result();
  if (a.json) {
    std::cout << r.dump(2) << "\n";
  } else {
    for (const auto& o : r.at("analyzers")) {
      std::cout << o["name"].get<std::string>() << ": " << pass_word(o["pass"].get<bool>())
                << (o["gating"].get<bool>() ? "" : " (exploratory)") << "\n";
    }
    std::cout << "verdict: " << pass_word(verdict != 0) << "\n";
  }
  return verdict ? kOk : kVerdict;
}

struct VerifyArgs {
  std::string suite = "all", summary;
  unsigned threads = 0;
  bool json = false;
};

int cmd_verify(const VerifyArgs& a) {
  Context c;
  int all = 0;
  const af_status st = af_verify(c.ctx, a.suite.c_str(), a.threads, opt(a.summary), &all);
  if (st != AF_OK) return report_error(c, st);
  const Json r = c.result();
  if (a.json) {
    std::cout << r.dump(2) << "\n";
  } else {
    for (const auto& ch : r["checks"]) {
      std::printf("%s %s/%s (%.2fs) %s\n", pass_word(ch["pass"].get<bool>()).c_str(),
                  ch["suite"].get<std::string>().c_str(), ch["name"].get<std::string>().c_str(),
                  ch["seconds"].get<double>(), ch["detail"].get<std::string>().c_str());
    }
    std::printf("%s: %d/%d checks passed in %.1fs\n", a.suite.c_str(),
                r["total"].get<int>() - r["failed"].get<int>(), r["total"].get<int>(), r["seconds"].get<double>());
  }
  return all ? kOk : kVerdict;
}

int cmd_scenarios_list(const std::string& dir, bool json) {
  Context c;
  const af_status st = af_scenarios_list(c.ctx, opt(dir));
  if (st != AF_OK) return report_error(c, st);
  const Json r = c.result();
  if (json) {
    std::cout << r.dump(2) << "\n";
    return kOk;
  }
  for (const auto& s : r) {
    std::string analyzers;
    for (const auto& an : s["analyzers"]) analyzers += (analyzers.empty() ? "" : ",") + an["name"].get<std::string>();
    std::printf("%-14s %-22s n=%-4d d=%-4d t_end=%-5g %s\n", s["name"].get<std::string>().c_str(),
                s["variant"].get<std::string>().c_str(), s["n"].get<int>(), s["d"].get<int>(),
                s["t_end"].get<double>(), analyzers.c_str());
  }
  return kOk;
}

int cmd_scenarios_export(const std::string& dir) {
  Context c;
  const af_status st = af_scenarios_export(c.ctx, dir.c_str());
  if (st != AF_OK) return report_error(c, st);
  for (const auto& f : c.result()) std::cout << f.get<std::string>() << "\n";
  return kOk;
}

int cmd_export_plot(const std::string& run_dir, const std::string& out) {
  Context c;
  const af_status st = af_export_plot_data(c.ctx, run_dir.c_str(), out.c_str());
  if (st != AF_OK) return report_error(c, st);
  const Json r = c.result();
  std::cout << "wrote " << out << ":";
  for (const auto& k : r["kinds"]) std::cout << " " << k.get<std::string>();
  std::cout << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulate and analyze self-attention particle dynamics."};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(af_version()));

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Integrate a scenario and write a run directory.");
  auto* scen_opt = run_cmd->add_option("--scenario", run.scenario, "Builtin (or --scenario-dir) scenario name");
  auto* cfg_opt = run_cmd->add_option("--config", run.config, "Scenario config file")->check(CLI::ExistingFile);
  scen_opt->excludes(cfg_opt);
  run_cmd->add_option("--scenario-dir", run.scenario_dir, "Directory of extra *.cfg scenarios")
      ->check(CLI::ExistingDirectory)
      ->excludes(cfg_opt);
  run_cmd->add_option("--seed", run.seed, "Initialization seed")->default_val(0);
  run_cmd->add_option("--out", run.out, "Run directory (default $ATTNFLOW_OUTPUT_ROOT/<scenario>-seed<seed>)");
  run_cmd->add_option("--t-end", run.t_end, "Override the scenario end time");
  run_cmd->add_flag("--json", run.json, "Print the run summary as JSON");

  AnalyzeArgs an;
  auto* an_cmd = app.add_subcommand("analyze", "Run analyzers on a run directory and write report.json.");
  an_cmd->add_option("run_dir", an.run_dir, "Run directory");
  an_cmd->add_option("--analyzer", an.analyzer, "Analyzer name (default: the run's own list)");
  an_cmd->add_option("--param", an.params, "Threshold as name=value (repeatable)");
  an_cmd->add_option("--report", an.report, "Report path (default <run_dir>/report.json)");
  an_cmd->add_flag("--json", an.json, "Print the report as JSON");
  an_cmd->add_flag("--list", an.list, "List analyzers and their parameters");

  VerifyArgs ver;
  auto* ver_cmd = app.add_subcommand("verify", "Run a verification suite.");
  ver_cmd->add_option("--suite", ver.suite, "monotone, oracles, numerics, scenarios or all")->default_val("all");
  ver_cmd->add_option("--threads", ver.threads, "Worker threads (0: all cores)")->default_val(0);
  ver_cmd->add_option("--summary", ver.summary, "Write the JSON summary here");
  ver_cmd->add_flag("--json", ver.json, "Print the summary as JSON");

  std::string list_dir, export_dir;
  bool list_json = false;
  auto* sc_cmd = app.add_subcommand("scenarios", "List or export scenario definitions.");
  sc_cmd->require_subcommand(1);
  auto* sc_list = sc_cmd->add_subcommand("list", "List builtin scenarios (plus those in --dir).");
  sc_list->add_option("--dir", list_dir, "Directory of extra *.cfg scenarios")->check(CLI::ExistingDirectory);
  sc_list->add_flag("--json", list_json, "Print as JSON");
  auto* sc_export = sc_cmd->add_subcommand("export", "Write every builtin scenario as <name>.cfg.");
  sc_export->add_option("dir", export_dir, "Target directory")->required();

  std::string plot_run, plot_out;
  auto* plot_cmd = app.add_subcommand("export-plot-data", "Reshape a run directory into plot input files.");
  plot_cmd->add_option("run_dir", plot_run, "Run directory")->required();
  plot_cmd->add_option("--out", plot_out, "Output directory (default <run_dir>/plot)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInput;
  }

  try {
    if (*run_cmd) {
      if (run.scenario.empty() && run.config.empty()) {
        std::cerr << "error: run needs --scenario or --config\n";
        return kInput;
      }
      return cmd_run(run);
    }
    if (*an_cmd) return cmd_analyze(an);
    if (*ver_cmd) return cmd_verify(ver);
    if (*sc_list) return cmd_scenarios_list(list_dir, list_json);
    if (*sc_export) return cmd_scenarios_export(export_dir);
    if (*plot_cmd) return cmd_export_plot(plot_run, plot_out.empty() ? plot_run + "/plot" : plot_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInput;
  }
  return kInput;
}
