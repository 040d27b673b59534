#pragma once

// Verification suites: monotone invariants, independent oracles, numerical
// method checks and the builtin scenario sweep.

#include "attnflow/io.hpp"

#include <functional>
#include <string>
#include <vector>

namespace attnflow {

struct CheckResult {
  std::string suite;
  std::string name;
  bool pass = false;
  std::string detail;
  double tolerance = 0.0;
  double seconds = 0.0;
  Json metrics = Json::object();
};

struct VerifySummary {
  std::string suite;
  std::vector<CheckResult> checks;
  double seconds = 0.0;

  bool pass() const;
  Json to_json() const;
};

/// monotone, oracles, numerics, scenarios, all.
const std::vector<std::string>& verify_suites();

struct NamedCheck {
  std::string suite;
  std::string name;
  std::function<CheckResult()> run;
};

/// Throws UnknownSuite listing the valid names.
std::vector<NamedCheck> suite_checks(const std::string& suite);

/// Runs the checks on up to `threads` workers (0: hardware concurrency).
/// Results keep the declaration order.
VerifySummary run_verify(const std::string& suite, unsigned threads = 0);

}  // namespace attnflow
