#include "doctest.h"

#include "attnflow/error.hpp"
#include "attnflow/verify.hpp"

#include <set>

using namespace attnflow;

TEST_CASE("suite registry") {
  CHECK(verify_suites() == std::vector<std::string>{"monotone", "oracles", "numerics", "scenarios", "all"});
  std::size_t total = 0;
  for (const char* s : {"monotone", "oracles", "numerics", "scenarios"}) {
    const auto checks = suite_checks(s);
    CHECK(!checks.empty());
    std::set<std::string> names;
    for (const auto& c : checks) {
      CHECK(c.suite == s);
      names.insert(c.name);
    }
    CHECK(names.size() == checks.size());
    total += checks.size();
  }
  CHECK(suite_checks("all").size() == total);
  try {
    suite_checks("unit");
    FAIL("expected UnknownSuite");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownSuite);
    const std::string msg = e.what();
    for (const char* s : {"monotone", "oracles", "numerics", "scenarios", "all"}) CHECK(msg.find(s) != std::string::npos);
  }
}

TEST_CASE("parallel runs keep declaration order") {
  const auto declared = suite_checks("numerics");
  const auto summary = run_verify("numerics", 3);
  REQUIRE(summary.checks.size() == declared.size());
  for (std::size_t i = 0; i < declared.size(); ++i) {
    CHECK(summary.checks[i].name == declared[i].name);
    CHECK(summary.checks[i].suite == "numerics");
    CHECK(summary.checks[i].seconds >= 0.0);
    CHECK(summary.checks[i].pass);
  }
  CHECK(summary.pass());
  const Json j = summary.to_json();
  CHECK(j["format"] == "attnflow-verify");
  CHECK(j["failed"] == 0);
  CHECK(j["checks"].size() == declared.size());
  CHECK(j["checks"][0].contains("tolerance"));
}

TEST_CASE("a failing check fails the summary") {
  VerifySummary s;
  s.checks.push_back(CheckResult{"x", "a", true});
  CHECK(s.pass());
  s.checks.push_back(CheckResult{"x", "b", false, "broken"});
  CHECK(!s.pass());
  CHECK(s.to_json()["failed"] == 1);
}
