#include "doctest.h"

#include "attnflow/error.hpp"
#include "attnflow/experiments.hpp"

#include <cmath>
#include <set>

using namespace attnflow;

TEST_CASE("sample_init is deterministic and bounded") {
  const auto a = sample_init(50, 3, 42);
  const auto b = sample_init(50, 3, 42);
  CHECK((a.tokens - b.tokens).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.t == 0.0);
  CHECK(a.tokens.cwiseAbs().maxCoeff() <= 5.0);
  CHECK((sample_init(50, 3, 43).tokens - a.tokens).cwiseAbs().maxCoeff() > 0.0);
  CHECK(sample_init(10, 2, 1, 1.0).tokens.cwiseAbs().maxCoeff() <= 1.0);
  CHECK_THROWS_AS(sample_init(0, 2, 1), Error);
}

TEST_CASE("sample_init moments at n = 1e4") {
  const auto e = sample_init(10000, 1, 2024);
  const double mean = e.tokens.mean();
  const double var = (e.tokens.array() - mean).square().sum() / (e.size() - 1);
  CHECK(std::abs(mean) <= 0.15);
  CHECK(var >= 25.0 / 3.0 - 0.5);
  CHECK(var <= 25.0 / 3.0 + 0.5);
}

TEST_CASE("sample_init matches the documented generator") {
  std::mt19937_64 rng(9);
  const auto e = sample_init(2, 2, 9);
  for (Eigen::Index i = 0; i < 2; ++i) {
    for (Eigen::Index c = 0; c < 2; ++c) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      CHECK(e.tokens(i, c) == 5.0 * (2.0 * u - 1.0));
    }
  }
}

TEST_CASE("matrix samplers") {
  const Matrix M = sample_matrix(30, 20, 3);
  CHECK(M.rows() == 30);
  CHECK(M.cols() == 20);
  CHECK(M.cwiseAbs().maxCoeff() <= 1.0);
  CHECK((sample_matrix(30, 20, 3) - M).cwiseAbs().maxCoeff() == 0.0);
  const Matrix S = sample_symmetric(6, 4);
  CHECK((S - S.transpose()).cwiseAbs().maxCoeff() == 0.0);
  const Matrix G = sample_gaussian_matrix(100, 100, 5);
  CHECK(std::abs(G.mean()) < 0.05);
  CHECK(std::abs(G.array().square().mean() - 1.0) < 0.05);
}

TEST_CASE("leading_eigenvalue_good") {
  ComplexVector ev(2);
  ev << Complex(2.0, 0.0), Complex(-1.0, 0.0);
  CHECK(leading_eigenvalue_good(ev));
  ev << Complex(-2.0, 0.0), Complex(1.0, 0.0);
  CHECK_FALSE(leading_eigenvalue_good(ev));
  ev << Complex(1.0, 1.0), Complex(1.0, -1.0);
  CHECK_FALSE(leading_eigenvalue_good(ev));
  ev << Complex(1.0, 0.0), Complex(1.0, 0.0);
  CHECK_FALSE(leading_eigenvalue_good(ev));
  CHECK(leading_eigenvalue_good(eigenvalues(Matrix::Identity(1, 1))));
}

TEST_CASE("ginibre fraction in small dimension") {
  // d = 1: a standard normal is positive half the time.
  const auto r = ginibre_leading_fraction(1, 400, 100);
  CHECK(r.trials == 400);
  CHECK(r.fraction() > 0.4);
  CHECK(r.fraction() < 0.6);
}

TEST_CASE("registry contents") {
  const auto& all = builtin_scenarios();
  std::set<std::string> names;
  for (const auto& s : all) {
    CHECK(names.insert(s.name).second);
    CHECK_NOTHROW(validate_scenario(s));
  }
  for (const char* n : {"boolean_1d", "polytope_3d", "hyperplane_2d", "mixed_3d", "collapse", "highdim", "nonpsd_qk",
                        "ffn_relu", "ffn_tanh", "ffn_randomW"}) {
    CHECK(names.count(n) == 1);
  }

  const auto& b = find_scenario("boolean_1d");
  CHECK(b.spec.params.dim() == 1);
  CHECK(b.n == 40);
  CHECK(b.spec.params.head().Q(0, 0) == 1.0);
  CHECK(b.spec.params.head().K(0, 0) == 1.0);
  CHECK(b.spec.params.head().V(0, 0) == 1.0);
  CHECK(b.cfg.dt == 0.1);

  Matrix mixed = Matrix::Zero(3, 3);
  mixed.diagonal() << 1.0, 1.0, -0.5;
  CHECK(find_scenario("mixed_3d").spec.params.head().V == mixed);

  CHECK(classify_triple(find_scenario("collapse").spec.params.head()).kind == TripleKind::NegIdentityLike);
  CHECK(classify_triple(find_scenario("polytope_3d").spec.params.head()).kind == TripleKind::GoodWithMultiplicity);

  const auto hv = eigenvalues(find_scenario("hyperplane_2d").spec.params.head().V);
  CHECK(hv(0).real() > 0.0);
  CHECK(hv(1).real() < 0.0);
  CHECK(classify_triple(find_scenario("hyperplane_2d").spec.params.head()).kind == TripleKind::Good);

  const auto& hd = find_scenario("highdim");
  CHECK(hd.n == 256);
  CHECK(hd.spec.params.dim() == 128);
  CHECK_FALSE(hd.cfg.capture_attention);
  CHECK((symmetric_eig(hd.spec.params.head().V).values.array() > 0.0).count() == kHighdimPositiveEigenvalues);

  const Matrix QK = qk_form(find_scenario("nonpsd_qk").spec.params.head());
  CHECK(symmetric_eig(0.5 * (QK + QK.transpose())).values.minCoeff() < 0.0);

  CHECK(find_scenario("ffn_relu").spec.params.feedforward->activation == Activation::Relu);
  CHECK(find_scenario("ffn_tanh").spec.params.feedforward->activation == Activation::Tanh);
}

TEST_CASE("unknown scenario") {
  try {
    find_scenario("nope");
    FAIL("expected UnknownScenario");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownScenario);
    CHECK(std::string(e.what()).find("boolean_1d") != std::string::npos);
  }
  Scenario extra = find_scenario("collapse");
  extra.name = "collapse_copy";
  CHECK(&find_scenario("collapse_copy", {extra}) != nullptr);
}

TEST_CASE("validate_scenario") {
  Scenario s = find_scenario("collapse");
  s.name = "bad name";
  CHECK_THROWS_AS(validate_scenario(s), Error);
  s = find_scenario("collapse");
  s.init_rule = InitRule::Explicit;
  s.init_tokens = Matrix::Zero(3, 3);
  try {
    validate_scenario(s);
    FAIL("expected Config");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Config);
  }
  s.init_tokens = Matrix::Zero(3, 2);
  CHECK_NOTHROW(validate_scenario(s));
  s.cfg.t_end = 0.0;
  CHECK_THROWS_AS(validate_scenario(s), Error);
}

TEST_CASE("run_scenario is reproducible") {
  Scenario s = find_scenario("hyperplane_2d");
  s.cfg.t_end = 2.0;
  const auto a = run_scenario(s, 7);
  const auto b = run_scenario(s, 7);
  REQUIRE(a.snapshots.size() == b.snapshots.size());
  for (std::size_t k = 0; k < a.snapshots.size(); ++k) {
    CHECK((a.snapshots[k].tokens - b.snapshots[k].tokens).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK((a.initial().tokens - sample_init(40, 2, 7).tokens).cwiseAbs().maxCoeff() == 0.0);
}
