#include "doctest.h"

#include "attnflow/error.hpp"
#include "attnflow/spectral.hpp"
#include "attnflow/oracles.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace attnflow;

namespace {

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = u(rng);
  return m;
}

Matrix random_symmetric(std::mt19937_64& rng, Eigen::Index d) {
  Matrix m = random_matrix(rng, d, d);
  return 0.5 * (m + m.transpose());
}

Matrix random_orthogonal(std::mt19937_64& rng, Eigen::Index d) {
  Eigen::HouseholderQR<Matrix> qr(random_matrix(rng, d, d));
  return qr.householderQ() * Matrix::Identity(d, d);
}

double reconstruction_error(const Matrix& V, const SpectralData& sd) {
  const ComplexMatrix rec = sd.right_eigenvectors * sd.eigenvalues.asDiagonal() * sd.dual_basis;
  const Matrix diff = (rec - V.cast<Complex>()).cwiseAbs();
  return Eigen::JacobiSVD<Matrix>(diff).singularValues()(0);
}

}  // namespace

TEST_CASE("eig on a diagonal matrix") {
  Matrix V = Vector::Map(std::array<double, 3>{3.0, -1.0, 0.5}.data(), 3).asDiagonal();
  const auto sd = eig(V);
  CHECK(sd.eigenvalues(0).real() == doctest::Approx(3.0));
  CHECK(sd.eigenvalues(1).real() == doctest::Approx(-1.0));
  CHECK(sd.eigenvalues(2).real() == doctest::Approx(0.5));
  for (int k = 0; k < 3; ++k) {
    CHECK(sd.eigenvalues(k).imag() == 0.0);
    CHECK(std::abs(sd.right_eigenvectors(k, k)) == doctest::Approx(1.0));
  }
  CHECK(sd.diagonalizable);
}

TEST_CASE("eig on the symmetric 2x2 closed form") {
  Matrix V(2, 2);
  V << 2, 1, 1, 2;
  const auto sd = eig(V);
  CHECK(sd.eigenvalues(0).real() == doctest::Approx(3.0));
  CHECK(sd.eigenvalues(1).real() == doctest::Approx(1.0));
  const double r = 1.0 / std::sqrt(2.0);
  CHECK(sd.right_eigenvectors(0, 0).real() == doctest::Approx(r));
  CHECK(sd.right_eigenvectors(1, 0).real() == doctest::Approx(r));
}

TEST_CASE("eig recovers a symmetric 2x2 with leading eigenvalue 1.35") {
  Vector phi1(2);
  phi1 << 0.76, 0.65;
  phi1.normalize();
  Matrix Phi(2, 2);
  Phi << phi1(0), -phi1(1), phi1(1), phi1(0);
  const Matrix V = Phi * Eigen::Vector2d(1.35, -0.07).asDiagonal() * Phi.transpose();
  const auto sd = eig(V);
  CHECK(sd.eigenvalues(0).real() == doctest::Approx(1.35).epsilon(1e-12));
  CHECK(sd.eigenvalues(1).real() == doctest::Approx(-0.07).epsilon(1e-12));
  CHECK(sd.right_eigenvectors(0, 0).real() == doctest::Approx(0.76).epsilon(0.01));
  CHECK(sd.right_eigenvectors(1, 0).real() == doctest::Approx(0.65).epsilon(0.01));
}

TEST_CASE("eig handles complex pairs and rotations") {
  Matrix V(2, 2);
  V << 0, -1, 1, 0;
  const auto sd = eig(V);
  CHECK(std::abs(sd.eigenvalues(0) - Complex(0, 1)) < 1e-14);
  CHECK(std::abs(sd.eigenvalues(1) - Complex(0, -1)) < 1e-14);
  CHECK(reconstruction_error(V, sd) < 1e-12);
  CHECK_FALSE(sd.is_real(0));
}

TEST_CASE("eig reconstruction and dual basis on random matrices") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const Eigen::Index d = 1 + trial % 12;
    const Matrix V = random_matrix(rng, d, d);
    const auto sd = eig(V);
    REQUIRE(sd.diagonalizable);
    const double vn = op_norm(V);
    CHECK(reconstruction_error(V, sd) <= 1e-6 * vn);
    const ComplexMatrix id = sd.dual_basis * sd.right_eigenvectors;
    CHECK((id - ComplexMatrix::Identity(d, d)).cwiseAbs().maxCoeff() < 1e-8);
    const ComplexMatrix proj = sd.dual_basis * V.cast<Complex>() * sd.right_eigenvectors;
    CHECK((proj - ComplexMatrix(sd.eigenvalues.asDiagonal())).cwiseAbs().maxCoeff() < 1e-6);
    for (Eigen::Index k = 1; k < d; ++k) {
      CHECK(std::abs(sd.eigenvalues(k - 1)) >= std::abs(sd.eigenvalues(k)) - 1e-12);
    }
    const ComplexVector fast = eigenvalues(V);
    CHECK((fast - sd.eigenvalues).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("eig matches characteristic polynomial roots from cofactor expansion") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::Index d = 1 + trial % 4;
    const Matrix V = random_symmetric(rng, d);
    const std::vector<double> roots = oracle::symmetric_charpoly_roots(V);
    const auto sd = eig(V);
    std::vector<double> ours;
    for (Eigen::Index k = 0; k < d; ++k) ours.push_back(sd.eigenvalues(k).real());
    std::sort(ours.begin(), ours.end());
    REQUIRE(roots.size() == ours.size());
    for (std::size_t k = 0; k < roots.size(); ++k) CHECK(std::abs(roots[k] - ours[k]) < 1e-8);
  }
}

TEST_CASE("eig flags a Jordan block as defective") {
  Matrix V(2, 2);
  V << 1, 1, 0, 1;
  const auto sd = eig(V);
  CHECK_FALSE(sd.diagonalizable);
  CHECK(sd.schur_form.rows() == 2);
  const Matrix rec = sd.schur_vectors * sd.schur_form * sd.schur_vectors.transpose();
  CHECK((rec - V).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("eig rejects oversized and non-finite input") {
  CHECK_THROWS_AS(eig(Matrix(2, 3)), Error);
  Matrix bad = Matrix::Identity(2, 2);
  bad(0, 1) = std::nan("");
  CHECK_THROWS_AS(eig(bad), Error);
}

TEST_CASE("expm closed forms") {
  Matrix V = Matrix::Zero(2, 2);
  V(0, 0) = 1.0;
  V(1, 1) = -0.5;
  CHECK((expm(V, 0.0) - Matrix::Identity(2, 2)).norm() == 0.0);
  const Matrix E = expm(V, 2.0);
  CHECK(E(0, 0) == doctest::Approx(std::exp(2.0)).epsilon(1e-14));
  CHECK(E(1, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK(std::abs(E(0, 1)) < 1e-15);

  Matrix J(2, 2);
  J << 0, -1, 1, 0;
  const Matrix R = expm(J, std::numbers::pi / 2);
  Matrix expected(2, 2);
  expected << 0, -1, 1, 0;
  CHECK((R - expected).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("expm agrees with the eigendecomposition and the semigroup law") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::Index d = 1 + trial % 6;
    const Matrix Q = random_orthogonal(rng, d);
    Vector lam(d);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (Eigen::Index k = 0; k < d; ++k) lam(k) = u(rng);
    const Matrix V = Q * lam.asDiagonal() * Q.transpose();
    const double t = 50.0 / std::max(1.0, op_norm(V)) * (trial % 3 == 0 ? 1.0 : 0.3);
    const Vector el = (t * lam).array().exp();
    const Matrix exact = Q * el.asDiagonal() * Q.transpose();
    const Matrix got = expm(V, t);
    CHECK(op_norm(got - exact) <= 1e-10 * op_norm(exact));

    const Matrix W = random_matrix(rng, d, d);
    const double scale = 10.0 / std::max(1e-12, op_norm(W));
    const double s = 0.7 * scale;
    const double r = 0.9 * scale;
    const Matrix lhs = expm(W, s + r);
    const Matrix rhs = expm(W, s) * expm(W, r);
    CHECK(op_norm(lhs - rhs) <= 1e-8 * op_norm(lhs));
  }
}

TEST_CASE("expm overflow guard") {
  Matrix V = Matrix::Identity(2, 2);
  CHECK_THROWS_AS(expm(V, 800.0), Error);
  try {
    expm(V, 800.0);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::OverflowGuard);
  }
  CHECK_NOTHROW(expm(V, 600.0));
  CHECK_THROWS_AS(expm(V, 50.0, 10.0), Error);
}

TEST_CASE("sqrt_psd") {
  CHECK((sqrt_psd(Matrix::Identity(3, 3)) - Matrix::Identity(3, 3)).norm() < 1e-14);
  Matrix D = Matrix::Zero(2, 2);
  D(0, 0) = 4;
  D(1, 1) = 9;
  const Matrix A = sqrt_psd(D);
  CHECK(A(0, 0) == doctest::Approx(2.0));
  CHECK(A(1, 1) == doctest::Approx(3.0));

  // Oracle: recompose from the closed-form eigenpairs (1,1)/sqrt2 -> 3, (1,-1)/sqrt2 -> 1.
  Matrix M(2, 2);
  M << 2, 1, 1, 2;
  Eigen::Vector2d u(1, 1), v(1, -1);
  u /= std::sqrt(2.0);
  v /= std::sqrt(2.0);
  const Matrix expected = std::sqrt(3.0) * u * u.transpose() + 1.0 * v * v.transpose();
  const Matrix S = sqrt_psd(M);
  CHECK((S - expected).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((S * S - M).norm() <= 1e-8 * op_norm(M));

  Matrix nonsym(2, 2);
  nonsym << 1, 0.5, 0, 1;
  try {
    sqrt_psd(nonsym);
    FAIL("expected NotSymmetric");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotSymmetric);
  }
  Matrix neg = Matrix::Identity(2, 2);
  neg(1, 1) = -1e-3;
  try {
    sqrt_psd(neg);
    FAIL("expected NotPSD");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotPSD);
  }
  neg(1, 1) = -1e-11;
  CHECK(sqrt_psd(neg)(1, 1) == 0.0);
}

TEST_CASE("sqrt_psd on random Gram matrices") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index d = 1 + trial % 7;
    const Matrix B = random_matrix(rng, d, d);
    const Matrix M = B.transpose() * B;
    const Matrix A = sqrt_psd(M);
    CHECK((A - A.transpose()).norm() < 1e-14);
    CHECK(symmetric_eig(A).values(0) >= -1e-12);
    CHECK((A * A - M).norm() <= 1e-8 * std::max(1.0, op_norm(M)));
  }
}

TEST_CASE("classify_triple examples") {
  const Matrix I2 = Matrix::Identity(2, 2);
  const Matrix I3 = Matrix::Identity(3, 3);

  SUBCASE("positive V is good") {
    Matrix V(3, 3);
    V << 0.5, 0.2, 0.1, 0.3, 0.4, 0.2, 0.1, 0.1, 0.9;
    const auto tc = classify_triple({I3, I3, V});
    CHECK(tc.kind == TripleKind::Good);
    CHECK(tc.lambda1 > 0.0);
    CHECK(tc.qk_along_phi1 > 0.0);
    CHECK((tc.phi1.array() > 0).all());
  }
  SUBCASE("identity is good with multiplicity") {
    const auto tc = classify_triple({I3, I3, I3});
    CHECK(tc.kind == TripleKind::GoodWithMultiplicity);
    CHECK(tc.F_basis.cols() == 3);
    CHECK(tc.G_basis.cols() == 0);
    CHECK(tc.lambda == doctest::Approx(1.0));
  }
  SUBCASE("diag(1,1,-1/2)") {
    Matrix V = Vector::Map(std::array<double, 3>{1.0, 1.0, -0.5}.data(), 3).asDiagonal();
    const auto tc = classify_triple({I3, I3, V});
    CHECK(tc.kind == TripleKind::GoodWithMultiplicity);
    CHECK(tc.paranormal);
    CHECK(tc.F_basis.cols() == 2);
    CHECK(tc.G_basis.cols() == 1);
    CHECK(std::abs(tc.G_basis(2, 0)) == doctest::Approx(1.0));
    CHECK(tc.lambda == doctest::Approx(1.0));
    CHECK(tc.rho_G == doctest::Approx(0.5));
    CHECK(tc.fg_angle == doctest::Approx(std::numbers::pi / 2));
  }
  SUBCASE("minus identity with Q^T K = I") {
    const auto tc = classify_triple({I2, I2, -I2});
    CHECK(tc.kind == TripleKind::NegIdentityLike);
    CHECK(tc.neg_identity_scale == doctest::Approx(1.0));
  }
  SUBCASE("rotation is none") {
    Matrix J(2, 2);
    J << 0, -1, 1, 0;
    CHECK(classify_triple({I2, I2, J}).kind == TripleKind::None);
  }
  SUBCASE("negative QK along phi1 is none") {
    Matrix V = Matrix::Zero(2, 2);
    V(0, 0) = 2.0;
    V(1, 1) = 0.5;
    Matrix K = I2;
    K(0, 0) = -1.0;
    CHECK(classify_triple({I2, K, V}).kind == TripleKind::None);
  }
  SUBCASE("defective leading block is not paranormal") {
    Matrix V(2, 2);
    V << 1, 1, 0, 1;
    const auto tc = classify_triple({I2, I2, V});
    CHECK_FALSE(tc.paranormal);
    CHECK(tc.kind == TripleKind::None);
  }
  SUBCASE("oblique invariant splitting") {
    // F = span(e1, e2), G = span((1,1,1)), lambda=1 on F and -0.3 on G.
    Matrix B(3, 3);
    B << 1, 0, 1, 0, 1, 1, 0, 0, 1;
    const Matrix V = B * Vector::Map(std::array<double, 3>{1.0, 1.0, -0.3}.data(), 3).asDiagonal() * B.inverse();
    const auto tc = classify_triple({I3, I3, V});
    CHECK(tc.kind == TripleKind::GoodWithMultiplicity);
    CHECK((V * tc.F_basis - tc.F_basis).norm() < 1e-10);
    // G must be V-invariant.
    const Matrix VG = V * tc.G_basis;
    const Matrix resid = VG - tc.G_basis * (tc.G_basis.transpose() * VG);
    CHECK(resid.norm() < 1e-10);
    CHECK(tc.fg_angle < std::numbers::pi / 2 - 0.1);
  }
}

TEST_CASE("classify_triple is invariant under positive scaling of V") {
  std::mt19937_64 rng(23);
  int goods = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const Eigen::Index d = 2 + trial % 4;
    const HeadParams p{random_matrix(rng, d, d), random_matrix(rng, d, d), random_matrix(rng, d, d)};
    const auto a = classify_triple(p);
    const auto b = classify_triple({p.Q, p.K, 2.0 * p.V});
    CHECK(a.kind == b.kind);
    if (a.kind == TripleKind::Good) {
      ++goods;
      CHECK(b.lambda1 == doctest::Approx(2.0 * a.lambda1).epsilon(1e-12));
    }
  }
  CHECK(goods > 0);
}
