#pragma once

// Dense small-matrix spectral kernel.
//
// The eigensolver reduces to upper Hessenberg form with Householder
// reflections and then runs the Francis double-shift QR iteration, so real
// matrices stay in real arithmetic until complex conjugate pairs are split off.
// Eigenvectors come from back-substitution on the quasi-triangular real Schur
// form. Intended for d <= 512.

#include "attnflow/types.hpp"

#include <complex>
#include <vector>

namespace attnflow {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

inline constexpr Eigen::Index kMaxSpectralDim = 512;

struct EigOptions {
  // QR sweeps allowed per eigenvalue before NonConvergence.
  int max_sweeps_per_eigenvalue = 60;
  // cond(eigenvector matrix) above this flags V as defective.
  double defect_condition_threshold = 1e10;
};

struct SpectralData {
  // Non-increasing modulus; ties broken by real part, then positive imaginary first.
  ComplexVector eigenvalues;
  // Column k is phi_k, unit 2-norm, largest-modulus entry real positive.
  ComplexMatrix right_eigenvectors;
  // Row k is the dual functional phi*_k (inverse of right_eigenvectors).
  ComplexMatrix dual_basis;
  bool diagonalizable = true;
  double eigenvector_condition = 1.0;
  double jordan_defect_tolerance = 1e10;
  // Real Schur factorisation V = Z T Z^T, kept for defective inputs.
  Matrix schur_vectors;
  Matrix schur_form;

  Eigen::Index dim() const { return eigenvalues.size(); }
  bool is_real(Eigen::Index k, double tol = 1e-12) const;
  /// phi*_k applied to each row of `points`; real part only.
  Vector dual_coordinates(Eigen::Index k, const Matrix& points) const;
};

SpectralData eig(const Matrix& V, const EigOptions& opts = {});

/// Eigenvalues only (same ordering as eig), skipping eigenvector work.
ComplexVector eigenvalues(const Matrix& V, const EigOptions& opts = {});

/// Largest singular value.
double op_norm(const Matrix& M);

inline constexpr double kDefaultOverflowGuard = 700.0;

/// e^{tV} by scaling and squaring with a degree-13 (or lower) Pade approximant.
Matrix expm(const Matrix& V, double t, double overflow_guard = kDefaultOverflowGuard);

struct SymmetricEigen {
  Vector values;   // ascending
  Matrix vectors;  // orthonormal columns
};

/// Cyclic Jacobi rotations; input must be symmetric.
SymmetricEigen symmetric_eig(const Matrix& M);

/// Symmetric PSD square root; eigenvalues in [-1e-10, 0] are clamped to zero.
Matrix sqrt_psd(const Matrix& M);

enum class TripleKind { Good, GoodWithMultiplicity, NegIdentityLike, None };

const char* triple_kind_name(TripleKind k) noexcept;

struct TripleClass {
  TripleKind kind = TripleKind::None;
  // Paranormal with Q^T K > 0; also true for good triples meeting those terms.
  bool paranormal = false;
  double lambda1 = 0.0;
  Vector phi1;       // unit leading eigenvector (when lambda_1 is real)
  Vector phi1_dual;  // phi*_1 as a row functional
  double qk_along_phi1 = 0.0;
  Matrix F_basis;  // orthonormal basis of ker(V - lambda I)
  Matrix G_basis;  // orthonormal basis of the complementary invariant subspace
  double lambda = 0.0;
  double rho_G = 0.0;
  // Smallest principal angle between F and G, radians (pi/2 when orthogonal).
  double fg_angle = 0.0;
  double neg_identity_scale = 0.0;
};

struct ClassifyOptions {
  double gap_tol = 1e-9;
  double residual_tol = 1e-8;
  double identity_tol = 1e-10;
};

TripleClass classify_triple(const HeadParams& p, const ClassifyOptions& opts = {});

/// Symmetric part of Q^T K.
Matrix qk_form(const HeadParams& p);

}  // namespace attnflow
