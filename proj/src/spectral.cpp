#include "attnflow/spectral.hpp"

#include "attnflow/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace attnflow {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

// Reduce H to upper Hessenberg form in place; Z accumulates the orthogonal
// similarity so that A = Z H Z^T.
void hessenberg(Matrix& H, Matrix& Z, bool want_z) {
  const Eigen::Index n = H.rows();
  Vector ort = Vector::Zero(n);
  const Eigen::Index high = n - 1;

  for (Eigen::Index m = 1; m <= high - 1; ++m) {
    double scale = 0.0;
    for (Eigen::Index i = m; i <= high; ++i) scale += std::abs(H(i, m - 1));
    if (scale == 0.0) continue;

    double h = 0.0;
    for (Eigen::Index i = high; i >= m; --i) {
      ort(i) = H(i, m - 1) / scale;
      h += ort(i) * ort(i);
    }
    double g = std::sqrt(h);
    if (ort(m) > 0) g = -g;
    h -= ort(m) * g;
    ort(m) -= g;

    for (Eigen::Index j = m; j < n; ++j) {
      double f = 0.0;
      for (Eigen::Index i = high; i >= m; --i) f += ort(i) * H(i, j);
      f /= h;
      for (Eigen::Index i = m; i <= high; ++i) H(i, j) -= f * ort(i);
    }
    for (Eigen::Index i = 0; i <= high; ++i) {
      double f = 0.0;
      for (Eigen::Index j = high; j >= m; --j) f += ort(j) * H(i, j);
      f /= h;
      for (Eigen::Index j = m; j <= high; ++j) H(i, j) -= f * ort(j);
    }
    ort(m) *= scale;
    H(m, m - 1) = scale * g;
  }

  if (!want_z) return;
  Z.setIdentity(n, n);
  for (Eigen::Index m = high - 1; m >= 1; --m) {
    if (H(m, m - 1) == 0.0) continue;
    for (Eigen::Index i = m + 1; i <= high; ++i) ort(i) = H(i, m - 1);
    for (Eigen::Index j = m; j <= high; ++j) {
      double g = 0.0;
      for (Eigen::Index i = m; i <= high; ++i) g += ort(i) * Z(i, j);
      g = (g / ort(m)) / H(m, m - 1);
      for (Eigen::Index i = m; i <= high; ++i) Z(i, j) += g * ort(i);
    }
  }
}

Complex cdiv(double xr, double xi, double yr, double yi) {
  if (std::abs(yr) > std::abs(yi)) {
    const double r = yi / yr;
    const double d = yr + r * yi;
    return {(xr + r * xi) / d, (xi - r * xr) / d};
  }
  const double r = yr / yi;
  const double d = yi + r * yr;
  return {(r * xr + xi) / d, (r * xi - xr) / d};
}

struct SchurResult {
  Vector re;
  Vector im;
  Matrix T;  // quasi-triangular real Schur form
  Matrix Z;  // Schur vectors
  Matrix vectors;  // packed real eigenvectors (complex pairs as re/im columns)
};

// Francis double-shift QR on an upper Hessenberg matrix, followed (when
// requested) by eigenvector back-substitution.
SchurResult francis_qr(Matrix H, Matrix Z, bool want_vectors, const EigOptions& opts) {
  const Eigen::Index nn = H.rows();
  SchurResult out;
  out.re = Vector::Zero(nn);
  out.im = Vector::Zero(nn);
  Vector& d = out.re;
  Vector& e = out.im;

  Eigen::Index n = nn - 1;
  const Eigen::Index low = 0;
  const Eigen::Index high = nn - 1;
  double exshift = 0.0;
  double p = 0, q = 0, r = 0, s = 0, z = 0, t = 0, w = 0, x = 0, y = 0;

  double norm = 0.0;
  for (Eigen::Index i = 0; i < nn; ++i) {
    for (Eigen::Index j = std::max<Eigen::Index>(i - 1, 0); j < nn; ++j) norm += std::abs(H(i, j));
  }

  int iter = 0;
  long total_sweeps = 0;
  const long sweep_cap = static_cast<long>(opts.max_sweeps_per_eigenvalue) * std::max<Eigen::Index>(nn, 1);

  while (n >= low) {
    Eigen::Index l = n;
    while (l > low) {
      s = std::abs(H(l - 1, l - 1)) + std::abs(H(l, l));
      if (s == 0.0) s = norm;
      if (std::abs(H(l, l - 1)) < kEps * s) break;
      --l;
    }

    if (l == n) {
      H(n, n) += exshift;
      d(n) = H(n, n);
      e(n) = 0.0;
      --n;
      iter = 0;
    } else if (l == n - 1) {
      w = H(n, n - 1) * H(n - 1, n);
      p = (H(n - 1, n - 1) - H(n, n)) / 2.0;
      q = p * p + w;
      z = std::sqrt(std::abs(q));
      H(n, n) += exshift;
      H(n - 1, n - 1) += exshift;
      x = H(n, n);

      if (q >= 0) {
        z = (p >= 0) ? p + z : p - z;
        d(n - 1) = x + z;
        d(n) = d(n - 1);
        if (z != 0.0) d(n) = x - w / z;
        e(n - 1) = 0.0;
        e(n) = 0.0;
        x = H(n, n - 1);
        s = std::abs(x) + std::abs(z);
        p = x / s;
        q = z / s;
        r = std::sqrt(p * p + q * q);
        p /= r;
        q /= r;
        for (Eigen::Index j = n - 1; j < nn; ++j) {
          z = H(n - 1, j);
          H(n - 1, j) = q * z + p * H(n, j);
          H(n, j) = q * H(n, j) - p * z;
        }
        for (Eigen::Index i = 0; i <= n; ++i) {
          z = H(i, n - 1);
          H(i, n - 1) = q * z + p * H(i, n);
          H(i, n) = q * H(i, n) - p * z;
        }
        if (want_vectors) {
          for (Eigen::Index i = low; i <= high; ++i) {
            z = Z(i, n - 1);
            Z(i, n - 1) = q * z + p * Z(i, n);
            Z(i, n) = q * Z(i, n) - p * z;
          }
        }
      } else {
        d(n - 1) = x + p;
        d(n) = x + p;
        e(n - 1) = z;
        e(n) = -z;
      }
      n -= 2;
      iter = 0;
    } else {
      if (++total_sweeps > sweep_cap) {
        fail(ErrorCode::NonConvergence, "QR iteration exceeded its sweep cap");
      }
      x = H(n, n);
      y = 0.0;
      w = 0.0;
      if (l < n) {
        y = H(n - 1, n - 1);
        w = H(n, n - 1) * H(n - 1, n);
      }
      // Exceptional shifts break cycles on pathological inputs.
      if (iter == 10) {
        exshift += x;
        for (Eigen::Index i = low; i <= n; ++i) H(i, i) -= x;
        s = std::abs(H(n, n - 1)) + std::abs(H(n - 1, n - 2));
        x = y = 0.75 * s;
        w = -0.4375 * s * s;
      }
      if (iter == 30) {
        s = (y - x) / 2.0;
        s = s * s + w;
        if (s > 0) {
          s = std::sqrt(s);
          if (y < x) s = -s;
          s = x - w / ((y - x) / 2.0 + s);
          for (Eigen::Index i = low; i <= n; ++i) H(i, i) -= s;
          exshift += s;
          x = y = w = 0.964;
        }
      }
      ++iter;

      Eigen::Index m = n - 2;
      while (m >= l) {
        z = H(m, m);
        r = x - z;
        s = y - z;
        p = (r * s - w) / H(m + 1, m) + H(m, m + 1);
        q = H(m + 1, m + 1) - z - r - s;
        r = H(m + 2, m + 1);
        s = std::abs(p) + std::abs(q) + std::abs(r);
        p /= s;
        q /= s;
        r /= s;
        if (m == l) break;
        if (std::abs(H(m, m - 1)) * (std::abs(q) + std::abs(r)) <
            kEps * (std::abs(p) * (std::abs(H(m - 1, m - 1)) + std::abs(z) + std::abs(H(m + 1, m + 1))))) {
          break;
        }
        --m;
      }
      for (Eigen::Index i = m + 2; i <= n; ++i) {
        H(i, i - 2) = 0.0;
        if (i > m + 2) H(i, i - 3) = 0.0;
      }

      for (Eigen::Index k = m; k <= n - 1; ++k) {
        const bool notlast = (k != n - 1);
        if (k != m) {
          p = H(k, k - 1);
          q = H(k + 1, k - 1);
          r = notlast ? H(k + 2, k - 1) : 0.0;
          x = std::abs(p) + std::abs(q) + std::abs(r);
          if (x == 0.0) continue;
          p /= x;
          q /= x;
          r /= x;
        }
        s = std::sqrt(p * p + q * q + r * r);
        if (p < 0) s = -s;
        if (s == 0) continue;
        if (k != m) {
          H(k, k - 1) = -s * x;
        } else if (l != m) {
          H(k, k - 1) = -H(k, k - 1);
        }
        p += s;
        x = p / s;
        y = q / s;
        z = r / s;
        q /= p;
        r /= p;

        for (Eigen::Index j = k; j < nn; ++j) {
          p = H(k, j) + q * H(k + 1, j);
          if (notlast) {
            p += r * H(k + 2, j);
            H(k + 2, j) -= p * z;
          }
          H(k, j) -= p * x;
          H(k + 1, j) -= p * y;
        }
        for (Eigen::Index i = 0; i <= std::min(n, k + 3); ++i) {
          p = x * H(i, k) + y * H(i, k + 1);
          if (notlast) {
            p += z * H(i, k + 2);
            H(i, k + 2) -= p * r;
          }
          H(i, k) -= p;
          H(i, k + 1) -= p * q;
        }
        if (want_vectors) {
          for (Eigen::Index i = low; i <= high; ++i) {
            p = x * Z(i, k) + y * Z(i, k + 1);
            if (notlast) {
              p += z * Z(i, k + 2);
              Z(i, k + 2) -= p * r;
            }
            Z(i, k) -= p;
            Z(i, k + 1) -= p * q;
          }
        }
      }
    }
  }

  if (!want_vectors) return out;

  // Clean the strictly-below-subdiagonal part and 1x1-block subdiagonals.
  for (Eigen::Index i = 0; i < nn; ++i) {
    for (Eigen::Index j = 0; j + 1 < i; ++j) H(i, j) = 0.0;
  }
  for (Eigen::Index i = 1; i < nn; ++i) {
    if (e(i) == 0.0 && e(i - 1) == 0.0) H(i, i - 1) = 0.0;
  }
  out.T = H;
  out.Z = Z;

  if (norm == 0.0) {
    out.vectors = Matrix::Identity(nn, nn);
    return out;
  }

  // Back-substitute for eigenvectors of the quasi-triangular form.
  for (n = nn - 1; n >= 0; --n) {
    p = d(n);
    q = e(n);
    if (q == 0) {
      Eigen::Index l = n;
      H(n, n) = 1.0;
      for (Eigen::Index i = n - 1; i >= 0; --i) {
        w = H(i, i) - p;
        r = 0.0;
        for (Eigen::Index j = l; j <= n; ++j) r += H(i, j) * H(j, n);
        if (e(i) < 0.0) {
          z = w;
          s = r;
        } else {
          l = i;
          if (e(i) == 0.0) {
            H(i, n) = (w != 0.0) ? -r / w : -r / (kEps * norm);
          } else {
            x = H(i, i + 1);
            y = H(i + 1, i);
            q = (d(i) - p) * (d(i) - p) + e(i) * e(i);
            t = (x * s - z * r) / q;
            H(i, n) = t;
            H(i + 1, n) = (std::abs(x) > std::abs(z)) ? (-r - w * t) / x : (-s - y * t) / z;
          }
          t = std::abs(H(i, n));
          if ((kEps * t) * t > 1) {
            for (Eigen::Index j = i; j <= n; ++j) H(j, n) /= t;
          }
        }
      }
    } else if (q < 0) {
      Eigen::Index l = n - 1;
      if (std::abs(H(n, n - 1)) > std::abs(H(n - 1, n))) {
        H(n - 1, n - 1) = q / H(n, n - 1);
        H(n - 1, n) = -(H(n, n) - p) / H(n, n - 1);
      } else {
        const Complex c = cdiv(0.0, -H(n - 1, n), H(n - 1, n - 1) - p, q);
        H(n - 1, n - 1) = c.real();
        H(n - 1, n) = c.imag();
      }
      H(n, n - 1) = 0.0;
      H(n, n) = 1.0;
      for (Eigen::Index i = n - 2; i >= 0; --i) {
        double ra = 0.0;
        double sa = 0.0;
        for (Eigen::Index j = l; j <= n; ++j) {
          ra += H(i, j) * H(j, n - 1);
          sa += H(i, j) * H(j, n);
        }
        w = H(i, i) - p;
        if (e(i) < 0.0) {
          z = w;
          r = ra;
          s = sa;
        } else {
          l = i;
          if (e(i) == 0) {
            const Complex c = cdiv(-ra, -sa, w, q);
            H(i, n - 1) = c.real();
            H(i, n) = c.imag();
          } else {
            x = H(i, i + 1);
            y = H(i + 1, i);
            double vr = (d(i) - p) * (d(i) - p) + e(i) * e(i) - q * q;
            const double vi = (d(i) - p) * 2.0 * q;
            if (vr == 0.0 && vi == 0.0) {
              vr = kEps * norm * (std::abs(w) + std::abs(q) + std::abs(x) + std::abs(y) + std::abs(z));
            }
            const Complex c = cdiv(x * r - z * ra + q * sa, x * s - z * sa - q * ra, vr, vi);
            H(i, n - 1) = c.real();
            H(i, n) = c.imag();
            if (std::abs(x) > (std::abs(z) + std::abs(q))) {
              H(i + 1, n - 1) = (-ra - w * H(i, n - 1) + q * H(i, n)) / x;
              H(i + 1, n) = (-sa - w * H(i, n) - q * H(i, n - 1)) / x;
            } else {
              const Complex c2 = cdiv(-r - y * H(i, n - 1), -s - y * H(i, n), z, q);
              H(i + 1, n - 1) = c2.real();
              H(i + 1, n) = c2.imag();
            }
          }
          t = std::max(std::abs(H(i, n - 1)), std::abs(H(i, n)));
          if ((kEps * t) * t > 1) {
            for (Eigen::Index j = i; j <= n; ++j) {
              H(j, n - 1) /= t;
              H(j, n) /= t;
            }
          }
        }
      }
    }
  }

  // Back-transform with the Schur vectors; H is upper triangular in the
  // columns that matter.
  out.vectors = Matrix::Zero(nn, nn);
  for (Eigen::Index j = 0; j < nn; ++j) {
    for (Eigen::Index i = 0; i < nn; ++i) {
      double acc = 0.0;
      for (Eigen::Index k = 0; k <= j; ++k) acc += Z(i, k) * H(k, j);
      out.vectors(i, j) = acc;
    }
  }
  return out;
}

std::vector<Eigen::Index> spectral_order(const Vector& re, const Vector& im) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(re.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
    const double ma = std::hypot(re(a), im(a));
    const double mb = std::hypot(re(b), im(b));
    const double tol = 1e-13 * std::max({1.0, ma, mb});
    if (std::abs(ma - mb) > tol) return ma > mb;
    if (std::abs(re(a) - re(b)) > tol) return re(a) > re(b);
    return im(a) > im(b);
  });
  return idx;
}

void check_input(const Matrix& V) {
  if (V.rows() != V.cols() || V.rows() < 1) fail(ErrorCode::DimensionMismatch, "eig needs a non-empty square matrix");
  if (V.rows() > kMaxSpectralDim) fail(ErrorCode::DimensionMismatch, "matrix exceeds the d <= 512 cap");
  if (!V.allFinite()) fail(ErrorCode::NonFinite, "matrix has non-finite entries");
}

void normalise_phase(Eigen::Ref<ComplexVector> v) {
  const double nrm = v.norm();
  if (nrm == 0.0) return;
  Eigen::Index arg = 0;
  v.cwiseAbs().maxCoeff(&arg);
  const Complex phase = std::conj(v(arg)) / std::abs(v(arg));
  v *= phase / nrm;
  v(arg) = Complex(v(arg).real(), 0.0);
}

}  // namespace

bool SpectralData::is_real(Eigen::Index k, double tol) const {
  return std::abs(eigenvalues(k).imag()) <= tol * std::max(1.0, std::abs(eigenvalues(k)));
}

Vector SpectralData::dual_coordinates(Eigen::Index k, const Matrix& points) const {
  const ComplexVector c = points.cast<Complex>() * dual_basis.row(k).transpose();
  return c.real();
}

SpectralData eig(const Matrix& V, const EigOptions& opts) {
  check_input(V);
  const Eigen::Index n = V.rows();

  Matrix H = V;
  Matrix Z;
  hessenberg(H, Z, true);
  SchurResult schur = francis_qr(std::move(H), std::move(Z), true, opts);

  // Unpack real-packed eigenvectors into complex columns.
  ComplexMatrix vecs(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (schur.im(j) == 0.0) {
      vecs.col(j) = schur.vectors.col(j).cast<Complex>();
    } else if (schur.im(j) > 0.0) {
      for (Eigen::Index i = 0; i < n; ++i) {
        vecs(i, j) = Complex(schur.vectors(i, j), schur.vectors(i, j + 1));
        vecs(i, j + 1) = std::conj(vecs(i, j));
      }
      ++j;
    }
  }

  const auto order = spectral_order(schur.re, schur.im);
  SpectralData sd;
  sd.eigenvalues.resize(n);
  sd.right_eigenvectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto src = order[static_cast<std::size_t>(k)];
    sd.eigenvalues(k) = Complex(schur.re(src), schur.im(src));
    sd.right_eigenvectors.col(k) = vecs.col(src);
    normalise_phase(sd.right_eigenvectors.col(k));
  }
  sd.schur_vectors = std::move(schur.Z);
  sd.schur_form = std::move(schur.T);
  sd.jordan_defect_tolerance = opts.defect_condition_threshold;

  Eigen::JacobiSVD<ComplexMatrix> svd(sd.right_eigenvectors);
  const auto& sv = svd.singularValues();
  const double smin = sv(sv.size() - 1);
  sd.eigenvector_condition = smin > 0.0 ? sv(0) / smin : std::numeric_limits<double>::infinity();
  sd.diagonalizable = sd.eigenvector_condition <= opts.defect_condition_threshold;
  if (sd.diagonalizable) {
    sd.dual_basis = sd.right_eigenvectors.partialPivLu().inverse();
  } else {
    // Pseudo-inverse keeps the dual functionals defined on defective inputs.
    Eigen::JacobiSVD<ComplexMatrix> full(sd.right_eigenvectors, Eigen::ComputeFullU | Eigen::ComputeFullV);
    full.setThreshold(1e-12);
    sd.dual_basis = full.solve(ComplexMatrix::Identity(n, n));
  }
  return sd;
}

ComplexVector eigenvalues(const Matrix& V, const EigOptions& opts) {
  check_input(V);
  Matrix H = V;
  Matrix Z;
  hessenberg(H, Z, false);
  const SchurResult schur = francis_qr(std::move(H), Matrix(), false, opts);
  const auto order = spectral_order(schur.re, schur.im);
  ComplexVector out(V.rows());
  for (Eigen::Index k = 0; k < V.rows(); ++k) {
    const auto src = order[static_cast<std::size_t>(k)];
    out(k) = Complex(schur.re(src), schur.im(src));
  }
  return out;
}

double op_norm(const Matrix& M) {
  if (M.size() == 0) return 0.0;
  if (M.rows() <= 16 && M.cols() <= 16) return Eigen::JacobiSVD<Matrix>(M).singularValues()(0);
  return Eigen::BDCSVD<Matrix>(M).singularValues()(0);
}

// --- matrix exponential -----------------------------------------------------

namespace {

void pade_terms(const Matrix& A, int degree, Matrix& U, Matrix& W) {
  const Eigen::Index n = A.rows();
  const Matrix I = Matrix::Identity(n, n);
  const Matrix A2 = A * A;
  switch (degree) {
    case 3: {
      constexpr double b[] = {120.0, 60.0, 12.0, 1.0};
      U = A * (b[3] * A2 + b[1] * I);
      W = b[2] * A2 + b[0] * I;
      return;
    }
    case 5: {
      constexpr double b[] = {30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0};
      const Matrix A4 = A2 * A2;
      U = A * (b[5] * A4 + b[3] * A2 + b[1] * I);
      W = b[4] * A4 + b[2] * A2 + b[0] * I;
      return;
    }
    case 7: {
      constexpr double b[] = {17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0};
      const Matrix A4 = A2 * A2;
      const Matrix A6 = A4 * A2;
      U = A * (b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * I);
      W = b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * I;
      return;
    }
    case 9: {
      constexpr double b[] = {17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
                              2162160.0,     110880.0,     3960.0,       90.0,        1.0};
      const Matrix A4 = A2 * A2;
      const Matrix A6 = A4 * A2;
      const Matrix A8 = A6 * A2;
      U = A * (b[9] * A8 + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * I);
      W = b[8] * A8 + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * I;
      return;
    }
    default: {
      constexpr double b[] = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                              1187353796428800.0,  129060195264000.0,   10559470521600.0,
                              670442572800.0,      33522128640.0,       1323241920.0,
                              40840800.0,          960960.0,            16380.0,
                              182.0,               1.0};
      const Matrix A4 = A2 * A2;
      const Matrix A6 = A4 * A2;
      U = A * (A6 * (b[13] * A6 + b[11] * A4 + b[9] * A2) + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * I);
      W = A6 * (b[12] * A6 + b[10] * A4 + b[8] * A2) + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * I;
      return;
    }
  }
}

}  // namespace

Matrix expm(const Matrix& V, double t, double overflow_guard) {
  if (V.rows() != V.cols()) fail(ErrorCode::DimensionMismatch, "expm needs a square matrix");
  if (!V.allFinite() || !std::isfinite(t)) fail(ErrorCode::NonFinite, "expm input is not finite");
  const Eigen::Index n = V.rows();
  if (t == 0.0 || n == 0) return Matrix::Identity(n, n);

  const Matrix A = t * V;
  if (op_norm(A) > overflow_guard) {
    fail(ErrorCode::OverflowGuard, "|t|*||V|| exceeds the expm overflow guard");
  }

  // Degree thresholds on the 1-norm (Higham 2005).
  constexpr std::pair<int, double> kThetas[] = {
      {3, 1.495585217958292e-2}, {5, 2.539398330063230e-1}, {7, 9.504178996162932e-1}, {9, 2.097847961257068e0}};
  constexpr double kTheta13 = 5.371920351148152;

  const double norm1 = A.cwiseAbs().colwise().sum().maxCoeff();
  Matrix U;
  Matrix W;
  Matrix result;
  bool done = false;
  for (const auto& [deg, theta] : kThetas) {
    if (norm1 <= theta) {
      pade_terms(A, deg, U, W);
      result = (W - U).partialPivLu().solve(W + U);
      done = true;
      break;
    }
  }
  if (!done) {
    int squarings = 0;
    if (norm1 > kTheta13) squarings = static_cast<int>(std::ceil(std::log2(norm1 / kTheta13)));
    const Matrix As = A / std::ldexp(1.0, squarings);
    pade_terms(As, 13, U, W);
    result = (W - U).partialPivLu().solve(W + U);
    for (int s = 0; s < squarings; ++s) result = result * result;
  }
  if (!result.allFinite()) fail(ErrorCode::OverflowGuard, "matrix exponential overflowed");
  return result;
}

// --- symmetric eigen / square root ---------------------------------------

SymmetricEigen symmetric_eig(const Matrix& M) {
  if (M.rows() != M.cols()) fail(ErrorCode::DimensionMismatch, "symmetric_eig needs a square matrix");
  const Eigen::Index n = M.rows();
  Matrix A = 0.5 * (M + M.transpose());
  Matrix Vv = Matrix::Identity(n, n);

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) off += A(p, q) * A(p, q);
    }
    if (off <= 1e-30 * std::max(1.0, A.squaredNorm())) break;

    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = A(p, q);
        if (apq == 0.0) continue;
        const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
        const double tt = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(tt * tt + 1.0);
        const double s = tt * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = A(k, p);
          const double akq = A(k, q);
          A(k, p) = c * akp - s * akq;
          A(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = A(p, k);
          const double aqk = A(q, k);
          A(p, k) = c * apk - s * aqk;
          A(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = Vv(k, p);
          const double vkq = Vv(k, q);
          Vv(k, p) = c * vkp - s * vkq;
          Vv(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return A(a, a) < A(b, b); });
  SymmetricEigen out{Vector(n), Matrix(n, n)};
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values(k) = A(idx[static_cast<std::size_t>(k)], idx[static_cast<std::size_t>(k)]);
    out.vectors.col(k) = Vv.col(idx[static_cast<std::size_t>(k)]);
  }
  return out;
}

Matrix sqrt_psd(const Matrix& M) {
  if (M.rows() != M.cols()) fail(ErrorCode::DimensionMismatch, "sqrt_psd needs a square matrix");
  if (!M.allFinite()) fail(ErrorCode::NonFinite, "sqrt_psd input is not finite");
  const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    fail(ErrorCode::NotSymmetric, "matrix is not symmetric within 1e-10");
  }
  SymmetricEigen se = symmetric_eig(M);
  if (se.values.size() > 0 && se.values(0) < -1e-10 * scale) {
    fail(ErrorCode::NotPSD, "matrix has an eigenvalue below -1e-10");
  }
  const Vector roots = se.values.cwiseMax(0.0).cwiseSqrt();
  Matrix A = se.vectors * roots.asDiagonal() * se.vectors.transpose();
  return 0.5 * (A + A.transpose());
}

// --- triple classification --------------------------------------------------

const char* triple_kind_name(TripleKind k) noexcept {
  switch (k) {
    case TripleKind::Good: return "good";
    case TripleKind::GoodWithMultiplicity: return "good_with_multiplicity";
    case TripleKind::NegIdentityLike: return "neg_identity_like";
    case TripleKind::None: return "none";
  }
  return "none";
}

Matrix qk_form(const HeadParams& p) {
  const Matrix M = p.Q.transpose() * p.K;
  return 0.5 * (M + M.transpose());
}

TripleClass classify_triple(const HeadParams& p, const ClassifyOptions& opts) {
  const Eigen::Index d = p.V.rows();
  if (p.V.cols() != d || p.Q.cols() != d || p.K.cols() != d || p.Q.rows() != p.K.rows()) {
    fail(ErrorCode::DimensionMismatch, "classify_triple: incompatible Q, K, V shapes");
  }
  const SpectralData sd = eig(p.V);
  TripleClass tc;

  const Complex l1 = sd.eigenvalues(0);
  const double second = d > 1 ? std::abs(sd.eigenvalues(1)) : 0.0;
  const bool l1_real = sd.is_real(0);
  if (l1_real) {
    tc.lambda1 = l1.real();
    tc.phi1 = sd.right_eigenvectors.col(0).real();
    tc.phi1.normalize();
    tc.phi1_dual = sd.dual_basis.row(0).real().transpose();
    tc.qk_along_phi1 = (p.Q * tc.phi1).dot(p.K * tc.phi1);
  }
  const bool good = l1_real && tc.lambda1 > 0.0 && tc.lambda1 - second > opts.gap_tol && tc.qk_along_phi1 > 0.0;

  // Paranormal split: F = ker(V - lambda I), G = range(V - lambda I).
  const Matrix QtK = p.Q.transpose() * p.K;
  const double qk_scale = std::max(1.0, QtK.cwiseAbs().maxCoeff());
  const bool qk_symmetric = (QtK - QtK.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * qk_scale;
  bool qk_pd = false;
  if (qk_symmetric) qk_pd = symmetric_eig(qk_form(p)).values(0) > 0.0;

  if (qk_pd && l1_real && tc.lambda1 > 0.0) {
    const double lambda = tc.lambda1;
    const double cluster_tol = std::max(opts.gap_tol, 1e-12) * std::max(1.0, lambda);
    Eigen::Index mult = 0;
    double rho = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) {
      if (std::abs(sd.eigenvalues(k) - Complex(lambda, 0.0)) <= cluster_tol) {
        ++mult;
      } else {
        rho = std::max(rho, std::abs(sd.eigenvalues(k)));
      }
    }
    const Matrix shifted = p.V - lambda * Matrix::Identity(d, d);
    Eigen::JacobiSVD<Matrix> svd(shifted, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Matrix F = svd.matrixV().rightCols(mult);
    const Matrix G = svd.matrixU().leftCols(d - mult);
    const double residual = (shifted * F).norm();
    const double vscale = std::max(1.0, op_norm(p.V));
    if (residual <= opts.residual_tol * vscale && rho <= lambda - opts.gap_tol) {
      tc.paranormal = true;
      tc.F_basis = F;
      tc.G_basis = G;
      tc.lambda = lambda;
      tc.rho_G = rho;
      if (G.cols() == 0 || F.cols() == 0) {
        tc.fg_angle = std::acos(0.0);
      } else {
        const double c = Eigen::JacobiSVD<Matrix>(F.transpose() * G).singularValues()(0);
        tc.fg_angle = std::acos(std::clamp(c, 0.0, 1.0));
      }
    }
  }

  if (good) {
    tc.kind = TripleKind::Good;
  } else if (tc.paranormal) {
    tc.kind = TripleKind::GoodWithMultiplicity;
  } else {
    const double c = -p.V(0, 0);
    const bool neg_identity =
        c > 0.0 && (p.V + c * Matrix::Identity(d, d)).cwiseAbs().maxCoeff() <= opts.identity_tol;
    const bool qk_identity = (QtK - Matrix::Identity(d, d)).cwiseAbs().maxCoeff() <= opts.identity_tol;
    if (neg_identity && qk_identity) {
      tc.kind = TripleKind::NegIdentityLike;
      tc.neg_identity_scale = c;
    }
  }
  return tc;
}

}  // namespace attnflow
