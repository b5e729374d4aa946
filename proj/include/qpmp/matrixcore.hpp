// Copyright 2026 The qpmp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense complex kernels shared by the rest of the library. Matrices are small
// (n <= 16, superoperators n^2 x n^2) so everything is plain dense Eigen.

#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <vector>

#include "qpmp/errors.hpp"

namespace qpmp {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
/// Column-stacked vectorization of a ComplexMatrix, length n^2.
using VecForm = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

inline constexpr Complex kI{0.0, 1.0};

/// Eigenvalues in (-kPsdTolerance, 0) are treated as exact zeros.
inline constexpr double kPsdTolerance = 1e-10;
/// Minimum eigenvalue gap accepted by the Cayley-Hamilton square root.
inline constexpr double kDegeneracyGap = 1e-8;

inline ComplexMatrix dagger(const ComplexMatrix& m) { return m.adjoint(); }

inline bool all_finite(const ComplexMatrix& m) {
  return m.unaryExpr([](const Complex& z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); })
      .cast<bool>()
      .all();
}

inline void require_square(const ComplexMatrix& m, const char* what) {
  if (m.rows() != m.cols()) {
    throw DimensionError(std::string(what) + " must be square, got " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()));
  }
}

inline void require_same_dim(const ComplexMatrix& a, const ComplexMatrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(what) + ": dimension mismatch (" + std::to_string(a.rows()) + " vs " +
                         std::to_string(b.rows()) + ")");
  }
}

/// Frobenius norm of the anti-Hermitian part, ||A - A^dagger||_F.
inline double hermiticity_error(const ComplexMatrix& a) { return (a - a.adjoint()).norm(); }

/// Re tr(A B): the real trace pairing used for every gradient in the library.
inline double trace_pairing(const ComplexMatrix& a, const ComplexMatrix& b) {
  // tr(AB) = sum_ij A_ij B_ji
  return (a.transpose().cwiseProduct(b)).sum().real();
}

/// Column stacking: entry i + n*j holds M(i, j), so vec(|psi><xi|) = |xi> (x) |psi>.
inline VecForm vectorize(const ComplexMatrix& m) {
  require_square(m, "vectorize");
  return Eigen::Map<const VecForm>(m.data(), m.size());
}

inline ComplexMatrix devectorize(const VecForm& v, Eigen::Index n) {
  if (n <= 0 || v.size() != n * n) {
    throw DimensionError("devectorize: length " + std::to_string(v.size()) + " is not " + std::to_string(n) +
                         "^2");
  }
  return Eigen::Map<const ComplexMatrix>(v.data(), n, n);
}

/// Infers n from the vector length.
inline ComplexMatrix devectorize(const VecForm& v) {
  const auto n = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(v.size()))));
  return devectorize(v, n);
}

inline ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  return Eigen::kroneckerProduct(a, b).eval();
}

inline ComplexMatrix matrix_exponential(const ComplexMatrix& a) {
  require_square(a, "matrix_exponential");
  if (!all_finite(a)) throw NumericError("matrix_exponential: non-finite entries");
  if (a.size() == 0) return a;
  if (a.isZero(0.0)) return ComplexMatrix::Identity(a.rows(), a.cols());
  ComplexMatrix e = a.exp();
  if (!all_finite(e)) throw NumericError("matrix_exponential: result overflowed");
  return e;
}

namespace detail {

inline Eigen::SelfAdjointEigenSolver<ComplexMatrix> hermitian_eigen(const ComplexMatrix& a, const char* what) {
  require_square(a, what);
  if (!all_finite(a)) throw NumericError(std::string(what) + ": non-finite entries");
  const double scale = std::max(1.0, a.norm());
  if (hermiticity_error(a) > 1e-9 * scale) throw InvalidStateError(std::string(what) + ": matrix is not Hermitian");
  const ComplexMatrix h = 0.5 * (a + a.adjoint());
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(h);
  if (es.info() != Eigen::Success) throw NumericError(std::string(what) + ": eigendecomposition failed");
  return es;
}

}  // namespace detail

/// Eigenvalues of a Hermitian matrix in ascending order.
inline RealVector hermitian_eigenvalues(const ComplexMatrix& a) {
  return detail::hermitian_eigen(a, "hermitian_eigenvalues").eigenvalues();
}

/// Square roots of a PSD spectrum; entries below n eps max|l| count as zero.
inline RealVector spectrum_sqrt(const RealVector& lambda) {
  const double noise = static_cast<double>(lambda.size()) * std::numeric_limits<double>::epsilon() *
                       (lambda.size() ? lambda.cwiseAbs().maxCoeff() : 0.0);
  return lambda.unaryExpr([noise](double l) { return l > noise ? std::sqrt(l) : 0.0; });
}

/// Principal square root of a Hermitian PSD matrix via eigendecomposition.
inline ComplexMatrix hermitian_sqrt(const ComplexMatrix& a) {
  const auto es = detail::hermitian_eigen(a, "hermitian_sqrt");
  for (double l : es.eigenvalues()) {
    if (l < -kPsdTolerance) {
      throw NotPsdError("hermitian_sqrt: eigenvalue " + std::to_string(l) + " below -" + std::to_string(kPsdTolerance));
    }
  }
  const RealVector lambda = spectrum_sqrt(es.eigenvalues());
  const ComplexMatrix& v = es.eigenvectors();
  return v * lambda.cast<Complex>().asDiagonal() * v.adjoint();
}

/// Coefficients a_k with sqrt(rho) = sum_k a_k (rho - I)^k, k = 0..n-1.
///
/// They solve the Vandermonde system sqrt(l_j) = sum_k a_k (l_j - 1)^k over the
/// eigenvalues l_j, which is only well posed for a non-confluent spectrum.
inline RealVector cayley_hamilton_sqrt_coeffs(const ComplexMatrix& rho) {
  const auto es = detail::hermitian_eigen(rho, "cayley_hamilton_sqrt_coeffs");
  const RealVector& lambda = es.eigenvalues();
  const Eigen::Index n = lambda.size();
  for (Eigen::Index j = 1; j < n; ++j) {
    if (lambda(j) - lambda(j - 1) < kDegeneracyGap) {
      throw DegenerateSpectrumError("cayley_hamilton_sqrt_coeffs: eigenvalue gap " +
                                    std::to_string(lambda(j) - lambda(j - 1)) + " below threshold");
    }
  }
  Eigen::MatrixXd vandermonde(n, n);
  RealVector rhs(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (lambda(j) < -kPsdTolerance) throw NotPsdError("cayley_hamilton_sqrt_coeffs: negative eigenvalue");
    rhs(j) = std::sqrt(std::max(lambda(j), 0.0));
    double p = 1.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      vandermonde(j, k) = p;
      p *= lambda(j) - 1.0;
    }
  }
  return vandermonde.fullPivLu().solve(rhs);
}

/// Evaluates sum_k coeffs(k) (rho - I)^k.
inline ComplexMatrix cayley_hamilton_sqrt(const ComplexMatrix& rho, const RealVector& coeffs) {
  const Eigen::Index n = rho.rows();
  const ComplexMatrix shifted = rho - ComplexMatrix::Identity(n, n);
  ComplexMatrix power = ComplexMatrix::Identity(n, n);
  ComplexMatrix out = ComplexMatrix::Zero(n, n);
  for (Eigen::Index k = 0; k < coeffs.size(); ++k) {
    out += coeffs(k) * power;
    power = power * shifted;
  }
  return out;
}

/// Orthonormal basis of n x n Hermitian matrices under Re tr(A B):
/// E_ii, (E_ij + E_ji)/sqrt2 and i(E_ij - E_ji)/sqrt2 for i < j.
inline std::vector<ComplexMatrix> hermitian_basis(Eigen::Index n) {
  std::vector<ComplexMatrix> basis;
  basis.reserve(static_cast<std::size_t>(n * n));
  const double s = 1.0 / std::sqrt(2.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    ComplexMatrix e = ComplexMatrix::Zero(n, n);
    e(i, i) = 1.0;
    basis.push_back(std::move(e));
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      ComplexMatrix re = ComplexMatrix::Zero(n, n);
      re(i, j) = s;
      re(j, i) = s;
      basis.push_back(std::move(re));
      ComplexMatrix im = ComplexMatrix::Zero(n, n);
      im(i, j) = kI * s;
      im(j, i) = -kI * s;
      basis.push_back(std::move(im));
    }
  }
  return basis;
}

}  // namespace qpmp
