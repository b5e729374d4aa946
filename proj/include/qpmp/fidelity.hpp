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

// Uhlmann fidelity and its gradient, which fixes the costate at t = 1.
//
// Gradients use the real trace pairing: for Hermitian directions D,
//   d/de F(rho + e D) |_{e=0} = Re tr(G D).

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "qpmp/dynamics.hpp"
#include "qpmp/matrixcore.hpp"

namespace qpmp {

struct TargetState {
  DensityMatrix sigma;
  double purity;

  explicit TargetState(DensityMatrix s) : sigma(std::move(s)), purity(sigma.purity()) {}

  bool is_pure(double tol = 1e-12) const { return purity >= 1.0 - tol; }
};

namespace detail {

// PSD square root that zeroes every negative eigenvalue. Used for finite
// differences, where perturbed rank-deficient states dip below zero.
inline ComplexMatrix clamped_sqrt(const ComplexMatrix& a) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(0.5 * (a + a.adjoint()));
  const RealVector l = spectrum_sqrt(es.eigenvalues());
  return es.eigenvectors() * l.cast<Complex>().asDiagonal() * es.eigenvectors().adjoint();
}

inline double clamped_fidelity(const ComplexMatrix& rho, const ComplexMatrix& sigma) {
  const ComplexMatrix s = clamped_sqrt(rho);
  const ComplexMatrix inner = s * sigma * s;
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(0.5 * (inner + inner.adjoint()), Eigen::EigenvaluesOnly);
  const double root_trace = spectrum_sqrt(es.eigenvalues()).sum();
  return root_trace * root_trace;
}

}  // namespace detail

/// (tr sqrt(sqrt(rho) sigma sqrt(rho)))^2 for PSD operators of equal size; no normalization or clamping.
inline double uhlmann_fidelity(const ComplexMatrix& rho, const ComplexMatrix& sigma) {
  require_same_dim(rho, sigma, "fidelity");
  const ComplexMatrix s = hermitian_sqrt(rho);
  const ComplexMatrix inner = s * sigma * s;
  const double root_trace = hermitian_sqrt(0.5 * (inner + inner.adjoint())).trace().real();
  return root_trace * root_trace;
}

inline double fidelity(const DensityMatrix& rho, const DensityMatrix& sigma) {
  return std::clamp(uhlmann_fidelity(rho.matrix(), sigma.matrix()), 0.0, 1.0);
}

/// Same quantity through the trace norm, (tr|sqrt(rho) sqrt(sigma)|)^2, i.e. squared nuclear norm.
inline double fidelity_trace_norm(const DensityMatrix& rho, const DensityMatrix& sigma) {
  require_same_dim(rho.matrix(), sigma.matrix(), "fidelity_trace_norm");
  const ComplexMatrix prod = hermitian_sqrt(rho.matrix()) * hermitian_sqrt(sigma.matrix());
  const double nuclear = Eigen::JacobiSVD<ComplexMatrix>(prod).singularValues().sum();
  return std::clamp(nuclear * nuclear, 0.0, 1.0);
}

enum class TerminalGradientMode {
  analytic,           ///< closed-form Uhlmann gradient (default)
  cayley_hamilton,    ///< polynomial expansion of sqrt(rho) about I with frozen coefficients
  finite_difference,  ///< central differences over the Hermitian basis
};

struct TerminalCostate {
  ComplexMatrix pi;
  TerminalGradientMode method;  ///< method that actually produced pi
  bool fallback = false;        ///< true when the requested method could not be applied
};

/// Central-difference gradient of the fidelity over the orthonormal Hermitian basis.
inline ComplexMatrix fidelity_gradient_fd(const ComplexMatrix& rho, const ComplexMatrix& sigma, double step = 1e-6) {
  require_same_dim(rho, sigma, "fidelity_gradient_fd");
  const Eigen::Index n = rho.rows();
  ComplexMatrix grad = ComplexMatrix::Zero(n, n);
  for (const auto& dir : hermitian_basis(n)) {
    const double fp = detail::clamped_fidelity(rho + step * dir, sigma);
    const double fm = detail::clamped_fidelity(rho - step * dir, sigma);
    // orthonormal basis: G = sum_b <G, B> B
    grad += ((fp - fm) / (2.0 * step)) * dir;
  }
  return grad;
}

/// Gradient from the Cayley-Hamilton expansion sqrt(rho) = sum_k a_k (rho - I)^k:
///   2 sqrt(F) sum_k a_k sum_{i<k} (rho - I)^i sqrt(sigma) (rho - I)^(k-i-1),
/// with the coefficients a_k held fixed. Throws DegenerateSpectrumError for a
/// confluent spectrum.
inline ComplexMatrix cayley_hamilton_fidelity_gradient(const ComplexMatrix& rho, const ComplexMatrix& sigma) {
  require_same_dim(rho, sigma, "cayley_hamilton_fidelity_gradient");
  const Eigen::Index n = rho.rows();
  const RealVector alpha = cayley_hamilton_sqrt_coeffs(rho);
  const ComplexMatrix shifted = rho - ComplexMatrix::Identity(n, n);
  const ComplexMatrix sqrt_sigma = hermitian_sqrt(sigma);

  std::vector<ComplexMatrix> powers{ComplexMatrix::Identity(n, n)};
  for (Eigen::Index k = 1; k < n; ++k) powers.push_back(powers.back() * shifted);

  ComplexMatrix sum = ComplexMatrix::Zero(n, n);
  for (Eigen::Index k = 1; k < n; ++k) {
    ComplexMatrix inner = ComplexMatrix::Zero(n, n);
    for (Eigen::Index i = 0; i < k; ++i) inner += powers[i] * sqrt_sigma * powers[k - i - 1];
    sum += alpha(k) * inner;
  }
  // tr sqrt(rho sigma) = sqrt(F): rho sigma is similar to sqrt(rho) sigma sqrt(rho)
  return 2.0 * std::sqrt(uhlmann_fidelity(rho, sigma)) * sum;
}

/// Closed-form gradient. With A = sqrt(sigma) rho sqrt(sigma) and F(rho, sigma) = (tr sqrt A)^2,
///   grad F = sqrt(F) sqrt(sigma) A^{-1/2} sqrt(sigma),
/// inverse taken on the support of sigma; a pure target reduces to grad F = sigma.
/// Returns nothing when rho is singular on the support of sigma.
inline std::optional<ComplexMatrix> analytic_fidelity_gradient(const ComplexMatrix& rho, const TargetState& target) {
  const ComplexMatrix& sigma = target.sigma.matrix();
  require_same_dim(rho, sigma, "analytic_fidelity_gradient");
  if (target.is_pure()) return sigma;

  const ComplexMatrix sqrt_sigma = hermitian_sqrt(sigma);
  const ComplexMatrix a = sqrt_sigma * rho * sqrt_sigma;
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(0.5 * (a + a.adjoint()));
  const RealVector sigma_eigs = hermitian_eigenvalues(sigma);

  const double cutoff = 1e-12;
  const auto support = (sigma_eigs.array() > cutoff).count();
  const auto rank_a = (es.eigenvalues().array() > cutoff).count();
  if (rank_a < support) return std::nullopt;

  RealVector inv_root(es.eigenvalues().size());
  double root_trace = 0.0;
  for (Eigen::Index i = 0; i < inv_root.size(); ++i) {
    const double l = es.eigenvalues()(i);
    inv_root(i) = l > cutoff ? 1.0 / std::sqrt(l) : 0.0;
    root_trace += l > 0.0 ? std::sqrt(l) : 0.0;
  }
  const ComplexMatrix a_inv_root = es.eigenvectors() * inv_root.cast<Complex>().asDiagonal() * es.eigenvectors().adjoint();
  return ComplexMatrix(root_trace * sqrt_sigma * a_inv_root * sqrt_sigma);
}

/// pi(1) = grad_rho F(rho(1), sigma). Falls back to finite differences when the
/// requested method does not apply, and flags it.
inline TerminalCostate terminal_costate(const DensityMatrix& rho1, const TargetState& target,
                                        TerminalGradientMode mode = TerminalGradientMode::analytic) {
  const ComplexMatrix& rho = rho1.matrix();
  const ComplexMatrix& sigma = target.sigma.matrix();
  require_same_dim(rho, sigma, "terminal_costate");
  switch (mode) {
    case TerminalGradientMode::analytic:
      if (auto g = analytic_fidelity_gradient(rho, target)) return {std::move(*g), mode, false};
      break;
    case TerminalGradientMode::cayley_hamilton:
      try {
        return {cayley_hamilton_fidelity_gradient(rho, sigma), mode, false};
      } catch (const DegenerateSpectrumError&) {
      }
      break;
    case TerminalGradientMode::finite_difference:
      return {fidelity_gradient_fd(rho, sigma), mode, false};
  }
  return {fidelity_gradient_fd(rho, sigma), TerminalGradientMode::finite_difference, true};
}

}  // namespace qpmp
