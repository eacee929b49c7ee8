#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <string>

#include "klap/errors.hpp"

namespace klap {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using Complex = std::complex<double>;

namespace tol {
/// Relative clipping tolerance for eigenvalues of nominally PSD matrices.
inline constexpr double psd = 1e-10;
/// A is Hurwitz iff max Re(lambda) < -stab_rel * ||A||_F.
inline constexpr double stab_rel = 1e-12;
/// Eigenvector condition number above which diagonalization is rejected.
inline constexpr double diag_condition = 1e8;
/// Largest tolerated ||Im X||_F / ||Re X||_F after a complex-arithmetic solve.
inline constexpr double imag_residue = 1e-8;
}  // namespace tol

enum class LyapunovStrategy { Diagonalized, Dense, Oracle };

inline std::string to_string(LyapunovStrategy s) {
  switch (s) {
    case LyapunovStrategy::Diagonalized: return "diagonalized";
    case LyapunovStrategy::Dense: return "dense";
    case LyapunovStrategy::Oracle: return "oracle";
  }
  return "unknown";
}

inline Matrix symmetrize(const Matrix& X) { return 0.5 * (X + X.transpose()); }

inline void require_square(const Matrix& A, const char* name) {
  if (A.rows() != A.cols())
    throw Error(ErrorCode::DimensionMismatch,
                std::string(name) + " must be square, got " +
                    std::to_string(A.rows()) + "x" + std::to_string(A.cols()));
}

inline CVector eigenvalues(const Matrix& A) {
  require_square(A, "A");
  if (A.size() == 0) return CVector(0);
  Eigen::EigenSolver<Matrix> es(A, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success)
    throw Error(ErrorCode::IllConditioned, "eigenvalue iteration did not converge");
  return es.eigenvalues();
}

/// Spectral abscissa of A.
inline double max_real_part(const Matrix& A) {
  const CVector ev = eigenvalues(A);
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& l : ev) best = std::max(best, l.real());
  return best;
}

inline double spectral_radius(const Matrix& A) {
  const CVector ev = eigenvalues(A);
  double best = 0.0;
  for (const auto& l : ev) best = std::max(best, std::abs(l));
  return best;
}

inline double stability_tolerance(const Matrix& A) { return tol::stab_rel * A.norm(); }

inline bool is_hurwitz(const Matrix& A) {
  return A.size() == 0 || max_real_part(A) < -stability_tolerance(A);
}

inline void require_hurwitz(const Matrix& A) {
  if (A.size() == 0) return;
  const double abscissa = max_real_part(A);
  if (!(abscissa < -stability_tolerance(A)))
    throw Error(ErrorCode::NotHurwitz,
                "max Re(lambda) = " + std::to_string(abscissa) + " is not negative");
}

/// A = V diag(eigenvalues) V^{-1}.
struct SpectralDecomposition {
  CVector eigenvalues;
  CMatrix right_eigenvectors;
  CMatrix inverse_eigenvectors;
  double condition_estimate = 1.0;

  CMatrix reconstruct() const {
    return right_eigenvectors * eigenvalues.asDiagonal() * inverse_eigenvectors;
  }
};

/// Throws Defective when the eigenvector matrix is numerically singular and
/// IllConditioned when its 2-norm condition number exceeds max_condition.
inline SpectralDecomposition spectral_decompose(const Matrix& A,
                                                double max_condition = tol::diag_condition) {
  require_square(A, "A");
  const Eigen::Index n = A.rows();
  SpectralDecomposition out;
  if (n == 0) return out;

  Eigen::EigenSolver<Matrix> es(A);
  if (es.info() != Eigen::Success)
    throw Error(ErrorCode::IllConditioned, "eigenvalue iteration did not converge");
  out.eigenvalues = es.eigenvalues();
  out.right_eigenvectors = es.eigenvectors();

  Eigen::JacobiSVD<CMatrix> svd(out.right_eigenvectors);
  const auto& sv = svd.singularValues();
  const double smax = sv(0);
  const double smin = sv(n - 1);
  if (!(smin > static_cast<double>(n) * std::numeric_limits<double>::epsilon() * smax))
    throw Error(ErrorCode::Defective, "eigenvector matrix is singular (defective matrix)");
  out.condition_estimate = smax / smin;
  if (out.condition_estimate > max_condition)
    throw Error(ErrorCode::IllConditioned,
                "eigenvector condition " + std::to_string(out.condition_estimate) +
                    " exceeds " + std::to_string(max_condition));
  out.inverse_eigenvectors = out.right_eigenvectors.partialPivLu().inverse();
  return out;
}

/// Square root of a symmetric PSD matrix. Eigenvalues down to
/// -tol::psd * ||S||_2 are clipped to zero; anything more negative is NotPSD.
inline Matrix sqrtm_psd(const Matrix& S) {
  require_square(S, "S");
  if (S.size() == 0) return S;
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(S));
  if (es.info() != Eigen::Success)
    throw Error(ErrorCode::NotPSD, "symmetric eigensolver failed");
  Vector ev = es.eigenvalues();
  const double scale = std::max(ev.cwiseAbs().maxCoeff(), 0.0);
  const double floor = -tol::psd * scale;
  if (ev.minCoeff() < floor)
    throw Error(ErrorCode::NotPSD,
                "min eigenvalue " + std::to_string(ev.minCoeff()) + " is negative");
  ev = ev.cwiseMax(0.0).cwiseSqrt();
  const Matrix& V = es.eigenvectors();
  return symmetrize(V * ev.asDiagonal() * V.transpose());
}

/// Solves A X + X A^T + W = 0 through the n^2 x n^2 vectorized system.
/// Test oracle only; A does not need to be Hurwitz, just free of
/// eigenvalue pairs with lambda_i + lambda_j = 0.
inline Matrix kron_lyapunov_oracle(const Matrix& A, const Matrix& W) {
  require_square(A, "A");
  const Eigen::Index n = A.rows();
  if (W.rows() != n || W.cols() != n)
    throw Error(ErrorCode::DimensionMismatch, "W must match A");
  if (n > 50)
    throw Error(ErrorCode::InvalidArgument, "Kronecker oracle is limited to n <= 50");
  if (n == 0) return W;

  const CVector ev = eigenvalues(A);
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (std::abs(ev(i) + ev(j)) <= 1e-12 * scale)
        throw Error(ErrorCode::SingularOperator,
                    "lambda_i + lambda_j = 0 for a pair of eigenvalues of A");

  // vec(A X + X A^T) = (I (x) A + A (x) I) vec(X), column-major vec.
  const Eigen::Index N = n * n;
  Matrix K = Matrix::Zero(N, N);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index row = i + j * n;
      for (Eigen::Index k = 0; k < n; ++k) {
        K(row, k + j * n) += A(i, k);  // (A X)_ij
        K(row, i + k * n) += A(j, k);  // (X A^T)_ij
      }
    }
  const Vector rhs = -Eigen::Map<const Vector>(W.data(), N);
  const Vector x = K.fullPivLu().solve(rhs);
  return Eigen::Map<const Matrix>(x.data(), n, n);
}

namespace detail {

// T X + X T^H = R with T upper triangular: back substitution from the
// bottom-right corner.
inline CMatrix triangular_lyapunov(const CMatrix& T, const CMatrix& R) {
  const Eigen::Index n = T.rows();
  CMatrix X = CMatrix::Zero(n, n);
  for (Eigen::Index j = n - 1; j >= 0; --j) {
    for (Eigen::Index i = n - 1; i >= 0; --i) {
      Complex acc = R(i, j);
      for (Eigen::Index k = i + 1; k < n; ++k) acc -= T(i, k) * X(k, j);
      for (Eigen::Index k = j + 1; k < n; ++k) acc -= X(i, k) * std::conj(T(j, k));
      X(i, j) = acc / (T(i, i) + std::conj(T(j, j)));
    }
  }
  return X;
}

// T^H X + X T = R with T upper triangular: forward substitution.
inline CMatrix triangular_lyapunov_adjoint(const CMatrix& T, const CMatrix& R) {
  const Eigen::Index n = T.rows();
  CMatrix X = CMatrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      Complex acc = R(i, j);
      for (Eigen::Index k = 0; k < i; ++k) acc -= std::conj(T(k, i)) * X(k, j);
      for (Eigen::Index k = 0; k < j; ++k) acc -= X(i, k) * T(k, j);
      X(i, j) = acc / (std::conj(T(i, i)) + T(j, j));
    }
  }
  return X;
}

inline Matrix real_part_checked(const CMatrix& X) {
  const Matrix re = X.real();
  const double im = X.imag().norm();
  if (im > tol::imag_residue * std::max(re.norm(), std::numeric_limits<double>::min()) &&
      im > 1e-300)
    throw Error(ErrorCode::IllConditioned,
                "complex Lyapunov solve left an imaginary residue of " + std::to_string(im));
  return re;
}

}  // namespace detail

/// Lyapunov solver bound to one Hurwitz matrix A. The factorization (spectral
/// or Schur) is computed once on construction, so repeated solves against the
/// same A only pay for the transformation of the right-hand side.
///
///   solve(W):            A X + X A^T + W = 0
///   solve_transposed(W): A^T X + X A + W = 0
///
/// Requesting Diagonalized on a defective or ill-conditioned A silently falls
/// back to Dense; strategy() reports what is actually in use.
class LyapunovSolver {
 public:
  explicit LyapunovSolver(Matrix A,
                          LyapunovStrategy strategy = LyapunovStrategy::Diagonalized,
                          double max_condition = tol::diag_condition)
      : A_(std::move(A)), strategy_(strategy) {
    require_square(A_, "A");
    require_hurwitz(A_);
    if (strategy_ == LyapunovStrategy::Diagonalized) {
      try {
        spectral_ = spectral_decompose(A_, max_condition);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::Defective && e.code() != ErrorCode::IllConditioned) throw;
        strategy_ = LyapunovStrategy::Dense;
      }
    }
    if (strategy_ == LyapunovStrategy::Dense && A_.size() > 0) {
      Eigen::ComplexSchur<CMatrix> schur(A_.cast<Complex>());
      if (schur.info() != Eigen::Success)
        throw Error(ErrorCode::IllConditioned, "Schur decomposition did not converge");
      schur_T_ = schur.matrixT();
      schur_U_ = schur.matrixU();
    }
  }

  const Matrix& A() const noexcept { return A_; }
  Eigen::Index size() const noexcept { return A_.rows(); }
  LyapunovStrategy strategy() const noexcept { return strategy_; }
  const std::optional<SpectralDecomposition>& spectral() const noexcept { return spectral_; }

  Matrix solve(const Matrix& W) const {
    check_rhs(W);
    if (A_.size() == 0) return W;
    switch (strategy_) {
      case LyapunovStrategy::Oracle:
        return symmetrize_if(W, kron_lyapunov_oracle(A_, W));
      case LyapunovStrategy::Diagonalized: {
        const auto& V = spectral_->right_eigenvectors;
        const auto& Vi = spectral_->inverse_eigenvectors;
        const auto& lam = spectral_->eigenvalues;
        CMatrix Wt = Vi * W.cast<Complex>() * Vi.adjoint();
        for (Eigen::Index j = 0; j < Wt.cols(); ++j)
          for (Eigen::Index i = 0; i < Wt.rows(); ++i)
            Wt(i, j) = -Wt(i, j) / (lam(i) + std::conj(lam(j)));
        return symmetrize_if(W, detail::real_part_checked(V * Wt * V.adjoint()));
      }
      case LyapunovStrategy::Dense: {
        const CMatrix Wt = schur_U_.adjoint() * W.cast<Complex>() * schur_U_;
        const CMatrix Xt = detail::triangular_lyapunov(schur_T_, -Wt);
        return symmetrize_if(W, (schur_U_ * Xt * schur_U_.adjoint()).real());
      }
    }
    return {};
  }

  Matrix solve_transposed(const Matrix& W) const {
    check_rhs(W);
    if (A_.size() == 0) return W;
    switch (strategy_) {
      case LyapunovStrategy::Oracle:
        return symmetrize_if(W, kron_lyapunov_oracle(A_.transpose(), W));
      case LyapunovStrategy::Diagonalized: {
        const auto& V = spectral_->right_eigenvectors;
        const auto& Vi = spectral_->inverse_eigenvectors;
        const auto& lam = spectral_->eigenvalues;
        CMatrix Wt = V.adjoint() * W.cast<Complex>() * V;
        for (Eigen::Index j = 0; j < Wt.cols(); ++j)
          for (Eigen::Index i = 0; i < Wt.rows(); ++i)
            Wt(i, j) = -Wt(i, j) / (std::conj(lam(i)) + lam(j));
        return symmetrize_if(W, detail::real_part_checked(Vi.adjoint() * Wt * Vi));
      }
      case LyapunovStrategy::Dense: {
        const CMatrix Wt = schur_U_.adjoint() * W.cast<Complex>() * schur_U_;
        const CMatrix Xt = detail::triangular_lyapunov_adjoint(schur_T_, -Wt);
        return symmetrize_if(W, (schur_U_ * Xt * schur_U_.adjoint()).real());
      }
    }
    return {};
  }

 private:
  void check_rhs(const Matrix& W) const {
    if (W.rows() != A_.rows() || W.cols() != A_.cols())
      throw Error(ErrorCode::DimensionMismatch, "right-hand side must match A");
  }

  // Symmetric data gives a symmetric solution; enforce it exactly.
  static Matrix symmetrize_if(const Matrix& W, const Matrix& X) {
    return W.isApprox(W.transpose(), 0.0) ? symmetrize(X) : X;
  }

  Matrix A_;
  LyapunovStrategy strategy_;
  std::optional<SpectralDecomposition> spectral_;
  CMatrix schur_T_;
  CMatrix schur_U_;
};

/// A X + X A^T + W = 0.
inline Matrix solve_lyapunov(const Matrix& A, const Matrix& W,
                             LyapunovStrategy strategy = LyapunovStrategy::Diagonalized) {
  return LyapunovSolver(A, strategy).solve(W);
}

/// A^T X + X A + W = 0.
inline Matrix solve_lyapunov_transposed(const Matrix& A, const Matrix& W,
                                        LyapunovStrategy strategy = LyapunovStrategy::Diagonalized) {
  return LyapunovSolver(A, strategy).solve_transposed(W);
}

/// Smallest eigenvalue of a symmetric matrix.
inline double min_eigenvalue(const Matrix& S) {
  if (S.size() == 0) return 0.0;
  return Eigen::SelfAdjointEigenSolver<Matrix>(symmetrize(S), Eigen::EigenvaluesOnly)
      .eigenvalues()(0);
}

}  // namespace klap
