#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <exception>
#include <string>
#include <thread>
#include <vector>

#include "klap/linalg.hpp"

namespace klap {

/// Continuous-time LTI model  x' = A x + B u,  y = C x + D u  with as many
/// outputs as inputs. Construction validates dimensions and asymptotic
/// stability; instances are immutable afterwards.
class StateSpaceSystem {
 public:
  StateSpaceSystem(Matrix A, Matrix B, Matrix C, Matrix D)
      : A_(std::move(A)), B_(std::move(B)), C_(std::move(C)), D_(std::move(D)) {
    const Eigen::Index n = A_.rows();
    const Eigen::Index m = B_.cols();
    auto dims = [](const Matrix& M) {
      return std::to_string(M.rows()) + "x" + std::to_string(M.cols());
    };
    if (A_.cols() != n || n == 0)
      throw Error(ErrorCode::DimensionMismatch, "A must be square and nonempty, got " + dims(A_));
    if (B_.rows() != n || m == 0)
      throw Error(ErrorCode::DimensionMismatch, "B must be n x m with m > 0, got " + dims(B_));
    if (C_.rows() != m || C_.cols() != n)
      throw Error(ErrorCode::DimensionMismatch,
                  "C must be " + std::to_string(m) + "x" + std::to_string(n) + ", got " + dims(C_));
    if (D_.rows() != m || D_.cols() != m)
      throw Error(ErrorCode::DimensionMismatch,
                  "D must be " + std::to_string(m) + "x" + std::to_string(m) + ", got " + dims(D_));
    if (m > n)
      throw Error(ErrorCode::DimensionMismatch, "need m <= n");
    if (!A_.allFinite() || !B_.allFinite() || !C_.allFinite() || !D_.allFinite())
      throw Error(ErrorCode::InvalidArgument, "system matrices contain non-finite entries");
    require_hurwitz(A_);
  }

  const Matrix& A() const noexcept { return A_; }
  const Matrix& B() const noexcept { return B_; }
  const Matrix& C() const noexcept { return C_; }
  const Matrix& D() const noexcept { return D_; }
  Eigen::Index n() const noexcept { return A_.rows(); }
  Eigen::Index m() const noexcept { return B_.cols(); }

  /// D + D^T
  Matrix feedthrough_sym() const { return D_ + D_.transpose(); }

  StateSpaceSystem with_output(Matrix C_new) const { return {A_, B_, std::move(C_new), D_}; }
  StateSpaceSystem with_feedthrough(Matrix D_new) const { return {A_, B_, C_, std::move(D_new)}; }

 private:
  Matrix A_, B_, C_, D_;
};

/// G(s) = C (sI - A)^{-1} B + D via one LU solve.
inline CMatrix transfer_eval(const StateSpaceSystem& sys, Complex s) {
  const Eigen::Index n = sys.n();
  CMatrix shifted = -sys.A().cast<Complex>();
  shifted.diagonal().array() += s;
  Eigen::PartialPivLU<CMatrix> lu(shifted);
  if (!(lu.rcond() > static_cast<double>(n) * std::numeric_limits<double>::epsilon()))
    throw Error(ErrorCode::SingularShift, "sI - A is singular");
  return sys.C().cast<Complex>() * lu.solve(sys.B().cast<Complex>()) + sys.D().cast<Complex>();
}

/// Phi(i omega) = G(i omega) + G(i omega)^H, exactly Hermitian.
inline CMatrix popov_eval(const StateSpaceSystem& sys, double omega) {
  const CMatrix G = transfer_eval(sys, Complex(0.0, omega));
  CMatrix Phi = G + G.adjoint();
  return 0.5 * (Phi + Phi.adjoint());
}

inline Vector popov_eigenvalues(const StateSpaceSystem& sys, double omega) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(popov_eval(sys, omega), Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

inline double popov_min_eigenvalue(const StateSpaceSystem& sys, double omega) {
  return popov_eigenvalues(sys, omega)(0);
}

struct PopovScan {
  std::vector<double> frequencies;
  std::vector<double> min_eigenvalues;
  double global_min = 0.0;
  double argmin_frequency = 0.0;
};

/// `points` log-spaced frequencies in [wmin, wmax], optionally preceded by 0.
inline std::vector<double> log_grid(double wmin, double wmax, std::size_t points,
                                    bool include_zero = false) {
  if (!(wmin > 0.0) || !(wmax >= wmin) || points == 0)
    throw Error(ErrorCode::InvalidArgument, "log grid needs 0 < wmin <= wmax and points > 0");
  std::vector<double> grid;
  grid.reserve(points + 1);
  if (include_zero) grid.push_back(0.0);
  if (points == 1) {
    grid.push_back(wmin);
    return grid;
  }
  const double a = std::log10(wmin), b = std::log10(wmax);
  for (std::size_t k = 0; k < points; ++k)
    grid.push_back(std::pow(10.0, a + (b - a) * static_cast<double>(k) /
                                          static_cast<double>(points - 1)));
  return grid;
}

/// Default scan: omega = 0 plus 500 log-spaced points in [1e-4 rho, 1e4 rho],
/// rho = max(1, spectral radius of A).
inline std::vector<double> default_popov_grid(const StateSpaceSystem& sys,
                                              std::size_t points = 500) {
  const double rho = std::max(1.0, spectral_radius(sys.A()));
  return log_grid(1e-4 * rho, 1e4 * rho, points, /*include_zero=*/true);
}

inline PopovScan popov_scan(const StateSpaceSystem& sys, const std::vector<double>& grid,
                            unsigned threads = 1) {
  if (grid.empty()) throw Error(ErrorCode::InvalidArgument, "empty frequency grid");
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (!(grid[k] >= 0.0) || (k > 0 && !(grid[k] > grid[k - 1])))
      throw Error(ErrorCode::InvalidArgument, "grid must be nonnegative and strictly increasing");
  }
  PopovScan scan;
  scan.frequencies = grid;
  scan.min_eigenvalues.assign(grid.size(), 0.0);

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k)
      scan.min_eigenvalues[k] = popov_min_eigenvalue(sys, grid[k]);
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(grid.size())));
  if (threads == 1) {
    work(0, grid.size());
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    const std::size_t chunk = (grid.size() + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t b = t * chunk, e = std::min(grid.size(), b + chunk);
      pool.emplace_back([&, t, b, e] {
        try {
          work(b, e);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  const auto it = std::min_element(scan.min_eigenvalues.begin(), scan.min_eigenvalues.end());
  scan.global_min = *it;
  scan.argmin_frequency = grid[static_cast<std::size_t>(it - scan.min_eigenvalues.begin())];
  return scan;
}

/// P with A P + P A^T + B B^T = 0.
inline Matrix controllability_gramian(const StateSpaceSystem& sys,
                                      LyapunovStrategy strategy = LyapunovStrategy::Diagonalized) {
  return LyapunovSolver(sys.A(), strategy).solve(sys.B() * sys.B().transpose());
}

inline Matrix controllability_gramian(const LyapunovSolver& solver, const Matrix& B) {
  return solver.solve(B * B.transpose());
}

/// Squared H2 distance between (A, B, C, D) and (A, B, C_hat, D):
/// tr((C - C_hat) P (C - C_hat)^T).
inline double h2_error_sq(const StateSpaceSystem& sys, const Matrix& C_hat, const Matrix& P) {
  if (C_hat.rows() != sys.m() || C_hat.cols() != sys.n())
    throw Error(ErrorCode::DimensionMismatch, "C_hat must be m x n");
  if (P.rows() != sys.n() || P.cols() != sys.n())
    throw Error(ErrorCode::DimensionMismatch, "Gramian must be n x n");
  const Matrix E = sys.C() - C_hat;
  return std::max(0.0, (E * P * E.transpose()).trace());
}

inline double h2_error_sq(const StateSpaceSystem& sys, const Matrix& C_hat) {
  return h2_error_sq(sys, C_hat, controllability_gramian(sys));
}

inline double h2_error(const StateSpaceSystem& sys, const Matrix& C_hat, const Matrix& P) {
  return std::sqrt(h2_error_sq(sys, C_hat, P));
}

/// The system in the eigenvector basis of A: A_diag = V^{-1} A V (diagonal),
/// B_diag = V^{-1} B, C_diag = C V. D is unchanged.
struct DiagonalizedSystem {
  StateSpaceSystem original;
  CVector poles;
  CMatrix B;
  CMatrix C;
  SpectralDecomposition transform;

  CMatrix A() const { return poles.asDiagonal(); }
};

inline DiagonalizedSystem diagonalize(const StateSpaceSystem& sys,
                                      double max_condition = tol::diag_condition) {
  SpectralDecomposition sd = spectral_decompose(sys.A(), max_condition);
  CMatrix Bd = sd.inverse_eigenvectors * sys.B().cast<Complex>();
  CMatrix Cd = sys.C().cast<Complex>() * sd.right_eigenvectors;
  CVector poles = sd.eigenvalues;
  return {sys, std::move(poles), std::move(Bd), std::move(Cd), std::move(sd)};
}

inline CMatrix transfer_eval(const DiagonalizedSystem& sys, Complex s) {
  CMatrix scaled = sys.B;
  for (Eigen::Index i = 0; i < scaled.rows(); ++i) {
    const Complex d = s - sys.poles(i);
    if (std::abs(d) == 0.0) throw Error(ErrorCode::SingularShift, "s is a pole");
    scaled.row(i) /= d;
  }
  return sys.C * scaled + sys.original.D().cast<Complex>();
}

}  // namespace klap
