#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "klap/linalg.hpp"
#include "klap/lti_system.hpp"

namespace klap {

/// Relative tolerance on |Re(lambda)| for "eigenvalue on the imaginary axis".
inline constexpr double kAxisTolRel = 1e-6;

/// KYP operator W(X) = [[-A^T X - X A, C^T - X B], [C - B^T X, D + D^T]].
inline Matrix kyp_residual(const StateSpaceSystem& sys, const Matrix& X) {
  const Eigen::Index n = sys.n(), m = sys.m();
  if (X.rows() != n || X.cols() != n)
    throw Error(ErrorCode::DimensionMismatch, "X must be n x n");
  Matrix W(n + m, n + m);
  W.topLeftCorner(n, n) = -sys.A().transpose() * X - X * sys.A();
  W.topRightCorner(n, m) = sys.C().transpose() - X * sys.B();
  W.bottomLeftCorner(m, n) = sys.C() - sys.B().transpose() * X;
  W.bottomRightCorner(m, m) = sys.feedthrough_sym();
  return symmetrize(W);
}

enum class AreKind { Minimal, Maximal };

struct AreSolution {
  Matrix X;
  AreKind kind = AreKind::Minimal;
  /// max Re(lambda) of Y = A - B (D + D^T)^{-1} (C - B^T X)
  double closed_loop_max_real = 0.0;
  int newton_iterations = 0;
  std::vector<double> residual_history;
};

struct AreOptions {
  int max_iterations = 100;
  double residual_tol = 1e-10;
};

/// Residual of A^T X + X A + (C^T - X B) R^{-1} (C - B^T X) with R = D + D^T.
inline Matrix are_residual(const Matrix& A, const Matrix& B, const Matrix& C, const Matrix& R,
                           const Matrix& X) {
  const Matrix K = R.ldlt().solve(C - B.transpose() * X);
  return symmetrize(A.transpose() * X + X * A + (C.transpose() - X * B) * K);
}

inline Matrix are_residual(const StateSpaceSystem& sys, const Matrix& X) {
  return are_residual(sys.A(), sys.B(), sys.C(), sys.feedthrough_sym(), X);
}

namespace detail {

inline Eigen::LLT<Matrix> require_positive_definite(const Matrix& R) {
  const double scale = std::max(1.0, R.norm());
  if (R.size() == 0 || min_eigenvalue(R) <= tol::psd * scale)
    throw Error(ErrorCode::SingularFeedthrough, "D + D^T is not positive definite");
  Eigen::LLT<Matrix> llt(symmetrize(R));
  if (llt.info() != Eigen::Success)
    throw Error(ErrorCode::SingularFeedthrough, "Cholesky of D + D^T failed");
  return llt;
}

// X = V2 V1^{-1} from the eigenvectors of [[F, G], [-Q, -F^T]] with Re < 0,
// the stabilizing solution of F^T X + X F + X G X + Q = 0 when it exists.
inline Matrix hamiltonian_start(const Matrix& F, const Matrix& G, const Matrix& Q) {
  const Eigen::Index n = F.rows();
  Matrix H(2 * n, 2 * n);
  H << F, G, -Q, -F.transpose();
  Eigen::EigenSolver<Matrix> es(H);
  if (es.info() != Eigen::Success)
    throw Error(ErrorCode::NoSolution, "Hamiltonian eigensolver failed");
  const CVector ev = es.eigenvalues();
  const CMatrix V = es.eigenvectors();
  CMatrix S(2 * n, n);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < 2 * n; ++j)
    if (ev(j).real() < 0.0 && k < n) S.col(k++) = V.col(j);
  if (k != n)
    throw Error(ErrorCode::NoSolution, "Hamiltonian has eigenvalues on the imaginary axis");
  const Eigen::PartialPivLU<CMatrix> lu(S.topRows(n));
  const double rcond = lu.rcond();
  if (!(rcond > 1e-14))
    throw Error(ErrorCode::NoSolution, "stable subspace is not a graph; no stabilizing start");
  const CMatrix X = S.bottomRows(n) * lu.inverse();
  return symmetrize(Matrix(X.real()));
}

// Stabilizing solution of A^T X + X A + (C^T - X B) R^{-1} (C - B^T X) = 0,
// i.e. the one with A - B R^{-1} (C - B^T X) in the closed left half-plane.
// Newton-Kleinman from a stabilizing start; the start is X0 = 0 when
// F = A - B R^{-1} C is already Hurwitz, otherwise X0 = -W^{-1} with W from
// the shifted Lyapunov equation (F + beta I) W + W (F + beta I)^T = 2 B R^{-1} B^T.
inline AreSolution newton_kleinman(const Matrix& A, const Matrix& B, const Matrix& C,
                                   const Matrix& R, const AreOptions& opt) {
  const Eigen::Index n = A.rows();
  const auto llt = require_positive_definite(R);
  const Matrix F = A - B * llt.solve(C);
  const Matrix G = symmetrize(B * llt.solve(B.transpose()));

  Matrix X = Matrix::Zero(n, n);
  if (!is_hurwitz(F) || max_real_part(F) > -1e-8 * std::max(1.0, F.norm())) {
    const CVector ev = eigenvalues(F);
    double min_re = 0.0;
    for (const auto& l : ev) min_re = std::min(min_re, l.real());
    const double beta = -min_re + std::max(1.0, F.norm());
    Matrix shifted = -F;
    shifted.diagonal().array() -= beta;
    const Matrix W = LyapunovSolver(shifted, LyapunovStrategy::Dense).solve(2.0 * G);
    Eigen::LLT<Matrix> wllt(W);
    if (wllt.info() == Eigen::Success && min_eigenvalue(W) > 1e-12 * W.norm()) {
      X = -symmetrize(wllt.solve(Matrix::Identity(n, n)));
    } else {
      // W is numerically singular for weakly controllable (A, B); start from the
      // stable invariant subspace of the Hamiltonian instead.
      X = hamiltonian_start(F, G, symmetrize(C.transpose() * llt.solve(C)));
    }
  }

  AreSolution sol;
  const double a_norm = A.norm();
  for (int it = 0; it <= opt.max_iterations; ++it) {
    const Matrix K = llt.solve(C - B.transpose() * X);
    const Matrix Y = A - B * K;
    const Matrix res = symmetrize(A.transpose() * X + X * A + (C.transpose() - X * B) * K);
    const double res_norm = res.norm();
    sol.residual_history.push_back(res_norm);
    const double scale =
        std::max(1.0, a_norm * X.norm() + (C.transpose() - X * B).norm() * K.norm());
    if (!std::isfinite(res_norm) || X.norm() > 1e14 * std::max(1.0, a_norm))
      throw Error(ErrorCode::NoSolution, "Newton-Kleinman iteration diverged");
    if (res_norm <= opt.residual_tol * scale) {
      sol.X = symmetrize(X);
      sol.newton_iterations = it;
      sol.closed_loop_max_real = max_real_part(Y);
      return sol;
    }
    if (it == opt.max_iterations) break;
    Matrix next;
    try {
      // Y^T X+ + X+ Y = Y^T X + X Y - res
      next = LyapunovSolver(Y, LyapunovStrategy::Dense)
                 .solve_transposed(-(Y.transpose() * X + X * Y - res));
    } catch (const Error& e) {
      throw Error(ErrorCode::NoSolution,
                  std::string("Newton step lost closed-loop stability (") + e.what() + ")");
    }
    X = symmetrize(next);
  }
  throw Error(ErrorCode::NoSolution, "Newton-Kleinman did not converge in " +
                                         std::to_string(opt.max_iterations) + " iterations");
}

}  // namespace detail

/// Extremal solution of the KYP Riccati equation
///   A^T X + X A + (C^T - X B)(D + D^T)^{-1}(C - B^T X) = 0.
/// Minimal gives X_min (closed loop in the closed left half-plane). Maximal
/// solves the Minimal problem for (-A, -B, C, D) and negates the result, which
/// yields X_max with the closed loop in the closed right half-plane.
/// Failure to find a real solution is reported as NoSolution: for a stable
/// system it means the system is not passive.
inline AreSolution solve_are(const StateSpaceSystem& sys, AreKind kind = AreKind::Minimal,
                             const AreOptions& opt = {}) {
  const Matrix R = sys.feedthrough_sym();
  AreSolution sol;
  if (kind == AreKind::Minimal) {
    sol = detail::newton_kleinman(sys.A(), sys.B(), sys.C(), R, opt);
  } else {
    sol = detail::newton_kleinman(-sys.A(), -sys.B(), sys.C(), R, opt);
    sol.X = -sol.X;
    sol.closed_loop_max_real =
        max_real_part(sys.A() - sys.B() * R.ldlt().solve(sys.C() - sys.B().transpose() * sol.X));
  }
  sol.kind = kind;
  const double x_scale = std::max(1.0, sol.X.norm());
  if (min_eigenvalue(sol.X) < -1e-8 * x_scale)
    throw Error(ErrorCode::NoSolution, "Riccati solution is indefinite");
  return sol;
}

enum class PassivityMethod { Hamiltonian, PopovScan, AreFeasibility };

inline std::string to_string(PassivityMethod m) {
  switch (m) {
    case PassivityMethod::Hamiltonian: return "hamiltonian";
    case PassivityMethod::PopovScan: return "popov_scan";
    case PassivityMethod::AreFeasibility: return "are_feasibility";
  }
  return "unknown";
}

struct PassivityVerdict {
  bool passive = false;
  PassivityMethod method = PassivityMethod::Hamiltonian;
  /// Smallest eigenvalue of Phi(i omega) over the frequencies examined.
  double margin = 0.0;
  double argmin_frequency = 0.0;
  std::optional<Matrix> certificate_X;
  /// Frequencies where Phi(i omega) becomes singular (Hamiltonian method).
  std::vector<double> crossings;
};

/// Hamiltonian matrix whose imaginary eigenvalues i omega are exactly the
/// frequencies where Phi(i omega) is singular. Requires D + D^T > 0.
inline Matrix popov_hamiltonian(const StateSpaceSystem& sys) {
  const auto llt = detail::require_positive_definite(sys.feedthrough_sym());
  const Eigen::Index n = sys.n();
  const Matrix F = sys.A() - sys.B() * llt.solve(sys.C());
  Matrix H(2 * n, 2 * n);
  H.topLeftCorner(n, n) = F;
  H.topRightCorner(n, n) = -sys.B() * llt.solve(sys.B().transpose());
  H.bottomLeftCorner(n, n) = sys.C().transpose() * llt.solve(sys.C());
  H.bottomRightCorner(n, n) = -F.transpose();
  return H;
}

namespace detail {

/// Smallest Popov eigenvalue over a sorted frequency list, with the lowest
/// discrete local minima refined by golden-section search between neighbours.
inline std::pair<double, double> refined_popov_min(const StateSpaceSystem& sys,
                                                   const std::vector<double>& freqs,
                                                   std::size_t max_refine = 8) {
  const std::size_t N = freqs.size();
  std::vector<double> vals(N);
  for (std::size_t k = 0; k < N; ++k) vals[k] = popov_min_eigenvalue(sys, freqs[k]);

  std::vector<std::size_t> dips;
  for (std::size_t k = 0; k < N; ++k) {
    const bool left = k == 0 || vals[k] <= vals[k - 1];
    const bool right = k + 1 == N || vals[k] <= vals[k + 1];
    if (left && right) dips.push_back(k);
  }
  std::sort(dips.begin(), dips.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
  if (dips.size() > max_refine) dips.resize(max_refine);

  double best = std::numeric_limits<double>::infinity(), arg = 0.0;
  for (std::size_t k = 0; k < N; ++k)
    if (vals[k] < best) best = vals[k], arg = freqs[k];

  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  for (std::size_t k : dips) {
    double a = freqs[k == 0 ? 0 : k - 1], b = freqs[k + 1 == N ? N - 1 : k + 1];
    if (!(b > a)) continue;
    double x1 = b - g * (b - a), x2 = a + g * (b - a);
    double f1 = popov_min_eigenvalue(sys, x1), f2 = popov_min_eigenvalue(sys, x2);
    for (int it = 0; it < 80 && b - a > 1e-15 * std::max(1.0, b); ++it) {
      if (f1 <= f2) {
        b = x2, x2 = x1, f2 = f1;
        x1 = b - g * (b - a), f1 = popov_min_eigenvalue(sys, x1);
      } else {
        a = x1, x1 = x2, f1 = f2;
        x2 = a + g * (b - a), f2 = popov_min_eigenvalue(sys, x2);
      }
    }
    if (f1 < best) best = f1, arg = x1;
    if (f2 < best) best = f2, arg = x2;
  }
  return {best, arg};
}

}  // namespace detail

/// Frequency-domain passivity test for a stable system. With D + D^T > 0 the
/// imaginary eigenvalues of the Hamiltonian split [0, inf) into intervals on
/// which Phi(i omega) keeps its inertia; Phi is then sampled at every crossing
/// and every interval midpoint. With singular D + D^T the default Popov grid
/// is scanned instead. `tol` is relative to max(1, ||D + D^T||, ||Phi(0)||).
inline PassivityVerdict check_passive(const StateSpaceSystem& sys, double tol = 1e-9) {
  PassivityVerdict v;
  const Matrix R = sys.feedthrough_sym();
  const double r_min = min_eigenvalue(R);
  const double scale = std::max({1.0, R.norm(), popov_eval(sys, 0.0).norm()});
  const double abs_tol = tol * scale;

  if (r_min < -abs_tol) {
    v.passive = false;
    v.method = PassivityMethod::PopovScan;
    v.margin = r_min;
    v.argmin_frequency = std::numeric_limits<double>::infinity();
    return v;
  }

  if (r_min <= tol::psd * std::max(1.0, R.norm())) {
    const PopovScan scan = popov_scan(sys, default_popov_grid(sys));
    v.method = PassivityMethod::PopovScan;
    v.margin = scan.global_min;
    v.argmin_frequency = scan.argmin_frequency;
    v.passive = v.margin >= -abs_tol;
    return v;
  }

  v.method = PassivityMethod::Hamiltonian;
  const Matrix H = popov_hamiltonian(sys);
  const CVector ev = eigenvalues(H);
  const double axis_tol = kAxisTolRel * std::max(1.0, H.norm());
  std::vector<double> crossings;
  for (const auto& l : ev)
    if (std::abs(l.real()) <= axis_tol && l.imag() >= -axis_tol)
      crossings.push_back(std::max(0.0, l.imag()));
  std::sort(crossings.begin(), crossings.end());
  crossings.erase(std::unique(crossings.begin(), crossings.end(),
                              [&](double a, double b) { return std::abs(a - b) <= 1e-14 * (1 + b); }),
                  crossings.end());
  v.crossings = crossings;

  std::vector<double> probes{0.0};
  for (std::size_t k = 0; k < crossings.size(); ++k) {
    probes.push_back(crossings[k]);
    const double prev = k == 0 ? 0.0 : crossings[k - 1];
    probes.push_back(0.5 * (prev + crossings[k]));
  }
  probes.push_back(crossings.empty() ? 1.0 : 2.0 * crossings.back() + 1.0);

  // The inertia on each interval settles the verdict; the margin itself comes
  // from the probes plus the default grid, refined around the lowest dips.
  std::vector<double> freqs = default_popov_grid(sys);
  freqs.insert(freqs.end(), probes.begin(), probes.end());
  std::sort(freqs.begin(), freqs.end());
  freqs.erase(std::unique(freqs.begin(), freqs.end()), freqs.end());
  std::tie(v.margin, v.argmin_frequency) = detail::refined_popov_min(sys, freqs);

  bool negative_interval = false;
  for (std::size_t k = 0; k + 1 < probes.size(); ++k) {
    const double w = probes[k];
    if (std::find(crossings.begin(), crossings.end(), w) == crossings.end() &&
        popov_min_eigenvalue(sys, w) < -abs_tol)
      negative_interval = true;
  }
  negative_interval = negative_interval || popov_min_eigenvalue(sys, probes.back()) < -abs_tol;
  v.passive = !negative_interval && v.margin >= -abs_tol;
  return v;
}

struct LureResiduals {
  double state = 0.0;        // ||A^T X + X A + L L^T||_F
  double coupling = 0.0;     // ||X B - C^T + L M^T||_F
  double feedthrough = 0.0;  // ||D + D^T - M M^T||_F
};

inline LureResiduals lure_residuals(const StateSpaceSystem& sys, const Matrix& X, const Matrix& L,
                                    const Matrix& M) {
  const Eigen::Index n = sys.n(), m = sys.m();
  if (X.rows() != n || X.cols() != n || L.rows() != n || L.cols() != m || M.rows() != m ||
      M.cols() != m)
    throw Error(ErrorCode::DimensionMismatch, "Lur'e triple dimensions do not match the system");
  return {(sys.A().transpose() * X + X * sys.A() + L * L.transpose()).norm(),
          (X * sys.B() - sys.C().transpose() + L * M.transpose()).norm(),
          (sys.feedthrough_sym() - M * M.transpose()).norm()};
}

struct LureFactor {
  Matrix L;
  Matrix M;
};

/// M = (D + D^T)^{1/2}, L = (C^T - X B) M^{-1}.
inline LureFactor l_from_are(const StateSpaceSystem& sys, const Matrix& X) {
  const Matrix R = sys.feedthrough_sym();
  detail::require_positive_definite(R);
  if (X.rows() != sys.n() || X.cols() != sys.n())
    throw Error(ErrorCode::DimensionMismatch, "X must be n x n");
  Matrix M = sqrtm_psd(R);
  // M is symmetric, so L^T = M^{-1} (C - B^T X).
  Matrix L = M.ldlt().solve(sys.C() - sys.B().transpose() * X).transpose();
  return {std::move(L), std::move(M)};
}

struct GlobalMinCertificate {
  Matrix Y_star;
  double max_abs_real = 0.0;
  double max_real = 0.0;
  bool is_global_candidate = true;
  bool vacuous = false;
};

/// Y* = A - B (D + D^T)^{-1} M L*^T. All eigenvalues of Y* on the imaginary
/// axis (within eps) indicate X_min = X_max, i.e. the passivated system sits
/// on the boundary of the passive set. With singular D + D^T the test does not
/// apply and the candidate flag is set unconditionally.
inline GlobalMinCertificate global_min_certificate(const StateSpaceSystem& sys, const Matrix& M,
                                                   const Matrix& L_star, double eps) {
  GlobalMinCertificate cert;
  const Matrix R = sys.feedthrough_sym();
  if (M.norm() == 0.0 || min_eigenvalue(R) <= tol::psd * std::max(1.0, R.norm())) {
    cert.Y_star = sys.A();
    cert.vacuous = true;
    cert.is_global_candidate = true;
    return cert;
  }
  const auto llt = detail::require_positive_definite(R);
  cert.Y_star = sys.A() - sys.B() * llt.solve(M * L_star.transpose());
  const CVector ev = eigenvalues(cert.Y_star);
  cert.max_abs_real = 0.0;
  cert.max_real = -std::numeric_limits<double>::infinity();
  for (const auto& l : ev) {
    cert.max_abs_real = std::max(cert.max_abs_real, std::abs(l.real()));
    cert.max_real = std::max(cert.max_real, l.real());
  }
  cert.is_global_candidate = cert.max_abs_real <= eps;
  return cert;
}

}  // namespace klap
