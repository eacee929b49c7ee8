#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "klap/lbfgs.hpp"
#include "klap/linalg.hpp"
#include "klap/lti_system.hpp"
#include "klap/passivity.hpp"

namespace klap {

/// Decision variable of the passivation problem. M is fixed for a run with
/// M M^T = D + D^T; every L gives a passive output matrix through c_of_l.
struct LurePoint {
  Matrix L;
  Matrix M;
};

struct ObjectiveEval {
  double J = 0.0;
  Matrix grad;
  /// A^T X + X A + L L^T = 0
  Matrix X;
  /// A X_grad + X_grad A^T - P (C - C_hat)^T B^T - B (C - C_hat) P = 0
  Matrix X_grad;
  Matrix C_hat;
};

enum class InitMode { Are, Random, Given };

struct KlapConfig {
  double grad_tol = 1e-8;
  double obj_rel_tol = 1e-6;
  /// Step length of the output-matrix gradient step used for restarts.
  double restart_step = 1e-8;
  /// Certificate/restart threshold on Re(lambda(Y*)), relative to ||A||_F.
  double restart_axis_tol_rel = 1e-6;
  /// Margin added on top of -lambda_min/2 in the feedthrough perturbation,
  /// relative to |lambda_min|.
  double init_margin_rel = 1e-3;
  int max_iterations = 50000;
  int max_restarts = 5;
  int lbfgs_memory = 10;
  std::size_t popov_points = 500;
  /// Overrides the default Popov grid when nonempty.
  std::vector<double> popov_grid;
  std::uint64_t rng_seed = 0;
  LyapunovStrategy lyapunov = LyapunovStrategy::Diagonalized;
  InitMode init = InitMode::Are;
  /// Starting point for InitMode::Given.
  std::optional<Matrix> initial_L;
  unsigned threads = 1;
};

/// Per-run cache: one Lyapunov factorization of A, the Gramian and M.
class KlapProblem {
 public:
  KlapProblem(StateSpaceSystem sys, LyapunovStrategy strategy = LyapunovStrategy::Diagonalized)
      : sys_(std::move(sys)), solver_(sys_.A(), strategy) {
    P_ = controllability_gramian(solver_, sys_.B());
    M_ = sqrtm_psd(sys_.feedthrough_sym());
    c_energy_ = (sys_.C() * P_ * sys_.C().transpose()).trace();
  }

  const StateSpaceSystem& system() const noexcept { return sys_; }
  const LyapunovSolver& solver() const noexcept { return solver_; }
  const Matrix& gramian() const noexcept { return P_; }
  const Matrix& M() const noexcept { return M_; }
  /// tr(C P C^T) = ||G - D||_H2^2, the error of the trivial passivation C_hat = 0.
  double c_energy() const noexcept { return c_energy_; }

  Matrix lyapunov_state(const Matrix& L) const { return solver_.solve_transposed(L * L.transpose()); }

  Matrix c_of_l(const Matrix& L) const {
    check_L(L);
    return sys_.B().transpose() * lyapunov_state(L) + M_ * L.transpose();
  }

  ObjectiveEval evaluate(const Matrix& L) const {
    check_L(L);
    ObjectiveEval ev;
    ev.X = lyapunov_state(L);
    ev.C_hat = sys_.B().transpose() * ev.X + M_ * L.transpose();
    const Matrix E = sys_.C() - ev.C_hat;
    const Matrix PEt = P_ * E.transpose();
    ev.J = std::max(0.0, (E * PEt).trace());
    const Matrix BEP = sys_.B() * PEt.transpose();
    ev.X_grad = solver_.solve(-(BEP + BEP.transpose()));
    ev.grad = 2.0 * ev.X_grad * L - 2.0 * PEt * M_;
    return ev;
  }

  double objective(const Matrix& L) const {
    const Matrix E = sys_.C() - c_of_l(L);
    return std::max(0.0, (E * P_ * E.transpose()).trace());
  }

 private:
  void check_L(const Matrix& L) const {
    if (L.rows() != sys_.n() || L.cols() != sys_.m())
      throw Error(ErrorCode::DimensionMismatch, "L must be n x m");
  }

  StateSpaceSystem sys_;
  LyapunovSolver solver_;
  Matrix P_;
  Matrix M_;
  double c_energy_ = 0.0;
};

/// C_hat(L) = B^T X + M L^T with A^T X + X A + L L^T = 0.
inline Matrix c_of_l(const StateSpaceSystem& sys, const LurePoint& point,
                     LyapunovStrategy strategy = LyapunovStrategy::Diagonalized) {
  if (point.L.rows() != sys.n() || point.L.cols() != sys.m() || point.M.rows() != sys.m() ||
      point.M.cols() != sys.m())
    throw Error(ErrorCode::DimensionMismatch, "LurePoint does not match the system");
  const Matrix X = solve_lyapunov_transposed(sys.A(), point.L * point.L.transpose(), strategy);
  return sys.B().transpose() * X + point.M * point.L.transpose();
}

/// Objective J(L) = tr((C - C_hat) P (C - C_hat)^T) and its gradient
/// 2 X_grad L - 2 P (C - C_hat)^T M. Two Lyapunov solves per call.
inline ObjectiveEval objective_and_gradient(const StateSpaceSystem& sys, const Matrix& P,
                                            const LurePoint& point,
                                            LyapunovStrategy strategy = LyapunovStrategy::Diagonalized) {
  const LyapunovSolver solver(sys.A(), strategy);
  ObjectiveEval ev;
  ev.X = solver.solve_transposed(point.L * point.L.transpose());
  ev.C_hat = sys.B().transpose() * ev.X + point.M * point.L.transpose();
  const Matrix E = sys.C() - ev.C_hat;
  const Matrix PEt = P * E.transpose();
  ev.J = std::max(0.0, (E * PEt).trace());
  const Matrix BEP = sys.B() * PEt.transpose();
  ev.X_grad = solver.solve(-(BEP + BEP.transpose()));
  ev.grad = 2.0 * ev.X_grad * point.L - 2.0 * PEt * point.M;
  return ev;
}

struct MinimizeResult {
  Matrix L_star;
  double J = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  int evaluations = 0;
  LbfgsStatus status = LbfgsStatus::MaxIterations;
  std::vector<LbfgsIterate> trace;

  bool converged() const noexcept {
    return status == LbfgsStatus::GradientTolerance || status == LbfgsStatus::ObjectiveTolerance;
  }
};

inline MinimizeResult lbfgs_minimize(const KlapProblem& problem, const Matrix& L0,
                                     const KlapConfig& config) {
  const Eigen::Index n = problem.system().n(), m = problem.system().m();
  LbfgsOptions opt;
  opt.grad_tol = config.grad_tol;
  opt.obj_rel_tol = config.obj_rel_tol;
  opt.max_iterations = config.max_iterations;
  opt.memory = config.lbfgs_memory;

  auto fg = [&](const Vector& x, Vector& g) {
    const Matrix L = Eigen::Map<const Matrix>(x.data(), n, m);
    const ObjectiveEval ev = problem.evaluate(L);
    g = Eigen::Map<const Vector>(ev.grad.data(), n * m);
    return ev.J;
  };
  const Vector x0 = Eigen::Map<const Vector>(L0.data(), n * m);
  LbfgsResult r = klap::lbfgs_minimize(fg, x0, opt);

  MinimizeResult out;
  out.L_star = Eigen::Map<const Matrix>(r.x.data(), n, m);
  out.J = r.f;
  out.grad_norm = r.grad.norm();
  out.iterations = r.iterations;
  out.evaluations = r.evaluations;
  out.status = r.status;
  out.trace = std::move(r.trace);
  return out;
}

inline MinimizeResult lbfgs_minimize(const StateSpaceSystem& sys, const Matrix& L0,
                                     const KlapConfig& config) {
  return lbfgs_minimize(KlapProblem(sys, config.lyapunov), L0, config);
}

/// Gaussian start scaled by ||C||_F / (sqrt(n m) ||M||_F + 1).
inline Matrix random_initial_L(const KlapProblem& problem, std::uint64_t seed) {
  const auto& sys = problem.system();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double scale =
      sys.C().norm() /
      (std::sqrt(static_cast<double>(sys.n() * sys.m())) * problem.M().norm() + 1.0);
  Matrix L(sys.n(), sys.m());
  for (Eigen::Index j = 0; j < L.cols(); ++j)
    for (Eigen::Index i = 0; i < L.rows(); ++i) L(i, j) = scale * normal(rng);
  return L;
}

enum class InitMethod { Are, AreWiderMargin, Random };

inline std::string to_string(InitMethod m) {
  switch (m) {
    case InitMethod::Are: return "are";
    case InitMethod::AreWiderMargin: return "are_wider_margin";
    case InitMethod::Random: return "random";
  }
  return "unknown";
}

struct InitResult {
  Matrix L0;
  double lambda_min = 0.0;
  double lambda_argmin = 0.0;
  double delta_D = 0.0;
  double margin = 0.0;
  InitMethod method = InitMethod::Are;
};

/// Feedthrough-perturbation start: scan the Popov function for its smallest
/// eigenvalue, shift D by delta_D = -lambda_min/2 + margin so that the shifted
/// system is passive, take X_min of its Riccati equation and convert to L with
/// the shifted M. Non-passive shifted systems get one retry with a 10x margin,
/// then a seeded random start.
inline InitResult initialize(const KlapProblem& problem, const KlapConfig& config) {
  const auto& sys = problem.system();
  const std::vector<double> grid =
      config.popov_grid.empty() ? default_popov_grid(sys, config.popov_points) : config.popov_grid;
  const PopovScan scan = popov_scan(sys, grid, config.threads);

  InitResult init;
  init.lambda_min = scan.global_min;
  init.lambda_argmin = scan.argmin_frequency;
  const double violation = std::abs(std::min(scan.global_min, 0.0));
  init.margin = std::max(config.init_margin_rel * violation,
                         1e-8 * std::max(1.0, sys.feedthrough_sym().norm()));

  const Eigen::Index m = sys.m();
  for (int attempt = 0; attempt < 2; ++attempt) {
    init.delta_D = std::max(init.margin, -0.5 * scan.global_min + init.margin);
    const Matrix D_pert = sys.D() + init.delta_D * Matrix::Identity(m, m);
    try {
      const StateSpaceSystem perturbed = sys.with_feedthrough(D_pert);
      const AreSolution are = solve_are(perturbed, AreKind::Minimal);
      init.L0 = l_from_are(perturbed, are.X).L;
      init.method = attempt == 0 ? InitMethod::Are : InitMethod::AreWiderMargin;
      return init;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoSolution && e.code() != ErrorCode::SingularFeedthrough &&
          e.code() != ErrorCode::NotPSD)
        throw;
      init.margin *= 10.0;
    }
  }
  init.L0 = random_initial_L(problem, config.rng_seed);
  init.method = InitMethod::Random;
  return init;
}

inline InitResult initialize(const StateSpaceSystem& sys, const KlapConfig& config) {
  return initialize(KlapProblem(sys, config.lyapunov), config);
}

enum class RestartKind { NewPoint, Reinitialize, Stop };

inline std::string to_string(RestartKind k) {
  switch (k) {
    case RestartKind::NewPoint: return "new_point";
    case RestartKind::Reinitialize: return "reinitialize";
    case RestartKind::Stop: return "stop";
  }
  return "unknown";
}

struct RestartOutcome {
  RestartKind kind = RestartKind::Stop;
  Matrix L;
  /// Step length that produced NewPoint.
  double step = 0.0;
};

/// Escape from a non-global local minimum: take a small gradient step on the
/// output matrix, C_hat <- C_hat - step * 2 (C_hat - C) P, and, if the result
/// is still passive, convert it back to L through the Riccati equation. One
/// retry with step/10; after that Reinitialize, or Stop when no restarts are
/// left.
inline RestartOutcome restart_step(const KlapProblem& problem, const Matrix& L_star,
                                   const KlapConfig& config, bool restarts_left = true) {
  const auto& sys = problem.system();
  const Matrix C_star = problem.c_of_l(L_star);
  const Matrix grad_C = 2.0 * (C_star - sys.C()) * problem.gramian();
  double step = config.restart_step;
  for (int attempt = 0; attempt < 2; ++attempt, step /= 10.0) {
    const Matrix C_new = C_star - step * grad_C;
    try {
      const StateSpaceSystem candidate = sys.with_output(C_new);
      if (!check_passive(candidate).passive) continue;
      const AreSolution are = solve_are(candidate, AreKind::Minimal);
      return {RestartKind::NewPoint, l_from_are(candidate, are.X).L, step};
    } catch (const Error&) {
      break;
    }
  }
  if (!restarts_left) return {RestartKind::Stop, L_star, 0.0};
  return {RestartKind::Reinitialize, Matrix(), 0.0};
}

inline RestartOutcome restart_step(const StateSpaceSystem& sys, const Matrix& L_star,
                                   const KlapConfig& config, bool restarts_left = true) {
  return restart_step(KlapProblem(sys, config.lyapunov), L_star, config, restarts_left);
}

struct TracePoint {
  int stage = 0;
  int iteration = 0;
  double J = 0.0;
  double grad_norm = 0.0;
};

/// One inner minimization and what the certificate said about its result.
struct StageRecord {
  Matrix L_start;
  Matrix L_star;
  Matrix C_hat;
  double J = 0.0;
  int iterations = 0;
  LbfgsStatus status = LbfgsStatus::MaxIterations;
  GlobalMinCertificate certificate;
  std::optional<RestartKind> restart;
};

struct KlapResult {
  Matrix C_hat;
  Matrix L_final;
  double J_final = 0.0;
  double h2_error = 0.0;
  double J_initial = 0.0;
  int iterations = 0;
  int evaluations = 0;
  int restarts = 0;
  /// Weight t of the pull toward C_hat = 0 applied when roundoff left the
  /// optimum just outside the passive set; C_hat = (1 - t) C_hat(L_final).
  double interior_blend = 0.0;
  GlobalMinCertificate certificate;
  bool converged = false;
  std::string message;
  std::optional<InitResult> init;
  std::vector<StageRecord> stages;
  std::vector<TracePoint> trace;
};

namespace detail {

inline Matrix starting_point(const KlapProblem& problem, const KlapConfig& config,
                             std::optional<InitResult>& init_out) {
  const auto& sys = problem.system();
  switch (config.init) {
    case InitMode::Given:
      if (!config.initial_L || config.initial_L->rows() != sys.n() ||
          config.initial_L->cols() != sys.m())
        throw Error(ErrorCode::DimensionMismatch, "initial L must be n x m");
      return *config.initial_L;
    case InitMode::Random:
      return random_initial_L(problem, config.rng_seed);
    case InitMode::Are:
      init_out = initialize(problem, config);
      return init_out->L0;
  }
  return {};
}

}  // namespace detail

/// H2-optimal passivation by minimizing over the Lur'e factor L, with the
/// local-minimum certificate and restarts. Errors raised before the first
/// minimization propagate; after that the best iterate found so far is
/// returned with converged = false.
namespace detail {

/// Optima sit on the passivity boundary, and with large L the computed C_hat
/// can land a few ulps of ||X|| outside. Phi is affine in C_hat, so with
/// D + D^T > 0 mixing in C_hat = 0 (Phi = D + D^T) moves the result back
/// inside. Returns the weight used, 0 when nothing was needed.
inline double restore_interior(const StateSpaceSystem& sys, Matrix& C_hat) {
  const double r_min = min_eigenvalue(sys.feedthrough_sym());
  if (!(r_min > tol::psd * std::max(1.0, sys.feedthrough_sym().norm()))) return 0.0;
  const Matrix C0 = C_hat;
  double margin = check_passive(sys.with_output(C0)).margin;
  if (margin >= 0.0) return 0.0;
  // Phi_t >= (1 - t) margin + t r_min; aim at a small positive floor.
  const double floor = 1e-12 * r_min;
  double t = (floor - margin) / (r_min - margin);
  for (int k = 0; k < 20 && t < 1.0; ++k, t = std::min(1.0, 2.0 * t)) {
    C_hat = (1.0 - t) * C0;
    if (check_passive(sys.with_output(C_hat)).margin >= 0.0) return t;
  }
  C_hat.setZero();
  return 1.0;
}

}  // namespace detail

inline KlapResult klap(const KlapProblem& problem, const KlapConfig& config = {}) {
  const auto& sys = problem.system();
  const double eps = config.restart_axis_tol_rel * sys.A().norm();
  // J at or below this is zero up to rounding; nothing left to improve.
  const double zero_J = 1e-14 * std::max(problem.c_energy(), 1e-300);

  KlapResult res;
  Matrix L = detail::starting_point(problem, config, res.init);
  res.J_initial = problem.objective(L);
  bool used_are_start = config.init == InitMode::Are;
  std::optional<Matrix> best_L;
  double best_J = std::numeric_limits<double>::infinity();
  bool last_converged = false;

  try {
    for (int stage = 0;; ++stage) {
      MinimizeResult mr = lbfgs_minimize(problem, L, config);
      auto record = [&](const MinimizeResult& r) {
        const int offset = res.trace.empty() || res.trace.back().stage != stage
                               ? 0
                               : res.trace.back().iteration;
        for (std::size_t k = offset == 0 ? 0 : 1; k < r.trace.size(); ++k)
          res.trace.push_back(
              {stage, offset + static_cast<int>(k), r.trace[k].f, r.trace[k].grad_norm});
        res.iterations += r.iterations;
        res.evaluations += r.evaluations;
      };
      record(mr);
      int stage_iterations = mr.iterations;
      GlobalMinCertificate cert = global_min_certificate(sys, problem.M(), mr.L_star, eps);

      // The relative-objective stop leaves L accurate only to roughly the
      // square root of the tolerance, which is too coarse to tell whether
      // Y* has its spectrum on the imaginary axis. Before spending a restart,
      // continue on the gradient criterion alone.
      // A polish that ends on the line search has hit the precision floor; the
      // stage already met its stopping rule, so it stays converged.
      const bool stage_converged = mr.converged();
      if (!cert.is_global_candidate && mr.status == LbfgsStatus::ObjectiveTolerance) {
        KlapConfig polish = config;
        polish.obj_rel_tol = 1e-14;  // only a stalled objective stops it
        MinimizeResult refined = lbfgs_minimize(problem, mr.L_star, polish);
        record(refined);
        stage_iterations += refined.iterations;
        if (refined.J <= mr.J) {
          mr = std::move(refined);
          cert = global_min_certificate(sys, problem.M(), mr.L_star, eps);
        }
      }
      last_converged = stage_converged || mr.converged();

      StageRecord rec;
      rec.L_start = L;
      rec.L_star = mr.L_star;
      rec.C_hat = problem.c_of_l(mr.L_star);
      rec.J = mr.J;
      rec.iterations = stage_iterations;
      rec.status = mr.status;
      rec.certificate = cert;
      if (mr.J < best_J) {
        best_J = mr.J;
        best_L = mr.L_star;
      }
      res.stages.push_back(rec);

      const bool on_boundary = rec.certificate.vacuous || rec.certificate.max_real <= eps;
      if (on_boundary || mr.J <= zero_J) break;
      if (res.restarts >= config.max_restarts) {
        res.stages.back().restart = RestartKind::Stop;
        break;
      }
      RestartOutcome step =
          restart_step(problem, mr.L_star, config, res.restarts < config.max_restarts);
      res.stages.back().restart = step.kind;
      if (step.kind == RestartKind::Stop) break;
      ++res.restarts;
      if (step.kind == RestartKind::NewPoint) {
        L = step.L;
      } else if (!used_are_start) {
        InitResult init = initialize(problem, config);
        L = init.L0;
        used_are_start = true;
        if (!res.init) res.init = std::move(init);
      } else {
        L = random_initial_L(problem, config.rng_seed + static_cast<std::uint64_t>(res.restarts));
      }
    }
    // The final certificate is evaluated at the best stage, not necessarily the last.
    res.message = last_converged ? "converged" : "inner minimization did not converge";
  } catch (const std::exception& e) {
    last_converged = false;
    res.message = e.what();
  }

  if (!best_L) best_L = L;
  res.L_final = *best_L;
  const ObjectiveEval ev = problem.evaluate(res.L_final);
  res.C_hat = ev.C_hat;
  res.J_final = ev.J;
  res.interior_blend = detail::restore_interior(sys, res.C_hat);
  if (res.interior_blend > 0.0) {
    const Matrix E = sys.C() - res.C_hat;
    res.J_final = std::max(0.0, (E * problem.gramian() * E.transpose()).trace());
  }
  res.h2_error = std::sqrt(res.J_final);
  res.certificate = global_min_certificate(sys, problem.M(), res.L_final, eps);
  res.converged = last_converged;
  return res;
}

inline KlapResult klap(const StateSpaceSystem& sys, const KlapConfig& config = {}) {
  return klap(KlapProblem(sys, config.lyapunov), config);
}

}  // namespace klap
