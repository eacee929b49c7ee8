#pragma once

#include <cmath>
#include <deque>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace klap {

struct LbfgsOptions {
  /// Stop when ||grad|| <= grad_tol.
  double grad_tol = 1e-8;
  /// Stop when |f_k - f_{k-1}| <= obj_rel_tol * (|f_k| + obj_rel_tol); 0 disables.
  double obj_rel_tol = 1e-6;
  int max_iterations = 50000;
  int memory = 10;
  /// Sufficient-decrease constant of the Armijo condition.
  double armijo = 1e-4;
  int max_backtracks = 60;
};

enum class LbfgsStatus { GradientTolerance, ObjectiveTolerance, MaxIterations, LineSearchFailure };

inline std::string to_string(LbfgsStatus s) {
  switch (s) {
    case LbfgsStatus::GradientTolerance: return "gradient_tolerance";
    case LbfgsStatus::ObjectiveTolerance: return "objective_tolerance";
    case LbfgsStatus::MaxIterations: return "max_iterations";
    case LbfgsStatus::LineSearchFailure: return "line_search_failure";
  }
  return "unknown";
}

struct LbfgsIterate {
  double f = 0.0;
  double grad_norm = 0.0;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  Eigen::VectorXd grad;
  double f = 0.0;
  int iterations = 0;
  int evaluations = 0;
  LbfgsStatus status = LbfgsStatus::MaxIterations;
  /// Entry 0 is the starting point, entry k the k-th accepted iterate.
  std::vector<LbfgsIterate> trace;

  bool converged() const noexcept {
    return status == LbfgsStatus::GradientTolerance || status == LbfgsStatus::ObjectiveTolerance;
  }
};

/// Limited-memory BFGS with the two-loop recursion and an Armijo
/// backtracking line search. `fg(x, g)` returns f(x) and writes the gradient
/// into g. Accepted steps never increase f.
template <class Objective>
LbfgsResult lbfgs_minimize(Objective&& fg, Eigen::VectorXd x0, const LbfgsOptions& opt = {}) {
  using Vec = Eigen::VectorXd;
  LbfgsResult out;
  out.x = std::move(x0);
  out.grad.resize(out.x.size());
  out.f = fg(out.x, out.grad);
  out.evaluations = 1;
  out.trace.push_back({out.f, out.grad.norm()});

  if (!std::isfinite(out.f)) {
    out.status = LbfgsStatus::LineSearchFailure;
    return out;
  }
  if (out.grad.norm() <= opt.grad_tol) {
    out.status = LbfgsStatus::GradientTolerance;
    return out;
  }

  struct Pair {
    Vec s, y;
    double rho;
  };
  std::deque<Pair> history;
  std::vector<double> alpha(static_cast<std::size_t>(std::max(opt.memory, 1)));

  Vec x_new(out.x.size()), g_new(out.x.size());
  for (int k = 0; k < opt.max_iterations; ++k) {
    // two-loop recursion: d = -H g
    Vec q = out.grad;
    for (std::size_t i = history.size(); i-- > 0;) {
      alpha[i] = history[i].rho * history[i].s.dot(q);
      q -= alpha[i] * history[i].y;
    }
    double gamma = 1.0;
    if (!history.empty()) {
      const auto& last = history.back();
      gamma = last.s.dot(last.y) / last.y.squaredNorm();
    }
    Vec d = gamma * q;
    for (std::size_t i = 0; i < history.size(); ++i) {
      const double beta = history[i].rho * history[i].y.dot(d);
      d += (alpha[i] - beta) * history[i].s;
    }
    d = -d;

    double slope = out.grad.dot(d);
    if (!(slope < 0.0)) {
      history.clear();
      d = -out.grad;
      slope = -out.grad.squaredNorm();
    }

    double step = history.empty() ? std::min(1.0, 1.0 / out.grad.norm()) : 1.0;
    bool accepted = false;
    double f_new = 0.0;
    for (int bt = 0; bt < opt.max_backtracks; ++bt) {
      x_new = out.x + step * d;
      f_new = fg(x_new, g_new);
      ++out.evaluations;
      if (std::isfinite(f_new) && f_new <= out.f + opt.armijo * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      out.status = LbfgsStatus::LineSearchFailure;
      return out;
    }

    Vec s = x_new - out.x;
    if (s.squaredNorm() == 0.0) {  // backtracked below the resolution of x
      out.status = LbfgsStatus::LineSearchFailure;
      return out;
    }
    Vec y = g_new - out.grad;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (static_cast<int>(history.size()) == opt.memory) history.pop_front();
      history.push_back({std::move(s), std::move(y), 1.0 / sy});
    }

    const double f_old = out.f;
    out.x = x_new;
    out.grad = g_new;
    out.f = f_new;
    out.iterations = k + 1;
    out.trace.push_back({out.f, out.grad.norm()});

    if (out.grad.norm() <= opt.grad_tol) {
      out.status = LbfgsStatus::GradientTolerance;
      return out;
    }
    if (opt.obj_rel_tol > 0.0 &&
        std::abs(out.f - f_old) <= opt.obj_rel_tol * (std::abs(out.f) + opt.obj_rel_tol)) {
      out.status = LbfgsStatus::ObjectiveTolerance;
      return out;
    }
  }
  out.status = LbfgsStatus::MaxIterations;
  return out;
}

}  // namespace klap
