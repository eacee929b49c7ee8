// Acceptance suite: one PASS/FAIL line per criterion, details indented below.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "helpers.hpp"
#include "klap/model_io.hpp"

using namespace klap;
using klap::testing::random_hurwitz;
using klap::testing::random_matrix;
using klap::testing::random_system;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

class Criterion {
 public:
  explicit Criterion(std::string name) : name_(std::move(name)) {}

  void check(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
    details_.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
  }

  bool report(double secs) const {
    std::printf("%s  criterion %s (%.3f s)\n", failures_.empty() ? "PASS" : "FAIL", name_.c_str(), secs);
    for (const auto& d : details_) std::printf("        %s\n", d.c_str());
    std::fflush(stdout);
    return failures_.empty();
  }

 private:
  std::string name_;
  std::vector<std::string> details_;
  std::vector<std::string> failures_;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

bool near(double x, double target, double tol) { return std::abs(x - target) <= tol; }

Matrix col(double a, double b) {
  Matrix L(2, 1);
  L << a, b;
  return L;
}

bool criterion_1() {
  Criterion c("1: toy M = 0, 10 random starts reach J = 0.94, C_hat = [0.46, 0.80]");
  const auto t0 = Clock::now();
  const auto toy = bench::toy_system(0.0);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    KlapConfig config;
    config.init = InitMode::Random;
    config.rng_seed = seed;
    const KlapResult r = klap::klap(toy, config);
    c.check(r.converged && near(r.J_final, 0.94, 0.01) && near(r.C_hat(0, 0), 0.46, 0.01) &&
                near(r.C_hat(0, 1), 0.80, 0.01),
            "seed " + std::to_string(seed) +
                fmt(": J = %.6f, C_hat = [%.4f, %.4f]", r.J_final, r.C_hat(0, 0), r.C_hat(0, 1)));
  }
  const double secs = seconds_since(t0);
  c.check(secs < 1.0, fmt("runtime %.3f s < 1 s", secs));
  return c.report(secs);
}

bool criterion_2() {
  Criterion c("2: toy D = 1/8 from L0 = [-2, 0], local minimum detected and escaped");
  const auto t0 = Clock::now();
  KlapConfig config;
  config.init = InitMode::Given;
  config.initial_L = col(-2.0, 0.0);
  const KlapResult r = klap::klap(bench::toy_system(0.125), config);
  const double secs = seconds_since(t0);

  if (r.stages.size() < 2) {
    c.check(false, "expected at least two stages, got " + std::to_string(r.stages.size()));
    return c.report(secs);
  }
  const StageRecord& local = r.stages.front();
  c.check(near(local.C_hat(0, 0), 0.0, 0.01) && near(local.C_hat(0, 1), 1.0, 0.01),
          fmt("local C_hat = [%.4f, %.4f]", local.C_hat(0, 0), local.C_hat(0, 1)));
  const CVector ev = eigenvalues(local.certificate.Y_star);
  bool pm3 = ev.size() == 2;
  for (const auto& l : ev) pm3 = pm3 && near(std::abs(l.real()), 3.0, 0.01) && near(l.imag(), 0.0, 0.01);
  pm3 = pm3 && ev(0).real() * ev(1).real() < 0.0;
  c.check(pm3, fmt("eig(Y*) = %.4f, %.4f", ev(0).real(), ev(1).real()));
  c.check(!local.certificate.is_global_candidate, "local minimum flagged non-global");
  c.check(near(r.C_hat(0, 0), 0.84, 0.01) && near(r.C_hat(0, 1), 0.34, 0.01),
          fmt("final C_hat = [%.4f, %.4f]", r.C_hat(0, 0), r.C_hat(0, 1)));
  c.check(r.certificate.max_abs_real <= 2e-2,
          fmt("final max |Re lambda(Y*)| = %.3e <= 2e-2", r.certificate.max_abs_real));
  c.check(r.restarts >= 1, "restarts = " + std::to_string(r.restarts));
  c.check(secs < 1.0, fmt("runtime %.3f s < 1 s", secs));
  return c.report(secs);
}

bool criterion_3() {
  Criterion c("3: ACC benchmark errors 0.871 (D = 1/8) and 1.03 (D = 0); random starts recover");
  const auto t0 = Clock::now();
  const auto acc = bench::acc_system(0.125);
  const KlapResult r = klap::klap(acc);
  c.check(r.converged && near(r.h2_error, 0.871, 0.005),
          fmt("D = 1/8: h2_error = %.5f (iterations %.0f)", r.h2_error, r.iterations));
  const KlapResult r0 = klap::klap(bench::acc_system(0.0));
  c.check(r0.converged && near(r0.h2_error, 1.03, 0.01),
          fmt("D = 0: h2_error = %.5f (iterations %.0f)", r0.h2_error, r0.iterations));
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    KlapConfig config;
    config.init = InitMode::Random;
    config.rng_seed = seed;
    const KlapResult rs = klap::klap(acc, config);
    const double first = std::sqrt(rs.stages.front().J);
    c.check(rs.h2_error <= 0.875, "seed " + std::to_string(seed) +
                                      fmt(": h2_error = %.5f (first stage %.5f, restarts %.0f)",
                                          rs.h2_error, first, rs.restarts));
  }
  const double secs = seconds_since(t0);
  c.check(secs < 5.0, fmt("runtime %.3f s < 5 s", secs));
  return c.report(secs);
}

bool criterion_4() {
  Criterion c("4: initialization on ACC D = 1/8 gives Delta_D = 1.14, initial error 1.25");
  const auto t0 = Clock::now();
  const KlapProblem problem(bench::acc_system(0.125));
  const InitResult init = initialize(problem, KlapConfig{});
  const double e0 = std::sqrt(problem.objective(init.L0));
  c.check(near(init.delta_D, 1.14, 0.05), fmt("Delta_D = %.4f (lambda_min = %.4f at omega = %.4f)",
                                              init.delta_D, init.lambda_min, init.lambda_argmin));
  c.check(near(e0, 1.25, 0.05), fmt("initial h2_error = %.4f", e0));
  return c.report(seconds_since(t0));
}

bool criterion_5() {
  Criterion c("5: property suite (gradient, feasibility, Lyapunov, invariance, ARE, H2 quadrature)");
  const auto t0 = Clock::now();
  std::mt19937_64 rng(5);

  // a. gradient vs central differences
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const Eigen::Index n = 2 + k % 7, m = 1 + k % 3 % n;
    const KlapProblem problem(random_system(rng, n, m, k % 2 == 1));
    const Matrix L = random_matrix(rng, n, m);
    const Matrix g = problem.evaluate(L).grad;
    const double h = 1e-6 * (1.0 + L.norm());
    Matrix fd(n, m);
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index i = 0; i < n; ++i) {
        Matrix Lp = L, Lm = L;
        Lp(i, j) += h;
        Lm(i, j) -= h;
        fd(i, j) = (problem.objective(Lp) - problem.objective(Lm)) / (2.0 * h);
      }
    worst = std::max(worst, (fd - g).norm() / g.norm());
  }
  c.check(worst <= 1e-5, fmt("a. gradient vs finite differences, worst relative error %.2e <= 1e-5", worst));

  // b. every L gives a passive system
  int passive = 0;
  double worst_margin = 0.0;
  for (int k = 0; k < 100; ++k) {
    const Eigen::Index n = 2 + k % 6, m = 1 + k % 3 % n;
    const auto base = random_system(rng, n, m, k % 2 == 0);
    const double scale_L = std::pow(10.0, (k % 5) - 2);
    const auto sys = base.with_output(KlapProblem(base).c_of_l(scale_L * random_matrix(rng, n, m)));
    const PopovScan scan = popov_scan(sys, default_popov_grid(sys));
    const double scale = std::max({1.0, sys.feedthrough_sym().norm(), popov_eval(sys, 0.0).norm()});
    worst_margin = std::min(worst_margin, scan.global_min / scale);
    passive += check_passive(sys).passive && scan.global_min >= -1e-8 * scale;
  }
  c.check(passive == 100, fmt("b. %.0f/100 random L passive (worst scaled Popov margin %.2e)",
                              passive, worst_margin));

  // c. Lyapunov solvers vs Kronecker oracle, trace identity
  double worst_lyap = 0.0, worst_trace = 0.0;
  for (int k = 0; k < 50; ++k) {
    const Eigen::Index n = 1 + (k * 7) % 30;
    const Matrix A = random_hurwitz(rng, n);
    const Matrix G = random_matrix(rng, n, n);
    const Matrix W = G + G.transpose();
    const Matrix oracle = kron_lyapunov_oracle(A, W);
    for (auto s : {LyapunovStrategy::Diagonalized, LyapunovStrategy::Dense})
      worst_lyap = std::max(worst_lyap, klap::testing::rel_err(solve_lyapunov(A, W, s), oracle));
    if (n <= 20) {
      LyapunovSolver solver(A);
      const Matrix Dm = random_matrix(rng, n, n), F = random_matrix(rng, n, n);
      const Matrix Y = solver.solve(Dm), Z = solver.solve_transposed(F);
      const double scale = std::max(1.0, Dm.norm() * Z.norm() + F.norm() * Y.norm());
      worst_trace = std::max(worst_trace,
                             std::abs((Dm.transpose() * Z).trace() - (F.transpose() * Y).trace()) / scale);
    }
  }
  c.check(worst_lyap <= 1e-9, fmt("c. Lyapunov vs oracle, worst relative error %.2e <= 1e-9", worst_lyap));
  c.check(worst_trace <= 1e-10, fmt("c. trace identity, worst scaled gap %.2e <= 1e-10", worst_trace));

  // d. orthogonal and sign invariance with M = 0
  double worst_inv = 0.0;
  for (int k = 0; k < 20; ++k) {
    const Eigen::Index n = 3 + k % 5, m = 1 + k % 3;
    const KlapProblem problem(random_system(rng, n, m, false));
    const Matrix L = random_matrix(rng, n, m);
    Eigen::HouseholderQR<Matrix> qr(random_matrix(rng, m, m));
    const Matrix U = qr.householderQ() * Matrix::Identity(m, m);
    const Matrix C = problem.c_of_l(L);
    worst_inv = std::max({worst_inv, (C - problem.c_of_l(L * U)).norm() / C.norm(),
                          (C - problem.c_of_l(-L)).norm() / C.norm()});
  }
  c.check(worst_inv <= 1e-10, fmt("d. orthogonal/sign invariance, worst relative change %.2e", worst_inv));

  // e. ARE closed form and extremal ordering
  const Matrix one = Matrix::Ones(1, 1);
  const StateSpaceSystem scalar(-one, one, one, one);
  const double x_min = solve_are(scalar).X(0, 0);
  c.check(near(x_min, 3.0 - 2.0 * std::sqrt(2.0), 1e-10), fmt("e. scalar X_min = %.12f", x_min));
  double worst_order = 0.0;
  for (int k = 0; k < 10; ++k) {
    const auto base = random_system(rng, 3 + k % 4, 1 + k % 2, true);
    const auto sys = base.with_output(KlapProblem(base).c_of_l(random_matrix(rng, base.n(), base.m())));
    const Matrix lo = solve_are(sys, AreKind::Minimal).X, hi = solve_are(sys, AreKind::Maximal).X;
    worst_order = std::min(worst_order, min_eigenvalue(hi - lo) / std::max(1.0, hi.norm()));
  }
  c.check(worst_order >= -1e-8, fmt("e. X_min <= X_max on 10 passive systems (worst %.2e)", worst_order));

  // f. H2 error vs frequency quadrature
  double worst_h2 = 0.0;
  for (int k = 0; k < 10; ++k) {
    const auto sys = random_system(rng, 2 + k % 5, 1 + k % 2, k % 2 == 0);
    const Matrix C_hat = random_matrix(rng, sys.m(), sys.n());
    const double exact = h2_error_sq(sys, C_hat);
    worst_h2 = std::max(worst_h2, std::abs(klap::testing::h2_quadrature(sys, C_hat) - exact) / exact);
  }
  c.check(worst_h2 <= 1e-3, fmt("f. H2 vs quadrature, worst relative error %.2e <= 1e-3", worst_h2));

  return c.report(seconds_since(t0));
}

bool criterion_6() {
  Criterion c("6: CLI round trip is bit-exact; passivate output always passes check (50 runs)");
  const auto t0 = Clock::now();
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "klap_acceptance";
  fs::create_directories(dir);
  std::mt19937_64 rng(6);

  int exact = 0;
  for (int k = 0; k < 50; ++k) {
    const auto sys = random_system(rng, 2 + k % 7, 1 + k % 3 % 2, k % 2 == 0);
    const std::string p = (dir / ("rt" + std::to_string(k) + ".json")).string();
    write_model(p, sys);
    const StateSpaceSystem back = load_model(p).system;
    exact += back.A() == sys.A() && back.B() == sys.B() && back.C() == sys.C() && back.D() == sys.D();
  }
  c.check(exact == 50, fmt("round trip bit-exact on %.0f/50 random models", exact));

  int ok = 0;
  std::vector<std::string> bad;
  for (int k = 0; k < 50; ++k) {
    const Eigen::Index n = 2 + k % 7, m = 1 + k % 3 % 2;
    const auto sys = random_system(rng, n, m, k % 2 == 0);
    const std::string in = (dir / ("in" + std::to_string(k) + ".json")).string();
    const std::string out = (dir / ("out" + std::to_string(k) + ".json")).string();
    write_model(in, sys);
    std::ostringstream so, se;
    const std::string seed = std::to_string(k);
    const int rc_pass = cli::run({"klap", "passivate", in, "--out", out, "--seed", seed}, so, se);
    const int rc_check = cli::run({"klap", "check", out}, so, se);
    if (rc_pass == 0 && rc_check == 0) {
      ++ok;
    } else {
      bad.push_back("run " + std::to_string(k) + ": passivate " + std::to_string(rc_pass) +
                    ", check " + std::to_string(rc_check) + " " + se.str());
    }
  }
  c.check(ok == 50, fmt("passivate -> check exit 0 on %.0f/50 random models", ok));
  for (const auto& b : bad) c.check(false, b);
  fs::remove_all(dir);
  return c.report(seconds_since(t0));
}

}  // namespace

int main() {
  int failed = 0;
  for (auto* crit : {criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6}) {
    try {
      failed += !crit();
    } catch (const std::exception& e) {
      std::printf("FAIL  criterion raised: %s\n", e.what());
      ++failed;
    }
  }
  std::printf("%d of 6 criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
