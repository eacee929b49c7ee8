#include "cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "klap/benchmarks.hpp"
#include "klap/model_io.hpp"

namespace klap::cli {
namespace {

using ordered_json = nlohmann::ordered_json;

std::shared_ptr<spdlog::logger> logger() {
  static std::shared_ptr<spdlog::logger> log = [] {
    auto l = spdlog::stderr_color_mt("klap");
    l->set_pattern("[%l] %v");
    l->set_level(spdlog::level::warn);
    if (const char* env = std::getenv("KLAP_LOG")) l->set_level(spdlog::level::from_str(env));
    return l;
  }();
  return log;
}

std::string fmt_num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

std::vector<double> flatten(const Matrix& M) {
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(M.size()));
  for (Eigen::Index i = 0; i < M.rows(); ++i)
    for (Eigen::Index j = 0; j < M.cols(); ++j) v.push_back(M(i, j));
  return v;
}

std::vector<double> make_grid(const StateSpaceSystem& sys, const GridOptions& g) {
  if (g.wmin.has_value() != g.wmax.has_value())
    throw Error(ErrorCode::InvalidArgument, "--wmin and --wmax must be given together");
  if (!g.wmin) return default_popov_grid(sys, g.points);
  if (!(*g.wmin > 0.0) || !(*g.wmin < *g.wmax))
    throw Error(ErrorCode::InvalidArgument, "need 0 < wmin < wmax");
  return log_grid(*g.wmin, *g.wmax, g.points);
}

/// CSV with header row, LF line endings, '.' decimal separator.
void write_popov_csv(std::ostream& os, const StateSpaceSystem& sys, const PopovScan& scan,
                     bool all_eigenvalues) {
  os << "omega,lambda_min";
  if (all_eigenvalues)
    for (Eigen::Index k = 0; k < sys.m(); ++k) os << ",lambda_" << k + 1;
  os << '\n';
  for (std::size_t k = 0; k < scan.frequencies.size(); ++k) {
    os << detail::format_double(scan.frequencies[k]) << ','
       << detail::format_double(scan.min_eigenvalues[k]);
    if (all_eigenvalues) {
      const Vector ev = popov_eigenvalues(sys, scan.frequencies[k]);
      for (Eigen::Index i = 0; i < ev.size(); ++i) os << ',' << detail::format_double(ev(i));
    }
    os << '\n';
  }
}

template <class Fn>
void with_output_stream(const std::string& path, std::ostream& fallback, Fn&& fn) {
  if (path.empty() || path == "-") {
    fn(fallback);
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::InvalidArgument, "cannot write '" + path + "'");
  fn(f);
  if (!f) throw Error(ErrorCode::InvalidArgument, "write to '" + path + "' failed");
}

void write_trace_csv(const std::string& path, const KlapResult& r, std::ostream& fallback) {
  with_output_stream(path, fallback, [&](std::ostream& os) {
    os << "stage,iteration,J,grad_norm\n";
    for (const auto& t : r.trace)
      os << t.stage << ',' << t.iteration << ',' << detail::format_double(t.J) << ','
         << detail::format_double(t.grad_norm) << '\n';
  });
}

LoadedModel load_logged(const std::string& path) {
  LoadedModel m = load_model(path);
  for (const auto& w : m.warnings) logger()->warn("{}: {}", path, w);
  logger()->info("loaded {} (n = {}, m = {})", path, m.system.n(), m.system.m());
  return m;
}

struct RunSummary {
  KlapResult result;
  PassivityVerdict before;
  PassivityVerdict after;
  double seconds = 0.0;
  StateSpaceSystem output;
};

RunSummary run_klap(const StateSpaceSystem& sys, const KlapConfig& config) {
  const PassivityVerdict before = check_passive(sys);
  const auto t0 = std::chrono::steady_clock::now();
  KlapResult r = klap(sys, config);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  StateSpaceSystem out = sys.with_output(r.C_hat);
  const PassivityVerdict after = check_passive(out);
  logger()->info("klap: J = {}, iterations = {}, restarts = {}, {:.3f} s", r.J_final, r.iterations,
                 r.restarts, secs);
  return {std::move(r), before, after, secs, std::move(out)};
}

ordered_json config_json(const KlapConfig& c, const std::string& init) {
  ordered_json j;
  j["grad_tol"] = c.grad_tol;
  j["obj_rel_tol"] = c.obj_rel_tol;
  j["restart_step"] = c.restart_step;
  j["certificate_eps_rel"] = c.restart_axis_tol_rel;
  j["init_margin_rel"] = c.init_margin_rel;
  j["max_iterations"] = c.max_iterations;
  j["max_restarts"] = c.max_restarts;
  j["lbfgs_memory"] = c.lbfgs_memory;
  j["popov_points"] = c.popov_points;
  j["seed"] = c.rng_seed;
  j["init"] = init;
  j["threads"] = c.threads;
  return j;
}

ordered_json report_json(const std::string& input, const std::string& output,
                         const KlapConfig& config, const std::string& init, const RunSummary& s) {
  const KlapResult& r = s.result;
  ordered_json j;
  j["input"] = input;
  j["output"] = output;
  j["config"] = config_json(config, init);
  j["converged"] = r.converged;
  j["message"] = r.message;
  j["h2_error"] = r.h2_error;
  j["h2_error_sq"] = r.J_final;
  j["initial_h2_error"] = std::sqrt(r.J_initial);
  j["iterations"] = r.iterations;
  j["evaluations"] = r.evaluations;
  j["restarts"] = r.restarts;
  j["interior_blend"] = r.interior_blend;
  j["wall_time_s"] = s.seconds;
  j["time_per_iteration_s"] = r.iterations > 0 ? s.seconds / r.iterations : 0.0;
  j["popov_margin_before"] = s.before.margin;
  j["popov_margin_after"] = s.after.margin;
  j["passive_before"] = s.before.passive;
  j["passive_after"] = s.after.passive;
  j["certificate"] = {{"max_abs_real", r.certificate.max_abs_real},
                      {"max_real", r.certificate.max_real},
                      {"is_global_candidate", r.certificate.is_global_candidate},
                      {"vacuous", r.certificate.vacuous}};
  if (r.init) {
    j["initialization"] = {{"method", to_string(r.init->method)},
                           {"lambda_min", r.init->lambda_min},
                           {"lambda_argmin", r.init->lambda_argmin},
                           {"delta_D", r.init->delta_D},
                           {"margin", r.init->margin}};
  }
  j["C_hat"] = flatten(r.C_hat);
  j["L_final"] = flatten(r.L_final);
  ordered_json stages = ordered_json::array();
  for (const auto& st : r.stages) {
    ordered_json e;
    e["J"] = st.J;
    e["iterations"] = st.iterations;
    e["status"] = to_string(st.status);
    e["max_abs_real"] = st.certificate.max_abs_real;
    e["is_global_candidate"] = st.certificate.is_global_candidate;
    e["restart"] = st.restart ? to_string(*st.restart) : std::string("none");
    stages.push_back(std::move(e));
  }
  j["stages"] = std::move(stages);
  return j;
}

int report_error(std::ostream& err, const std::exception& e) {
  err << "error: " << e.what() << '\n';
  return kError;
}

}  // namespace

void apply_init(const std::string& spec, Eigen::Index n, Eigen::Index m, KlapConfig& config) {
  if (spec.empty() || spec == "are") {
    config.init = InitMode::Are;
    return;
  }
  if (spec == "random") {
    config.init = InitMode::Random;
    return;
  }
  std::vector<double> values;
  std::stringstream ss(spec);
  for (std::string tok; std::getline(ss, tok, ',');) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(tok, &used));
      if (tok.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "--init: bad number '" + tok + "'");
    }
  }
  if (static_cast<Eigen::Index>(values.size()) != n * m)
    throw Error(ErrorCode::InvalidArgument, "--init: expected " + std::to_string(n * m) +
                                                " entries for L0, got " +
                                                std::to_string(values.size()));
  Matrix L(n, m);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j) L(i, j) = values[static_cast<std::size_t>(i * m + j)];
  config.init = InitMode::Given;
  config.initial_L = std::move(L);
}

double h2_distance_sq(const StateSpaceSystem& a, const StateSpaceSystem& b) {
  if (a.m() != b.m())
    throw Error(ErrorCode::DimensionMismatch, "models have different input/output counts");
  if ((a.D() - b.D()).norm() > 1e-10 * std::max(1.0, a.D().norm()))
    throw Error(ErrorCode::DimensionMismatch, "feedthroughs differ; the H2 distance is infinite");
  const Eigen::Index n1 = a.n(), n2 = b.n(), m = a.m();
  Matrix A = Matrix::Zero(n1 + n2, n1 + n2);
  A.topLeftCorner(n1, n1) = a.A();
  A.bottomRightCorner(n2, n2) = b.A();
  Matrix B(n1 + n2, m);
  B << a.B(), b.B();
  Matrix C(m, n1 + n2);
  C << a.C(), -b.C();
  const Matrix P = solve_lyapunov(A, B * B.transpose(), LyapunovStrategy::Dense);
  return std::max(0.0, (C * P * C.transpose()).trace());
}

int cmd_check(const CheckOptions& opt, std::ostream& out, std::ostream& err) {
  try {
    const LoadedModel model = load_logged(opt.model);
    const PassivityVerdict v = check_passive(model.system, opt.tol);
    out << (v.passive ? "passive" : "not passive") << '\n'
        << "margin: " << fmt_num(v.margin) << '\n'
        << "argmin_frequency: " << fmt_num(v.argmin_frequency) << '\n'
        << "method: " << to_string(v.method) << '\n';
    if (!v.crossings.empty()) {
      out << "crossings:";
      for (double w : v.crossings) out << ' ' << fmt_num(w);
      out << '\n';
    }
    if (!opt.popov_csv.empty()) {
      const PopovScan scan = popov_scan(model.system, make_grid(model.system, opt.grid), opt.threads);
      with_output_stream(opt.popov_csv, out,
                         [&](std::ostream& os) { write_popov_csv(os, model.system, scan, false); });
    }
    return v.passive ? kSuccess : kNotPassive;
  } catch (const std::exception& e) {
    return report_error(err, e);
  }
}

int cmd_passivate(const PassivateOptions& opt, std::ostream& out, std::ostream& err) {
  try {
    if (opt.out.empty()) throw Error(ErrorCode::InvalidArgument, "--out is required");
    const LoadedModel model = load_logged(opt.model);
    StateSpaceSystem sys = model.system;
    if (opt.feedthrough)
      sys = sys.with_feedthrough(*opt.feedthrough * Matrix::Identity(sys.m(), sys.m()));
    KlapConfig config = opt.config;
    apply_init(opt.init, sys.n(), sys.m(), config);

    const RunSummary s = run_klap(sys, config);
    auto metadata = model.metadata;
    metadata["source"] = opt.model;
    write_model(opt.out, s.output, model.name, metadata);
    const std::string report_path = opt.report.empty() ? opt.out + ".report.json" : opt.report;
    with_output_stream(report_path, out, [&](std::ostream& os) {
      os << report_json(opt.model, opt.out, config, opt.init, s).dump(2) << '\n';
    });
    if (!opt.trace.empty()) write_trace_csv(opt.trace, s.result, out);

    out << "h2_error: " << fmt_num(s.result.h2_error) << '\n'
        << "iterations: " << s.result.iterations << '\n'
        << "restarts: " << s.result.restarts << '\n'
        << "global_candidate: " << (s.result.certificate.is_global_candidate ? "yes" : "no") << '\n'
        << "popov_margin_after: " << fmt_num(s.after.margin) << '\n';
    if (!s.result.converged) {
      err << "error: " << s.result.message << " (partial result written)\n";
      return kError;
    }
    if (!s.after.passive) {
      err << "error: passivated model failed the passivity check (margin "
          << fmt_num(s.after.margin) << ")\n";
      return kError;
    }
    return kSuccess;
  } catch (const std::exception& e) {
    return report_error(err, e);
  }
}

int cmd_popov(const PopovOptions& opt, std::ostream& out, std::ostream& err) {
  try {
    const LoadedModel model = load_logged(opt.model);
    StateSpaceSystem sys = model.system;
    double shift = opt.shift;
    if (opt.shift_init) {
      KlapConfig config;
      config.threads = opt.threads;
      shift += initialize(sys, config).delta_D;
    }
    if (shift != 0.0) sys = sys.with_feedthrough(sys.D() + shift * Matrix::Identity(sys.m(), sys.m()));
    const PopovScan scan = popov_scan(sys, make_grid(sys, opt.grid), opt.threads);
    with_output_stream(opt.out, out,
                       [&](std::ostream& os) { write_popov_csv(os, sys, scan, opt.all_eigenvalues); });
    logger()->info("popov: min {} at omega = {}", scan.global_min, scan.argmin_frequency);
    return kSuccess;
  } catch (const std::exception& e) {
    return report_error(err, e);
  }
}

int cmd_h2(const H2Options& opt, std::ostream& out, std::ostream& err) {
  try {
    const StateSpaceSystem a = load_logged(opt.model_a).system;
    const StateSpaceSystem b = load_logged(opt.model_b).system;
    double J = 0.0;
    const bool shared = a.n() == b.n() && a.m() == b.m() &&
                        (a.A() - b.A()).norm() <= 1e-10 * std::max(1.0, a.A().norm()) &&
                        (a.B() - b.B()).norm() <= 1e-10 * std::max(1.0, a.B().norm()) &&
                        (a.D() - b.D()).norm() <= 1e-10 * std::max(1.0, a.D().norm());
    if (shared) {
      J = h2_error_sq(a, b.C());
    } else if (opt.general) {
      J = h2_distance_sq(a, b);
    } else {
      throw Error(ErrorCode::DimensionMismatch,
                  "models do not share A, B, D; pass --general to compare arbitrary realizations");
    }
    out << "h2_error_sq: " << detail::format_double(J) << '\n'
        << "h2_error: " << detail::format_double(std::sqrt(J)) << '\n';
    return kSuccess;
  } catch (const std::exception& e) {
    return report_error(err, e);
  }
}

int cmd_bench(const BenchOptions& opt, std::ostream& out, std::ostream& err) {
  try {
    StateSpaceSystem sys = bench::toy_system(0.0);
    if (opt.name == "acc") {
      sys = bench::acc_system(opt.feedthrough.value_or(0.125));
    } else if (opt.name == "toy-m0") {
      sys = bench::toy_system(opt.feedthrough.value_or(0.0));
    } else if (opt.name == "toy-m1") {
      sys = bench::toy_system(opt.feedthrough.value_or(0.125));
    } else {
      throw Error(ErrorCode::InvalidArgument,
                  "unknown benchmark '" + opt.name + "' (expected acc, toy-m0, toy-m1)");
    }
    KlapConfig config = opt.config;
    apply_init(opt.init, sys.n(), sys.m(), config);
    const RunSummary s = run_klap(sys, config);
    const KlapResult& r = s.result;

    out << "benchmark  iterations  time_s  time_per_iter_s  h2_error  h2_error_sq  restarts  certificate\n";
    char row[256];
    std::snprintf(row, sizeof row, "%-9s  %10d  %6.3f  %15.3e  %8.4g  %11.4g  %8d  %s\n", opt.name.c_str(),
                  r.iterations, s.seconds, r.iterations > 0 ? s.seconds / r.iterations : 0.0,
                  r.h2_error, r.J_final, r.restarts,
                  r.certificate.vacuous ? "vacuous"
                  : r.certificate.is_global_candidate ? "global"
                                                      : "local");
    out << row << "C_hat:";
    for (double x : flatten(r.C_hat)) out << ' ' << fmt_num(x);
    out << '\n';
    if (!opt.trace.empty()) write_trace_csv(opt.trace, r, out);
    if (!opt.report.empty()) {
      with_output_stream(opt.report, out, [&](std::ostream& os) {
        os << report_json("bench:" + opt.name, "", config, opt.init, s).dump(2) << '\n';
      });
    }
    if (!r.converged) {
      err << "error: " << r.message << '\n';
      return kError;
    }
    return kSuccess;
  } catch (const std::exception& e) {
    return report_error(err, e);
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"H2-optimal passivity enforcement for LTI state-space models", "klap"};
  app.require_subcommand(1);

  auto add_optimizer_flags = [](CLI::App* sub, KlapConfig& c, std::string& init,
                                std::string& trace) {
    sub->add_option("--seed", c.rng_seed, "Seed for random starts");
    sub->add_option("--grad-tol", c.grad_tol, "Gradient-norm stopping tolerance");
    sub->add_option("--obj-tol", c.obj_rel_tol, "Relative objective-change stopping tolerance");
    sub->add_option("--alpha", c.restart_step, "Restart step length");
    sub->add_option("--eps", c.restart_axis_tol_rel,
                    "Certificate tolerance on Re(lambda(Y*)), relative to ||A||_F");
    sub->add_option("--max-restarts", c.max_restarts);
    sub->add_option("--max-iterations", c.max_iterations);
    sub->add_option("--threads", c.threads, "Threads for Popov scans");
    sub->add_option("--init", init, "are | random | comma-separated L0 entries (row-major n x m)");
    sub->add_option("--trace", trace, "Per-iteration CSV log");
  };
  auto add_grid_flags = [](CLI::App* sub, GridOptions& g) {
    sub->add_option("--wmin", g.wmin, "Lowest frequency (rad/s)");
    sub->add_option("--wmax", g.wmax, "Highest frequency (rad/s)");
    sub->add_option("--points", g.points, "Number of log-spaced frequencies")->check(CLI::PositiveNumber);
  };

  CheckOptions check;
  auto* c_check = app.add_subcommand("check", "Test a model for passivity");
  c_check->add_option("model", check.model)->required();
  c_check->add_option("--tol", check.tol, "Passivity tolerance (relative)");
  c_check->add_option("--csv", check.popov_csv, "Write the Popov scan as CSV ('-' for stdout)");
  add_grid_flags(c_check, check.grid);
  c_check->add_option("--threads", check.threads);

  PassivateOptions pas;
  auto* c_pas = app.add_subcommand("passivate", "Compute the H2-closest passive output matrix");
  c_pas->add_option("model", pas.model)->required();
  c_pas->add_option("--out,-o", pas.out, "Output model file")->required();
  c_pas->add_option("--report", pas.report, "Report JSON (default <out>.report.json)");
  c_pas->add_option("--feedthrough", pas.feedthrough, "Replace D by this value times I");
  add_optimizer_flags(c_pas, pas.config, pas.init, pas.trace);

  PopovOptions pop;
  auto* c_pop = app.add_subcommand("popov", "Sample the smallest Popov eigenvalue as CSV");
  c_pop->add_option("model", pop.model)->required();
  c_pop->add_option("--out,-o", pop.out, "CSV file (default stdout)");
  add_grid_flags(c_pop, pop.grid);
  c_pop->add_flag("--all", pop.all_eigenvalues, "Add one column per eigenvalue");
  c_pop->add_option("--shift", pop.shift, "Add shift * I to D before scanning");
  c_pop->add_flag("--shift-init", pop.shift_init, "Add the initialization perturbation to D");
  c_pop->add_option("--threads", pop.threads);

  H2Options h2;
  auto* c_h2 = app.add_subcommand("h2", "H2 distance between two models");
  c_h2->add_option("model_a", h2.model_a)->required();
  c_h2->add_option("model_b", h2.model_b)->required();
  c_h2->add_flag("--general", h2.general, "Allow models with different A and B");

  BenchOptions bench_opt;
  auto* c_bench = app.add_subcommand("bench", "Run a bundled benchmark (acc, toy-m0, toy-m1)");
  c_bench->add_option("name", bench_opt.name)->required();
  c_bench->add_option("--feedthrough", bench_opt.feedthrough, "Scalar feedthrough D");
  c_bench->add_option("--report", bench_opt.report, "Report JSON");
  add_optimizer_flags(c_bench, bench_opt.config, bench_opt.init, bench_opt.trace);

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n' << "run 'klap --help' for usage\n";
    return kError;
  }

  if (*c_check) return cmd_check(check, out, err);
  if (*c_pas) return cmd_passivate(pas, out, err);
  if (*c_pop) {
    if (pop.grid.wmin && pop.grid.wmax && !(*pop.grid.wmin < *pop.grid.wmax)) {
      err << "usage error: --wmin must be smaller than --wmax\n";
      return kError;
    }
    return cmd_popov(pop, out, err);
  }
  if (*c_h2) return cmd_h2(h2, out, err);
  if (*c_bench) return cmd_bench(bench_opt, out, err);
  return kError;
}

}  // namespace klap::cli
