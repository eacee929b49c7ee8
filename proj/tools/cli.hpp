#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "klap/optimizer.hpp"

namespace klap::cli {

enum ExitCode : int { kSuccess = 0, kNotPassive = 1, kError = 2 };

/// Frequency grid selection shared by check and popov. Without wmin/wmax the
/// default grid (0 plus `points` log-spaced samples around the spectrum of A)
/// is used.
struct GridOptions {
  std::optional<double> wmin;
  std::optional<double> wmax;
  std::size_t points = 500;
};

struct CheckOptions {
  std::string model;
  double tol = 1e-9;
  /// Write the Popov scan here when nonempty ("-" for stdout).
  std::string popov_csv;
  GridOptions grid;
  unsigned threads = 1;
};

struct PassivateOptions {
  std::string model;
  std::string out;
  /// Defaults to <out>.report.json.
  std::string report;
  std::string trace;
  /// "are", "random", or comma-separated entries of L0 (row-major n x m).
  std::string init = "are";
  std::optional<double> feedthrough;
  KlapConfig config;
};

struct PopovOptions {
  std::string model;
  std::string out;
  GridOptions grid;
  bool all_eigenvalues = false;
  /// Adds shift * I to D before scanning.
  double shift = 0.0;
  /// Adds the initialization perturbation Delta_D * I to D before scanning.
  bool shift_init = false;
  unsigned threads = 1;
};

struct H2Options {
  std::string model_a;
  std::string model_b;
  bool general = false;
};

struct BenchOptions {
  std::string name;
  std::optional<double> feedthrough;
  std::string init = "are";
  std::string trace;
  std::string report;
  KlapConfig config;
};

int cmd_check(const CheckOptions& opt, std::ostream& out, std::ostream& err);
int cmd_passivate(const PassivateOptions& opt, std::ostream& out, std::ostream& err);
int cmd_popov(const PopovOptions& opt, std::ostream& out, std::ostream& err);
int cmd_h2(const H2Options& opt, std::ostream& out, std::ostream& err);
int cmd_bench(const BenchOptions& opt, std::ostream& out, std::ostream& err);

/// Full command-line entry point; argv[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Squared H2 distance between two systems with equal D, from the Gramian of
/// the stacked error realization.
double h2_distance_sq(const StateSpaceSystem& a, const StateSpaceSystem& b);

/// Applies an --init string to the config: "are", "random", or L0 entries.
void apply_init(const std::string& spec, Eigen::Index n, Eigen::Index m, KlapConfig& config);

}  // namespace klap::cli
