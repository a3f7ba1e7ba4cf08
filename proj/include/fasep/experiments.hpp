#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace fasep {

struct BudgetExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::string experiment = "first-moment";
  std::vector<double> epsilon{0.4, 0.3, 0.2};
  std::vector<double> t_macro{0.5};
  std::vector<double> u{0.5, 1.0, 2.0};
  int replicas = 10000;
  int trend_replicas = 2000;   // replicas for every epsilon after the first (martingale, near-eq)
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  double ci = 3.0;
  int threads = 0;
  double event_budget = 5e10;
  std::vector<double> trend_u{1.0};  // u values at which the epsilon trend is asserted
  double B = -0.5;                   // near-eq drift parameter
  bool symmetry = false;             // near-eq: report the small-u quotient
  std::string test_function = "hermite-damped";

  void validate() const;  // std::invalid_argument; BudgetExceeded past event_budget
  bool operator==(const ExperimentConfig&) const = default;
};

// "key = value" lines, lists comma separated, '#' starts a comment.
std::string to_text(const ExperimentConfig& cfg);
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_digest(const ExperimentConfig& cfg);  // FNV-1a of to_text, 16 hex digits
// Expected number of CTMC events for the whole configuration.
double predicted_events(const ExperimentConfig& cfg);
// Defaults for a CLI subcommand.
ExperimentConfig default_config(const std::string& experiment);

// ---- reports ----

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows{};
  std::string plot_x{}, plot_y{}, plot_series{};  // optional SVG line plot
  void add(std::vector<std::string> row);    // throws on a width mismatch
  std::size_t column(const std::string& name) const;
};

std::string num(double v);  // round-trip decimal

struct Criterion {
  std::string name;
  double target = 0.0;
  double estimate = 0.0;
  double stderr_ = 0.0;  // 0 for exact comparisons
  bool pass = false;
  std::string detail;
};

struct ExperimentReport {
  std::string experiment;
  std::vector<Table> tables;
  std::vector<Criterion> criteria;
  bool all_pass() const;
};

ExperimentReport run_first_moment_convergence(const ExperimentConfig& cfg);
ExperimentReport run_second_moment_ratio(const ExperimentConfig& cfg);
ExperimentReport run_martingale_checks(const ExperimentConfig& cfg);
ExperimentReport run_intertwining_test(const ExperimentConfig& cfg);
ExperimentReport run_near_equilibrium(const ExperimentConfig& cfg);
ExperimentReport run_kernels_suite(const ExperimentConfig& cfg);
ExperimentReport run_she_validate(const ExperimentConfig& cfg);
// Dispatch on cfg.experiment.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

// Exact generator intertwining on every regular window of size <= max_window.
struct IntertwiningCheck {
  std::int64_t configs = 0;
  std::int64_t transitions = 0;
  std::vector<std::string> mismatches;  // "config -> image: rate a vs b"
};
IntertwiningCheck intertwining_exact(int max_window, double epsilon);

// ---- outputs ----

std::string git_hash();
void write_table_csv(std::ostream& os, const Table& t, const ExperimentConfig& cfg);
void write_table_svg(std::ostream& os, const Table& t);
void write_summary_csv(std::ostream& os, const std::vector<Criterion>& criteria);
// One CSV (and SVG when the table has a plot) per table plus summary.csv.
// Returns the files written.
std::vector<std::filesystem::path> emit_outputs(const ExperimentReport& r, const ExperimentConfig& cfg);

// ---- acceptance criteria 1..10 ----

struct AcceptanceOptions {
  int threads = 0;
  std::uint64_t seed = 1;
};
struct AcceptanceResult {
  int id = 0;
  std::string title;
  bool pass = false;
  double seconds = 0.0;
  std::vector<Criterion> checks;
};
AcceptanceResult acceptance_criterion(int id, const AcceptanceOptions& opt = {});
constexpr int kAcceptanceCount = 10;

}  // namespace fasep
