#pragma once

#include "ipg/analysis.hpp"
#include "ipg/solvers.hpp"

#include "json.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ipg {

enum class NoiseMode { none, observation, process };
std::string_view to_string(NoiseMode mode);
NoiseMode parse_noise_mode(std::string_view name);

/// Where default solver parameters come from: `tuned` evaluates the
/// minimum-rate tuning formulas on the problem's spectrum, `table` uses the
/// published (rounded) values for ash608 and gr_30_30.
enum class ParameterSource { tuned, table };
std::string_view to_string(ParameterSource source);
ParameterSource parse_parameter_source(std::string_view name);

struct RunConfig {
  std::string dataset = "gr_30_30";  // ash608, gr_30_30, synthetic, or a .mtx path
  std::filesystem::path data_dir = "data";
  SyntheticSpec synthetic;
  Method method = Method::ipg;
  ParameterSource params = ParameterSource::tuned;
  std::optional<double> alpha, delta, beta, gamma, eta_apc;
  bool bfgs_unit_step = false;
  NoiseMode noise = NoiseMode::none;
  std::optional<double> observation_amplitude;
  std::optional<ProcessNoiseSpec> process_noise;
  int agents = 10;
  std::uint64_t seed = 1;
  int max_iterations = 100000;
  int stop_window = 20;
  double stop_tol = 1e-4;
  int monte_carlo_reps = 1;

  void validate() const;
};

nlohmann::json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j, const RunConfig& defaults = {});

/// A loaded dataset with everything derived from it once: spectrum, clean
/// shards and the projection-consensus tuning spectrum.
struct Problem {
  std::string name;
  CollectiveData data;
  Spectrum spectrum;
  std::vector<AgentShard> shards;
  double apc_mu_min = 0.0;  // eigenvalues of (1/m) sum_i A_i^T (A_i A_i^T)^+ A_i
  double apc_mu_max = 0.0;
};

/// Resolves the dataset (file in data_dir, explicit path, built-in stencil or
/// synthetic), forms b = A x_star with x_star = ones, partitions and checks
/// full rank.
Problem load_problem(const RunConfig& config);

/// Published parameter table, verbatim.
SolverConfig table_parameters(std::string_view dataset, Method method);
/// Minimum-rate tuning evaluated on the problem.
SolverConfig tuned_parameters(const Problem& problem, Method method);

/// Defaults for the noise experiments: observation amplitude 0.25 (ash608)
/// or 0.15 (otherwise); process noise by 4-decimal rounding for IPG, GD, NAG
/// and HBM, uniform additive noise for APC and BFGS.
double default_observation_amplitude(std::string_view dataset);
ProcessNoiseSpec default_process_noise(std::string_view dataset, Method method,
                                       std::uint64_t seed);

/// Solver configuration a run will actually use (defaults + overrides).
SolverConfig resolve_solver_config(const RunConfig& config, const Problem& problem);

/// Fires once `window` consecutive step sizes fall below `tol`.
class StoppingRule {
 public:
  StoppingRule(int window, double tol) : window_(window), tol_(tol) {}
  bool update(double step_delta) {
    run_ = step_delta < tol_ ? run_ + 1 : 0;
    return run_ >= window_;
  }
  int consecutive() const { return run_; }

 private:
  int window_;
  double tol_;
  int run_ = 0;
};

struct TraceRow {
  int t = 0;
  double err = 0.0;
  double step_delta = 0.0;  // NaN at t = 0
  double bound_t1 = 0.0;    // NaN when not applicable
  double u_t = 0.0;
  double bound_t2 = 0.0;
  bool diverged = false;

  bool operator==(const TraceRow& o) const {
    auto same = [](double a, double b) { return a == b || (a != a && b != b); };
    return t == o.t && same(err, o.err) && same(step_delta, o.step_delta) &&
           same(bound_t1, o.bound_t1) && same(u_t, o.u_t) && same(bound_t2, o.bound_t2) &&
           diverged == o.diverged;
  }
};

struct RunSummary {
  double final_error = 0.0;  // +inf when diverged
  int iterations = 0;
  bool diverged = false;
  int diverged_at = -1;
  std::string stop_reason;  // "converged", "max_iterations", "diverged"
  double noise_expected = 0.0;  // closed-form eta / omega bound used in the bounds
  double noise_realized = 0.0;  // max per-agent ||w_b^i||_1, or mean ||w||_1 for process noise
  double noise_worst = 0.0;     // almost-sure l1 bound (process noise)
  int skipped_updates = 0;
  double wall_time_s = 0.0;  // not serialized

  bool operator==(const RunSummary& o) const {
    auto same = [](double a, double b) { return a == b || (a != a && b != b); };
    return same(final_error, o.final_error) && iterations == o.iterations &&
           diverged == o.diverged && diverged_at == o.diverged_at &&
           stop_reason == o.stop_reason && same(noise_expected, o.noise_expected) &&
           same(noise_realized, o.noise_realized) && same(noise_worst, o.noise_worst) &&
           skipped_updates == o.skipped_updates;
  }
};

struct RunTrace {
  RunConfig config;
  SolverConfig solver;
  std::vector<TraceRow> rows;
  RunSummary summary;
};

RunTrace run(const RunConfig& config, const Problem& problem);
RunTrace run(const RunConfig& config);

struct MonteCarloResult {
  std::vector<RunSummary> runs;
  double mean_error = 0.0;
  double std_error = 0.0;  // sample standard deviation of the final errors
  int diverged = 0;
  double mean_noise_realized = 0.0;
};

/// `monte_carlo_reps` runs with seeds seed, seed + 1, ...
MonteCarloResult run_monte_carlo(const RunConfig& config, const Problem& problem);

struct GridRow {
  NoiseMode noise = NoiseMode::none;
  std::string dataset;
  Method method = Method::ipg;
  double noise_expected = 0.0;
  double noise_realized = 0.0;
  double single_error = 0.0;  // first repetition
  double mean_error = 0.0;
  double std_error = 0.0;
  int reps = 0;
  int diverged = 0;
  int iterations = 0;  // of the first repetition
  double wall_time_s = 0.0;
  std::string error;  // non-empty when the cell failed
};

struct GridOptions {
  int threads = 1;
  std::optional<std::filesystem::path> trace_dir;  // emit first-rep traces here
};

std::vector<GridRow> run_grid(const std::vector<RunConfig>& configs, const GridOptions& options = {});
void write_grid_csv(std::ostream& out, const std::vector<GridRow>& rows);

/// Grid file: {"defaults": {...RunConfig keys...}, "runs": [{...}, ...]}.
/// "method": "all" expands to the six methods.
std::vector<RunConfig> load_grid_config(const std::filesystem::path& path);
std::vector<RunConfig> parse_grid_config(const nlohmann::json& j);

// Serialization. CSV columns: t,err,step_delta,bound_t1,u_t,bound_t2,diverged.

std::string version_string();
std::string format_double(double v);
void write_trace_csv(std::ostream& out, const RunTrace& trace);
std::vector<TraceRow> parse_trace_csv(std::istream& in);
nlohmann::json trace_to_json(const RunTrace& trace);
RunTrace trace_from_json(const nlohmann::json& j);

enum class TraceFormat { csv, json };
std::filesystem::path emit(const RunTrace& trace, TraceFormat format,
                           const std::filesystem::path& out_dir);
std::string trace_basename(const RunConfig& config);

}  // namespace ipg
