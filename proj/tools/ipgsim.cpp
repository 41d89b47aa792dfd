// ipgsim: command-line driver for the distributed regression simulator.

#include "ipg/experiment.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#ifndef IPG_DEFAULT_DATA_DIR
#define IPG_DEFAULT_DATA_DIR "data"
#endif

namespace {

using namespace ipg;

struct CommonArgs {
  std::string dataset = "gr_30_30";
  std::string data_dir = IPG_DEFAULT_DATA_DIR;
  int agents = 10;
  std::string params = "tuned";
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--dataset", a.dataset, "ash608, gr_30_30, synthetic, or a .mtx path")
      ->capture_default_str();
  cmd->add_option("--data-dir", a.data_dir, "directory searched for <dataset>.mtx")
      ->capture_default_str();
  cmd->add_option("--agents,-m", a.agents, "number of agents")->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--params", a.params, "default parameter source")
      ->check(CLI::IsMember({"tuned", "table"}))
      ->capture_default_str();
}

RunConfig base_config(const CommonArgs& a) {
  RunConfig c;
  c.dataset = a.dataset;
  c.data_dir = a.data_dir;
  c.agents = a.agents;
  c.params = parse_parameter_source(a.params);
  return c;
}

void print_summary(const RunTrace& trace) {
  const auto& s = trace.summary;
  const auto& c = trace.solver;
  std::cout << "method        " << to_string(c.method) << "\n"
            << "parameters    alpha=" << format_double(c.alpha) << " delta=" << format_double(c.delta)
            << " beta=" << format_double(c.beta) << " gamma=" << format_double(c.gamma)
            << " eta=" << format_double(c.eta_apc) << "\n"
            << "stop reason   " << s.stop_reason << "\n"
            << "iterations    " << s.iterations << "\n"
            << "final error   " << format_double(s.final_error) << "\n";
  if (s.diverged) std::cout << "diverged at   " << s.diverged_at << "\n";
  if (trace.config.noise != NoiseMode::none) {
    std::cout << "noise level   expected=" << format_double(s.noise_expected)
              << " realized=" << format_double(s.noise_realized) << "\n";
  }
  if (s.skipped_updates > 0) std::cout << "skipped BFGS  " << s.skipped_updates << "\n";
  std::cout << "wall time     " << std::setprecision(3) << s.wall_time_s << " s\n";
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Keep the d x d round buffers on the heap instead of fresh mmaps.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
  CLI::App app{"Server-agent distributed linear regression simulator"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);

  // run
  CommonArgs run_common;
  std::string method = "ipg", noise = "none", out_dir, format = "both";
  std::uint64_t seed = 1;
  std::optional<double> alpha, delta, beta, gamma, eta_apc, obs_amplitude, proc_lo, proc_hi;
  std::optional<int> decimals;
  std::string process_kind;
  int reps = 1, max_iters = 100000;
  auto* run_cmd = app.add_subcommand("run", "run one solver to the stopping rule");
  add_common(run_cmd, run_common);
  run_cmd->add_option("--method", method)
      ->check(CLI::IsMember({"ipg", "gd", "nag", "hbm", "apc", "bfgs"}))
      ->capture_default_str();
  run_cmd->add_option("--noise", noise)
      ->check(CLI::IsMember({"none", "observation", "process"}))
      ->capture_default_str();
  run_cmd->add_option("--seed", seed)->capture_default_str();
  run_cmd->add_option("--out", out_dir, "directory for the trace files");
  run_cmd->add_option("--format", format)
      ->check(CLI::IsMember({"csv", "json", "both"}))
      ->capture_default_str();
  run_cmd->add_option("--alpha", alpha);
  run_cmd->add_option("--delta", delta);
  run_cmd->add_option("--beta", beta);
  run_cmd->add_option("--gamma", gamma);
  run_cmd->add_option("--eta-apc", eta_apc);
  bool bfgs_unit_step = false;
  run_cmd->add_flag("--bfgs-unit-step", bfgs_unit_step, "BFGS without the exact line search");
  run_cmd->add_option("--obs-amplitude", obs_amplitude, "observation noise half-width");
  run_cmd->add_option("--process-kind", process_kind, "override the process noise model")
      ->check(CLI::IsMember({"uniform", "round"}));
  run_cmd->add_option("--process-lo", proc_lo);
  run_cmd->add_option("--process-hi", proc_hi);
  run_cmd->add_option("--decimals", decimals, "round-off decimal places");
  run_cmd->add_option("--reps", reps, "Monte Carlo repetitions (seeds seed, seed+1, ...)")
      ->check(CLI::PositiveNumber)->capture_default_str();
  run_cmd->add_option("--max-iters", max_iters)->check(CLI::PositiveNumber)->capture_default_str();

  // grid
  std::string grid_config, grid_out, grid_traces;
  int threads = 1;
  auto* grid_cmd = app.add_subcommand("grid", "run a grid of configurations from a JSON file");
  grid_cmd->add_option("--config", grid_config)->required()->check(CLI::ExistingFile);
  grid_cmd->add_option("--out", grid_out, "summary CSV (stdout when omitted)");
  grid_cmd->add_option("--traces", grid_traces, "directory for first-repetition traces");
  grid_cmd->add_option("--threads", threads)->check(CLI::PositiveNumber)->capture_default_str();

  // spectrum
  CommonArgs spec_common;
  auto* spectrum_cmd = app.add_subcommand("spectrum", "eigenvalues of A^T A and tuned parameters");
  add_common(spectrum_cmd, spec_common);

  // bounds
  CommonArgs bounds_common;
  std::string bounds_method = "ipg", bounds_noise = "observation";
  std::optional<double> bounds_alpha, bounds_delta;
  auto* bounds_cmd = app.add_subcommand("bounds", "noise bounds for IPG on a dataset");
  add_common(bounds_cmd, bounds_common);
  bounds_cmd->add_option("--method", bounds_method)->check(CLI::IsMember({"ipg"}))
      ->capture_default_str();
  bounds_cmd->add_option("--noise", bounds_noise)
      ->check(CLI::IsMember({"observation", "process"}))
      ->capture_default_str();
  bounds_cmd->add_option("--alpha", bounds_alpha);
  bounds_cmd->add_option("--delta", bounds_delta);

  // gen-grid
  int grid_n = 30;
  std::string gen_out;
  auto* gen_cmd = app.add_subcommand("gen-grid", "write the 9-point Laplacian of an n x n grid");
  gen_cmd->add_option("--n", grid_n)->check(CLI::PositiveNumber)->capture_default_str();
  gen_cmd->add_option("--out", gen_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      RunConfig c = base_config(run_common);
      c.method = parse_method(method);
      c.noise = parse_noise_mode(noise);
      c.seed = seed;
      c.alpha = alpha;
      c.delta = delta;
      c.beta = beta;
      c.gamma = gamma;
      c.eta_apc = eta_apc;
      c.bfgs_unit_step = bfgs_unit_step;
      c.observation_amplitude = obs_amplitude;
      c.monte_carlo_reps = reps;
      c.max_iterations = max_iters;
      if (!process_kind.empty()) {
        c.process_noise = process_kind == "round"
                              ? ProcessNoiseSpec::round_to(decimals.value_or(4))
                              : ProcessNoiseSpec::uniform(proc_lo.value_or(0.0),
                                                          proc_hi.value_or(0.0), seed);
      }
      c.validate();
      const Problem problem = load_problem(c);
      const RunTrace trace = run(c, problem);
      print_summary(trace);
      if (!out_dir.empty()) {
        if (format != "json") std::cout << "wrote " << emit(trace, TraceFormat::csv, out_dir).string() << "\n";
        if (format != "csv") std::cout << "wrote " << emit(trace, TraceFormat::json, out_dir).string() << "\n";
      }
      if (reps > 1) {
        const auto mc = run_monte_carlo(c, problem);
        std::cout << "monte carlo   reps=" << reps << " mean=" << format_double(mc.mean_error)
                  << " std=" << format_double(mc.std_error) << " diverged=" << mc.diverged << "\n";
      }
    } else if (*grid_cmd) {
      GridOptions options;
      options.threads = threads;
      if (!grid_traces.empty()) options.trace_dir = grid_traces;
      const auto rows = run_grid(load_grid_config(grid_config), options);
      if (grid_out.empty()) {
        write_grid_csv(std::cout, rows);
      } else {
        std::ofstream out(grid_out);
        if (!out) throw std::runtime_error("cannot write " + grid_out);
        write_grid_csv(out, rows);
      }
      for (const auto& r : rows) {
        if (!r.error.empty()) {
          std::cerr << r.dataset << "/" << to_string(r.method) << ": " << r.error << "\n";
        }
      }
    } else if (*spectrum_cmd) {
      const RunConfig c = base_config(spec_common);
      const Problem p = load_problem(c);
      const auto& s = p.spectrum;
      std::cout << "dataset     " << p.name << " (" << p.data.rows() << " x " << p.data.dim()
                << ", m = " << p.shards.size() << ")\n"
                << "lambda_1    " << format_double(s.lambda_1) << "\n"
                << "lambda_d    " << format_double(s.lambda_d) << "\n"
                << "kappa       " << format_double(s.lambda_1 / s.lambda_d) << "\n"
                << "varrho      " << format_double(s.varrho) << "\n"
                << "apc mu      [" << format_double(p.apc_mu_min) << ", "
                << format_double(p.apc_mu_max) << "]\n\n"
                << "method  alpha       delta  beta        gamma       eta\n";
      for (Method m : kAllMethods) {
        const SolverConfig t = c.params == ParameterSource::table ? table_parameters(p.name, m)
                                                                  : tuned_parameters(p, m);
        std::printf("%-7s %-11.6g %-6.3g %-11.6g %-11.6g %-11.6g\n",
                    std::string(to_string(m)).c_str(), t.alpha, t.delta, t.beta, t.gamma,
                    t.eta_apc);
      }
    } else if (*bounds_cmd) {
      RunConfig c = base_config(bounds_common);
      c.method = Method::ipg;
      c.noise = parse_noise_mode(bounds_noise);
      c.alpha = bounds_alpha;
      c.delta = bounds_delta;
      const Problem p = load_problem(c);
      const SolverConfig cfg = resolve_solver_config(c, p);
      const auto d = p.data.dim();
      double eta = 0.0, omega = 0.0;
      if (c.noise == NoiseMode::observation) {
        const double amp = default_observation_amplitude(p.name);
        for (const auto& sh : p.shards) eta = std::max(eta, static_cast<double>(sh.rows()) * amp / 2.0);
      } else {
        omega = cfg.process_noise.kind == ProcessNoiseKind::round_off
                    ? cfg.process_noise.worst_case_l1(d)
                    : cfg.process_noise.expected_l1(d);
      }
      const BoundInputs in = make_bound_inputs(p.spectrum, Matrix::Zero(d, d), cfg.alpha, cfg.delta,
                                               eta, omega, static_cast<int>(p.shards.size()),
                                               std::sqrt(static_cast<double>(d)));
      std::cout << "alpha       " << format_double(cfg.alpha) << "\n"
                << "delta       " << format_double(cfg.delta) << "\n"
                << "rho         " << format_double(in.rho) << "\n";
      if (c.noise == NoiseMode::observation) {
        std::cout << "eta         " << format_double(eta) << "\n"
                  << "IPG limit   " << format_double(theorem1_asymptote(in)) << "\n"
                  << "GD limit    " << format_double(gd_observation_asymptote(in)) << "\n";
      } else {
        const auto g = theorem2_gates(in);
        std::cout << "omega       " << format_double(omega) << "\n"
                  << "rho_bd      " << format_double(g.rho_bd) << "\n"
                  << "omega_bd    " << format_double(g.omega_bd) << "\n"
                  << "gates hold  " << (g.satisfied ? "yes" : "no") << "\n";
        if (g.satisfied) std::cout << "IPG limit   " << format_double(theorem2_asymptote(in)) << "\n";
        try {
          std::cout << "GD limit    " << format_double(gd_process_asymptote(in)) << "\n";
        } catch (const std::domain_error&) {
          std::cout << "GD limit    n/a (delta too large for a contraction)\n";
        }
      }
    } else if (*gen_cmd) {
      std::ofstream out(gen_out);
      if (!out) throw std::runtime_error("cannot write " + gen_out);
      write_matrix_market(out, nine_point_laplacian(grid_n), true,
                          "9-point Laplacian on a " + std::to_string(grid_n) + " x " +
                              std::to_string(grid_n) + " grid, row-major node order");
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
