#include "ipg/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#ifndef IPG_VERSION_STRING
#define IPG_VERSION_STRING "dev"
#endif

namespace ipg {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

std::string_view to_string(ProcessNoiseKind kind) {
  switch (kind) {
    case ProcessNoiseKind::none: return "none";
    case ProcessNoiseKind::uniform_additive: return "uniform";
    case ProcessNoiseKind::round_off: return "round";
  }
  return "?";
}

ProcessNoiseKind parse_process_kind(std::string_view name) {
  if (name == "none") return ProcessNoiseKind::none;
  if (name == "uniform") return ProcessNoiseKind::uniform_additive;
  if (name == "round") return ProcessNoiseKind::round_off;
  throw std::invalid_argument("unknown process noise kind '" + std::string(name) + "'");
}

json number(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

double number_from(const json& j) {
  if (j.is_string()) return std::strtod(j.get<std::string>().c_str(), nullptr);
  return j.get<double>();
}

json to_json(const ProcessNoiseSpec& s) {
  return json{{"kind", to_string(s.kind)},
              {"lo", s.lo},
              {"hi", s.hi},
              {"decimal_places", s.decimal_places},
              {"seed", s.seed}};
}

ProcessNoiseSpec process_spec_from_json(const json& j) {
  ProcessNoiseSpec s;
  s.kind = parse_process_kind(j.value("kind", std::string("none")));
  s.lo = j.value("lo", 0.0);
  s.hi = j.value("hi", 0.0);
  s.decimal_places = j.value("decimal_places", 4);
  s.seed = j.value("seed", std::uint64_t{1});
  return s;
}

json to_json(const SolverConfig& c) {
  return json{{"method", to_string(c.method)},
              {"alpha", c.alpha},
              {"delta", c.delta},
              {"beta", c.beta},
              {"gamma", c.gamma},
              {"eta_apc", c.eta_apc},
              {"freeze_preconditioner", c.freeze_preconditioner},
              {"bfgs_line_search", c.bfgs_line_search},
              {"process_noise", to_json(c.process_noise)}};
}

SolverConfig solver_config_from_json(const json& j) {
  SolverConfig c;
  c.method = parse_method(j.at("method").get<std::string>());
  c.alpha = j.at("alpha").get<double>();
  c.delta = j.at("delta").get<double>();
  c.beta = j.at("beta").get<double>();
  c.gamma = j.at("gamma").get<double>();
  c.eta_apc = j.at("eta_apc").get<double>();
  c.freeze_preconditioner = j.at("freeze_preconditioner").get<bool>();
  c.bfgs_line_search = j.at("bfgs_line_search").get<bool>();
  c.process_noise = process_spec_from_json(j.at("process_noise"));
  return c;
}

bool is_path_like(const std::string& dataset) {
  return dataset.find('/') != std::string::npos ||
         (dataset.size() > 4 && dataset.substr(dataset.size() - 4) == ".mtx");
}

std::string dataset_label(const std::string& dataset) {
  if (is_path_like(dataset)) return std::filesystem::path(dataset).stem().string();
  return dataset;
}

}  // namespace

std::string_view to_string(NoiseMode mode) {
  switch (mode) {
    case NoiseMode::none: return "none";
    case NoiseMode::observation: return "observation";
    case NoiseMode::process: return "process";
  }
  return "?";
}

NoiseMode parse_noise_mode(std::string_view name) {
  if (name == "none") return NoiseMode::none;
  if (name == "observation") return NoiseMode::observation;
  if (name == "process") return NoiseMode::process;
  throw std::invalid_argument("unknown noise mode '" + std::string(name) + "'");
}

std::string_view to_string(ParameterSource source) {
  return source == ParameterSource::tuned ? "tuned" : "table";
}

ParameterSource parse_parameter_source(std::string_view name) {
  if (name == "tuned") return ParameterSource::tuned;
  if (name == "table") return ParameterSource::table;
  throw std::invalid_argument("unknown parameter source '" + std::string(name) + "'");
}

void RunConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("RunConfig: " + what); };
  if (dataset.empty()) fail("dataset is empty");
  if (agents < 1) fail("agents must be >= 1");
  if (max_iterations < 1) fail("max_iterations must be >= 1");
  if (stop_window < 1) fail("stop_window must be >= 1");
  if (!(stop_tol > 0.0)) fail("stop_tol must be positive");
  if (monte_carlo_reps < 1) fail("reps must be >= 1");
  if (observation_amplitude && !(*observation_amplitude >= 0.0)) {
    fail("observation amplitude must be >= 0");
  }
}

json to_json(const RunConfig& c) {
  json j{{"dataset", c.dataset},
         {"data_dir", c.data_dir.string()},
         {"synthetic",
          {{"rows", c.synthetic.rows},
           {"dim", c.synthetic.dim},
           {"condition_number", c.synthetic.condition_number},
           {"seed", c.synthetic.seed}}},
         {"method", to_string(c.method)},
         {"params", to_string(c.params)},
         {"noise", to_string(c.noise)},
         {"agents", c.agents},
         {"seed", c.seed},
         {"max_iterations", c.max_iterations},
         {"stop_window", c.stop_window},
         {"stop_tol", c.stop_tol},
         {"reps", c.monte_carlo_reps},
         {"bfgs_unit_step", c.bfgs_unit_step}};
  auto opt = [&](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
  };
  opt("alpha", c.alpha);
  opt("delta", c.delta);
  opt("beta", c.beta);
  opt("gamma", c.gamma);
  opt("eta_apc", c.eta_apc);
  opt("observation_amplitude", c.observation_amplitude);
  if (c.process_noise) j["process_noise"] = to_json(*c.process_noise);
  return j;
}

RunConfig run_config_from_json(const json& j, const RunConfig& defaults) {
  RunConfig c = defaults;
  if (j.contains("dataset")) c.dataset = j["dataset"].get<std::string>();
  if (j.contains("data_dir")) c.data_dir = j["data_dir"].get<std::string>();
  if (j.contains("synthetic")) {
    const auto& s = j["synthetic"];
    c.synthetic.rows = s.value("rows", c.synthetic.rows);
    c.synthetic.dim = s.value("dim", c.synthetic.dim);
    c.synthetic.condition_number = s.value("condition_number", c.synthetic.condition_number);
    c.synthetic.seed = s.value("seed", c.synthetic.seed);
  }
  if (j.contains("method")) c.method = parse_method(j["method"].get<std::string>());
  if (j.contains("params")) c.params = parse_parameter_source(j["params"].get<std::string>());
  if (j.contains("noise")) c.noise = parse_noise_mode(j["noise"].get<std::string>());
  c.agents = j.value("agents", c.agents);
  c.seed = j.value("seed", c.seed);
  c.max_iterations = j.value("max_iterations", c.max_iterations);
  c.stop_window = j.value("stop_window", c.stop_window);
  c.stop_tol = j.value("stop_tol", c.stop_tol);
  c.monte_carlo_reps = j.value("reps", c.monte_carlo_reps);
  c.bfgs_unit_step = j.value("bfgs_unit_step", c.bfgs_unit_step);
  auto opt = [&](const char* key, std::optional<double>& v) {
    if (j.contains(key)) v = j[key].get<double>();
  };
  opt("alpha", c.alpha);
  opt("delta", c.delta);
  opt("beta", c.beta);
  opt("gamma", c.gamma);
  opt("eta_apc", c.eta_apc);
  opt("observation_amplitude", c.observation_amplitude);
  if (j.contains("process_noise")) c.process_noise = process_spec_from_json(j["process_noise"]);
  return c;
}

Problem load_problem(const RunConfig& config) {
  Problem p;
  Matrix A;
  if (config.dataset == "synthetic") {
    p.name = "synthetic";
    p.data = make_synthetic(config.synthetic);
  } else {
    std::filesystem::path file;
    if (is_path_like(config.dataset)) {
      file = config.dataset;
    } else {
      file = config.data_dir / (config.dataset + ".mtx");
    }
    p.name = dataset_label(config.dataset);
    if (std::filesystem::exists(file)) {
      A = parse_matrix_market(file);
    } else if (config.dataset == "gr_30_30") {
      A = nine_point_laplacian(30);
    } else {
      throw std::runtime_error("dataset '" + config.dataset + "' not found at " + file.string() +
                               " (SuiteSparse matrices can be fetched from "
                               "https://sparse.tamu.edu/; place the .mtx file in the data "
                               "directory)");
    }
    const Eigen::Index d = A.cols();
    p.data = make_collective(std::move(A), Vector::Ones(d));
  }
  p.spectrum = compute_spectrum(p.data);
  p.shards = partition(p.data, config.agents);

  // Spectrum of X = (1/m) sum_i A_i^T (A_i A_i^T)^+ A_i for projection consensus tuning.
  const auto d = p.data.dim();
  Matrix X = Matrix::Zero(d, d);
  for (const auto& shard : p.shards) {
    if (shard.rows() == 0) continue;
    const ApcAgentState local = apc_agent_setup(shard);
    const Matrix GA = local.gram_pinv * shard.A;
    X.noalias() += shard.A.transpose() * GA;
  }
  X /= static_cast<double>(p.shards.size());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(X, Eigen::EigenvaluesOnly);
  p.apc_mu_min = eig.eigenvalues()(0);
  p.apc_mu_max = eig.eigenvalues()(d - 1);
  return p;
}

SolverConfig table_parameters(std::string_view dataset, Method method) {
  SolverConfig c;
  c.method = method;
  const bool ash = dataset == "ash608";
  const bool gr = dataset == "gr_30_30";
  if (!ash && !gr) {
    throw std::invalid_argument("no published parameters for dataset '" + std::string(dataset) +
                                "'; use tuned parameters");
  }
  switch (method) {
    case Method::ipg:
      c.alpha = ash ? 0.1163 : 0.014;
      c.delta = 1.0;
      break;
    case Method::gd:
      c.alpha = ash ? 0.1163 : 0.014;
      break;
    case Method::nag:
      c.alpha = ash ? 0.08 : 0.009;
      c.beta = ash ? 0.5 : 0.99;
      break;
    case Method::hbm:
      c.alpha = ash ? 0.15 : 0.03;
      c.beta = ash ? 0.29 : 0.98;
      break;
    case Method::apc:
      c.gamma = ash ? 1.02 : 1.09;
      c.eta_apc = ash ? 5.27 : 12.8;
      break;
    case Method::bfgs:
      break;
  }
  return c;
}

SolverConfig tuned_parameters(const Problem& problem, Method method) {
  SolverConfig c;
  c.method = method;
  const double l1 = problem.spectrum.lambda_1;
  const double ld = problem.spectrum.lambda_d;
  const double kappa = l1 / ld;
  switch (method) {
    case Method::ipg:
      c.alpha = 2.0 / (l1 + ld);
      c.delta = 1.0;
      break;
    case Method::gd:
      c.alpha = 2.0 / (l1 + ld);
      break;
    case Method::nag: {
      const double r = std::sqrt(3.0 * kappa + 1.0);
      c.alpha = 4.0 / (3.0 * l1 + ld);
      c.beta = (r - 2.0) / (r + 2.0);
      break;
    }
    case Method::hbm: {
      const double s1 = std::sqrt(l1), sd = std::sqrt(ld);
      c.alpha = 4.0 / ((s1 + sd) * (s1 + sd));
      c.beta = std::pow((s1 - sd) / (s1 + sd), 2);
      break;
    }
    case Method::apc: {
      // The consensus error obeys a heavy-ball recursion on the spectrum of X
      // with step gamma * eta and momentum (1 - gamma)(1 - eta); match the
      // optimal heavy-ball pair and take the smaller root as gamma.
      const double s1 = std::sqrt(problem.apc_mu_max), sd = std::sqrt(problem.apc_mu_min);
      const double step = 4.0 / ((s1 + sd) * (s1 + sd));
      const double momentum = std::pow((s1 - sd) / (s1 + sd), 2);
      const double sum = 1.0 + step - momentum;
      const double disc = std::sqrt(std::max(sum * sum - 4.0 * step, 0.0));
      c.gamma = (sum - disc) / 2.0;
      c.eta_apc = (sum + disc) / 2.0;
      break;
    }
    case Method::bfgs:
      break;
  }
  return c;
}

double default_observation_amplitude(std::string_view dataset) {
  return dataset == "ash608" ? 0.25 : 0.15;
}

ProcessNoiseSpec default_process_noise(std::string_view dataset, Method method,
                                       std::uint64_t seed) {
  switch (method) {
    case Method::apc:
      return ProcessNoiseSpec::uniform(0.0, 5e-5, seed);
    case Method::bfgs:
      return ProcessNoiseSpec::uniform(0.0, dataset == "ash608" ? 9e-5 : 2e-6, seed);
    default:
      return ProcessNoiseSpec::round_to(4);
  }
}

SolverConfig resolve_solver_config(const RunConfig& config, const Problem& problem) {
  SolverConfig c = config.params == ParameterSource::table
                       ? table_parameters(problem.name, config.method)
                       : tuned_parameters(problem, config.method);
  if (config.alpha) c.alpha = *config.alpha;
  if (config.delta) c.delta = *config.delta;
  if (config.beta) c.beta = *config.beta;
  if (config.gamma) c.gamma = *config.gamma;
  if (config.eta_apc) c.eta_apc = *config.eta_apc;
  c.bfgs_line_search = !config.bfgs_unit_step;
  if (config.noise == NoiseMode::process) {
    c.process_noise = config.process_noise
                          ? *config.process_noise
                          : default_process_noise(problem.name, config.method, config.seed);
    c.process_noise.seed = config.seed;
  }
  c.validate();
  return c;
}

RunTrace run(const RunConfig& config, const Problem& problem) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  RunTrace trace;
  trace.config = config;
  trace.solver = resolve_solver_config(config, problem);
  const SolverConfig& cfg = trace.solver;
  const Eigen::Index d = problem.data.dim();
  const Vector& x_star = problem.data.x_star;

  std::vector<AgentShard> shards = problem.shards;
  RunSummary& summary = trace.summary;
  if (config.noise == NoiseMode::observation) {
    const double amplitude = config.observation_amplitude.value_or(
        default_observation_amplitude(problem.name));
    const auto report = draw_observation_noise({amplitude, config.seed}, shards);
    summary.noise_expected = report.max_expected();
    summary.noise_realized = report.max_realized();
  } else if (config.noise == NoiseMode::process) {
    summary.noise_expected = cfg.process_noise.expected_l1(d);
    summary.noise_worst = cfg.process_noise.worst_case_l1(d);
  }

  const int m = static_cast<int>(shards.size());
  const Network network(std::move(shards));
  Solver solver(cfg, network);

  // Bounds are only stated for IPG started from K(0) = 0.
  const bool with_bounds = cfg.method == Method::ipg && !cfg.freeze_preconditioner &&
                           richardson_rate(cfg.alpha, problem.spectrum.lambda_1,
                                           problem.spectrum.lambda_d) < 1.0;
  BoundInputs bounds;
  if (with_bounds) {
    // Process-noise bounds use the almost-sure l1 bound for rounding (it is
    // deterministic) and the exact expectation for random draws.
    const double omega = cfg.process_noise.kind == ProcessNoiseKind::round_off
                             ? summary.noise_worst
                             : summary.noise_expected;
    bounds = make_bound_inputs(problem.spectrum, Matrix::Zero(d, d), cfg.alpha, cfg.delta,
                               config.noise == NoiseMode::observation ? summary.noise_expected : 0.0,
                               config.noise == NoiseMode::process ? omega : 0.0, m,
                               estimation_error(solver.estimate(), x_star));
  }

  double err = estimation_error(solver.estimate(), x_star);
  trace.rows.push_back({0, err, kNaN, kNaN, kNaN, kNaN, solver.state().diverged});
  StoppingRule stop(config.stop_window, config.stop_tol);
  summary.stop_reason = "max_iterations";
  if (solver.state().diverged) summary.stop_reason = "diverged";
  for (int t = 0; t < config.max_iterations && !solver.state().diverged; ++t) {
    const Vector before = solver.estimate();
    solver.step();
    const int now = t + 1;
    if (solver.state().diverged) {
      trace.rows.push_back({now, kInf, kInf, kNaN, kNaN, kNaN, true});
      summary.stop_reason = "diverged";
      break;
    }
    const double step_delta = (solver.estimate() - before).norm();
    TraceRow row{now, estimation_error(solver.estimate(), x_star), step_delta, kNaN, kNaN, kNaN,
                 false};
    if (with_bounds && config.noise != NoiseMode::process) {
      row.bound_t1 = theorem1_step_bound(bounds, err, t);
    }
    err = row.err;
    trace.rows.push_back(row);
    if (stop.update(step_delta)) {
      summary.stop_reason = "converged";
      break;
    }
  }

  if (with_bounds && config.noise == NoiseMode::process) {
    const auto t2 = theorem2_bound_trace(bounds, trace.rows.back().t);
    for (auto& row : trace.rows) {
      row.u_t = u_of_t(bounds, row.t);
      row.bound_t2 = t2[static_cast<std::size_t>(row.t)];
    }
  }

  const auto& last = trace.rows.back();
  summary.iterations = last.t;
  summary.diverged = solver.state().diverged;
  summary.diverged_at = solver.state().diverged_at;
  summary.final_error = summary.diverged ? kInf : last.err;
  summary.skipped_updates = solver.state().skipped_updates;
  if (config.noise == NoiseMode::process) summary.noise_realized = solver.noise_meter().mean();
  summary.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return trace;
}

RunTrace run(const RunConfig& config) { return run(config, load_problem(config)); }

MonteCarloResult run_monte_carlo(const RunConfig& config, const Problem& problem) {
  config.validate();
  MonteCarloResult out;
  double sum = 0.0, noise_sum = 0.0;
  for (int r = 0; r < config.monte_carlo_reps; ++r) {
    RunConfig rep = config;
    rep.seed = config.seed + static_cast<std::uint64_t>(r);
    const RunTrace trace = run(rep, problem);
    out.runs.push_back(trace.summary);
    sum += trace.summary.final_error;
    noise_sum += trace.summary.noise_realized;
    if (trace.summary.diverged) ++out.diverged;
  }
  const double n = static_cast<double>(out.runs.size());
  out.mean_error = sum / n;
  out.mean_noise_realized = noise_sum / n;
  if (out.runs.size() > 1 && std::isfinite(out.mean_error)) {
    double ss = 0.0;
    for (const auto& s : out.runs) ss += (s.final_error - out.mean_error) * (s.final_error - out.mean_error);
    out.std_error = std::sqrt(ss / (n - 1.0));
  } else if (!std::isfinite(out.mean_error)) {
    out.std_error = kNaN;
  }
  return out;
}

std::vector<GridRow> run_grid(const std::vector<RunConfig>& configs, const GridOptions& options) {
  std::vector<GridRow> rows(configs.size());
  std::map<std::string, std::shared_ptr<const Problem>> problems;
  std::mutex problems_mutex;

  auto problem_for = [&](const RunConfig& c) -> std::shared_ptr<const Problem> {
    std::ostringstream key;
    key << c.dataset << '|' << c.data_dir.string() << '|' << c.agents << '|' << c.synthetic.rows
        << '|' << c.synthetic.dim << '|' << c.synthetic.condition_number << '|'
        << c.synthetic.seed;
    std::lock_guard lock(problems_mutex);
    auto it = problems.find(key.str());
    if (it != problems.end()) return it->second;
    auto p = std::make_shared<const Problem>(load_problem(c));
    problems.emplace(key.str(), p);
    return p;
  };

  auto run_cell = [&](std::size_t i) {
    const RunConfig& c = configs[i];
    GridRow& row = rows[i];
    row.noise = c.noise;
    row.dataset = dataset_label(c.dataset);
    row.method = c.method;
    row.reps = c.monte_carlo_reps;
    try {
      const auto started = std::chrono::steady_clock::now();
      const auto problem = problem_for(c);
      RunConfig first = c;
      const RunTrace trace = run(first, *problem);
      if (options.trace_dir) {
        emit(trace, TraceFormat::csv, *options.trace_dir);
        emit(trace, TraceFormat::json, *options.trace_dir);
      }
      row.single_error = trace.summary.final_error;
      row.iterations = trace.summary.iterations;
      row.noise_expected = trace.summary.noise_expected;
      if (c.monte_carlo_reps > 1) {
        RunConfig rest = c;
        const MonteCarloResult mc = run_monte_carlo(rest, *problem);
        row.mean_error = mc.mean_error;
        row.std_error = mc.std_error;
        row.diverged = mc.diverged;
        row.noise_realized = mc.mean_noise_realized;
      } else {
        row.mean_error = trace.summary.final_error;
        row.std_error = 0.0;
        row.diverged = trace.summary.diverged ? 1 : 0;
        row.noise_realized = trace.summary.noise_realized;
      }
      row.wall_time_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    } catch (const std::exception& e) {
      row.error = e.what();
      row.single_error = row.mean_error = row.std_error = kNaN;
    }
  };

  const int threads = std::max(1, std::min<int>(options.threads, static_cast<int>(configs.size())));
  if (threads <= 1) {
    for (std::size_t i = 0; i < configs.size(); ++i) run_cell(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (int k = 0; k < threads; ++k) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < configs.size(); i = next++) run_cell(i);
      });
    }
  }
  return rows;
}

void write_grid_csv(std::ostream& out, const std::vector<GridRow>& rows) {
  out << "noise,dataset,method,noise_expected,noise_realized,final_error,mean_error,std_error,"
         "reps,diverged,iterations,wall_time_s,error\n";
  for (const auto& r : rows) {
    std::string error = r.error;
    std::replace(error.begin(), error.end(), ',', ';');
    std::replace(error.begin(), error.end(), '\n', ' ');
    out << to_string(r.noise) << ',' << r.dataset << ',' << to_string(r.method) << ','
        << format_double(r.noise_expected) << ',' << format_double(r.noise_realized) << ','
        << format_double(r.single_error) << ',' << format_double(r.mean_error) << ','
        << format_double(r.std_error) << ',' << r.reps << ',' << r.diverged << ','
        << r.iterations << ',' << format_double(r.wall_time_s) << ',' << error << '\n';
  }
}

std::vector<RunConfig> parse_grid_config(const json& j) {
  RunConfig defaults;
  if (j.contains("defaults")) defaults = run_config_from_json(j["defaults"], defaults);
  std::vector<RunConfig> out;
  if (!j.contains("runs")) return out;
  for (const auto& entry : j["runs"]) {
    json cell = entry;
    std::vector<std::string> methods;
    const json& method = cell.contains("method") ? cell["method"] : json(to_string(defaults.method));
    if (method.is_array()) {
      for (const auto& m : method) methods.push_back(m.get<std::string>());
    } else if (method.get<std::string>() == "all") {
      for (Method m : kAllMethods) methods.emplace_back(to_string(m));
    } else {
      methods.push_back(method.get<std::string>());
    }
    for (const auto& m : methods) {
      cell["method"] = m;
      RunConfig c = run_config_from_json(cell, defaults);
      c.validate();
      out.push_back(std::move(c));
    }
  }
  return out;
}

std::vector<RunConfig> load_grid_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open grid config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  auto configs = parse_grid_config(j);
  // Relative data directories are resolved against the config file.
  for (auto& c : configs) {
    if (c.data_dir.is_relative()) c.data_dir = path.parent_path() / c.data_dir;
  }
  return configs;
}

std::string version_string() { return IPG_VERSION_STRING; }

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_trace_csv(std::ostream& out, const RunTrace& trace) {
  out << "t,err,step_delta,bound_t1,u_t,bound_t2,diverged\n";
  for (const auto& r : trace.rows) {
    out << r.t << ',' << format_double(r.err) << ',' << format_double(r.step_delta) << ','
        << format_double(r.bound_t1) << ',' << format_double(r.u_t) << ','
        << format_double(r.bound_t2) << ',' << (r.diverged ? 1 : 0) << '\n';
  }
}

std::vector<TraceRow> parse_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "t,err,step_delta,bound_t1,u_t,bound_t2,diverged") {
    throw std::runtime_error("parse_trace_csv: unexpected header");
  }
  std::vector<TraceRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) {
      throw std::runtime_error("parse_trace_csv: line " + std::to_string(lineno) +
                               " has " + std::to_string(cells.size()) + " fields");
    }
    auto num = [](const std::string& s) { return std::strtod(s.c_str(), nullptr); };
    TraceRow r;
    r.t = std::stoi(cells[0]);
    r.err = num(cells[1]);
    r.step_delta = num(cells[2]);
    r.bound_t1 = num(cells[3]);
    r.u_t = num(cells[4]);
    r.bound_t2 = num(cells[5]);
    r.diverged = cells[6] == "1";
    rows.push_back(r);
  }
  return rows;
}

json trace_to_json(const RunTrace& trace) {
  json rows = json::object();
  json t = json::array(), err = json::array(), step = json::array(), b1 = json::array(),
       u = json::array(), b2 = json::array(), div = json::array();
  for (const auto& r : trace.rows) {
    t.push_back(r.t);
    err.push_back(number(r.err));
    step.push_back(number(r.step_delta));
    b1.push_back(number(r.bound_t1));
    u.push_back(number(r.u_t));
    b2.push_back(number(r.bound_t2));
    div.push_back(r.diverged);
  }
  rows["t"] = t;
  rows["err"] = err;
  rows["step_delta"] = step;
  rows["bound_t1"] = b1;
  rows["u_t"] = u;
  rows["bound_t2"] = b2;
  rows["diverged"] = div;
  const auto& s = trace.summary;
  return json{{"version", version_string()},
              {"config", to_json(trace.config)},
              {"solver", to_json(trace.solver)},
              {"summary",
               {{"final_error", number(s.final_error)},
                {"iterations", s.iterations},
                {"diverged", s.diverged},
                {"diverged_at", s.diverged_at},
                {"stop_reason", s.stop_reason},
                {"noise_expected", number(s.noise_expected)},
                {"noise_realized", number(s.noise_realized)},
                {"noise_worst", number(s.noise_worst)},
                {"skipped_updates", s.skipped_updates}}},
              {"rows", rows}};
}

RunTrace trace_from_json(const json& j) {
  RunTrace trace;
  trace.config = run_config_from_json(j.at("config"));
  trace.solver = solver_config_from_json(j.at("solver"));
  const auto& s = j.at("summary");
  trace.summary.final_error = number_from(s.at("final_error"));
  trace.summary.iterations = s.at("iterations").get<int>();
  trace.summary.diverged = s.at("diverged").get<bool>();
  trace.summary.diverged_at = s.at("diverged_at").get<int>();
  trace.summary.stop_reason = s.at("stop_reason").get<std::string>();
  trace.summary.noise_expected = number_from(s.at("noise_expected"));
  trace.summary.noise_realized = number_from(s.at("noise_realized"));
  trace.summary.noise_worst = number_from(s.at("noise_worst"));
  trace.summary.skipped_updates = s.at("skipped_updates").get<int>();
  const auto& rows = j.at("rows");
  const std::size_t n = rows.at("t").size();
  for (std::size_t i = 0; i < n; ++i) {
    TraceRow r;
    r.t = rows["t"][i].get<int>();
    r.err = number_from(rows["err"][i]);
    r.step_delta = number_from(rows["step_delta"][i]);
    r.bound_t1 = number_from(rows["bound_t1"][i]);
    r.u_t = number_from(rows["u_t"][i]);
    r.bound_t2 = number_from(rows["bound_t2"][i]);
    r.diverged = rows["diverged"][i].get<bool>();
    trace.rows.push_back(r);
  }
  return trace;
}

std::string trace_basename(const RunConfig& config) {
  return dataset_label(config.dataset) + "_" + std::string(to_string(config.method)) + "_" +
         std::string(to_string(config.noise)) + "_s" + std::to_string(config.seed);
}

std::filesystem::path emit(const RunTrace& trace, TraceFormat format,
                           const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto path =
      out_dir / (trace_basename(trace.config) + (format == TraceFormat::csv ? ".csv" : ".json"));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (format == TraceFormat::csv) {
    write_trace_csv(out, trace);
  } else {
    out << trace_to_json(trace).dump(2) << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
  return path;
}

}  // namespace ipg
