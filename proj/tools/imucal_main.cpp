// imucal: simulate, calibrate, check, evaluate, reproduce.
//
// Exit codes: 0 success, 1 I/O or internal failure, 2 invalid input,
// 3 solver did not converge, 4 rank deficiency or numerical failure.

#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "imucal/experiments.hpp"
#include "imucal/io.hpp"
#include "imucal/metrics.hpp"
#include "imucal/observability.hpp"
#include "imucal/simulator.hpp"

namespace {

using namespace imucal;
using ojson = nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitInvalid = 2;
constexpr int kExitNotConverged = 3;
constexpr int kExitDegenerate = 4;

/// Invalid user input; maps to exit code 2.
struct InvalidInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "text";
  int verbosity = 0;
};

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("IMUCAL_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  const std::string s(v);
  std::uint64_t seed = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), seed);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw InvalidInput("IMUCAL_SEED must be a non-negative integer, got '" + s + "'");
  }
  return seed;
}

/// --seed wins over IMUCAL_SEED, which wins over the configuration.
std::uint64_t effective_seed(const CommonArgs& a, std::uint64_t configured) {
  if (a.seed) return *a.seed;
  if (auto e = env_seed()) return *e;
  return configured;
}

RunConfig load_config(const std::string& path) {
  if (path.empty()) return default_config();
  return parse_config_text(read_file(path));
}

TableFormat table_format(const std::string& name) {
  const auto f = parse_table_format(name);
  if (!f) throw InvalidInput("unknown format '" + name + "' (text, json or csv)");
  return *f;
}

void require_output_dir(const std::string& path) {
  if (path.empty()) return;
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent)) {
    throw InvalidInput("output directory '" + parent.string() + "' does not exist");
  }
}

void emit(const std::string& path, const std::string& content) {
  if (path.empty()) {
    std::cout << content;
    std::cout.flush();
  } else {
    write_file(path, content);
  }
}

std::string dump(const ojson& j) { return j.dump(2) + "\n"; }

std::string truth_path_for(const std::string& dataset_path) {
  std::filesystem::path p(dataset_path);
  p.replace_extension(".truth.json");
  return p.string();
}

MeasurementSeries load_dataset(const std::string& path) {
  std::istringstream in(read_file(path));
  return read_dataset(in);
}

ExtrinsicSet nominal_extrinsics(const RunConfig& cfg, const MeasurementSeries& m) {
  if (cfg.scenario.extrinsics.num_imus() != m.num_imus) {
    throw InvalidInput("config describes " + std::to_string(cfg.scenario.extrinsics.num_imus()) +
                       " IMUs but the dataset has " + std::to_string(m.num_imus));
  }
  return cfg.scenario.extrinsics;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// ------------------------------------------------------------------ simulate

struct SimulateArgs {
  CommonArgs common;
  std::string truth_out;
};

int run_simulate(const SimulateArgs& a) {
  RunConfig cfg = load_config(a.common.config_path);
  cfg.scenario.seed = effective_seed(a.common, cfg.scenario.seed);
  const std::string truth_out = a.truth_out.empty() ? truth_path_for(a.common.out) : a.truth_out;
  require_output_dir(a.common.out);
  require_output_dir(truth_out);

  Trajectory trajectory;
  try {
    cfg.scenario.validate();
    if (cfg.trajectory_csv) {
      std::istringstream in(read_file(*cfg.trajectory_csv));
      trajectory = read_trajectory_csv(in);
      const double dt = trajectory[1].t - trajectory[0].t;
      if (std::abs(dt - cfg.dt) > 1e-9 * cfg.dt) {
        throw InvalidInput("trajectory sampling does not match scenario.dt");
      }
    } else {
      trajectory = make_excitation_trajectory(cfg.scenario.duration, cfg.dt, cfg.motion);
    }
  } catch (const std::invalid_argument& e) {
    throw InvalidInput(e.what());
  }

  const auto start = std::chrono::steady_clock::now();
  const Simulation sim = simulate(cfg.scenario, trajectory);
  std::ostringstream data;
  write_dataset(data, sim.measurements);
  write_file(truth_out, dump(to_json(sim.truth)));
  write_file(a.common.out, data.str());
  if (a.common.verbosity > 0) {
    std::cerr << "simulated " << sim.measurements.num_samples << " samples x "
              << sim.measurements.num_imus << " IMUs in " << seconds_since(start) << " s\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------- calibrate

struct CalibrateArgs {
  CommonArgs common;
  std::string dataset;
  bool skip_check = false;
};

void print_check_hint(const RankReport& r) {
  std::cerr << "error: the problem is rank deficient (" << r.rank << " of " << r.dimension
            << " calibration directions observable); the motion does not excite every parameter.\n"
            << "hint: run `imucal check` on the dataset for the unobservable directions\n";
}

int run_calibrate(const CalibrateArgs& a) {
  RunConfig cfg = load_config(a.common.config_path);
  cfg.initial_guess.seed = effective_seed(a.common, cfg.initial_guess.seed);
  require_output_dir(a.common.out);
  const MeasurementSeries m = load_dataset(a.dataset);
  const ExtrinsicSet guess = perturbed_guess(nominal_extrinsics(cfg, m), cfg.initial_guess);

  const auto start = std::chrono::steady_clock::now();
  std::optional<RankReport> rank;
  if (!a.skip_check) {
    const ParameterVector x0 = initial_guess(m, guess);
    rank = check_rank(assemble(m, cfg.problem, x0), x0, cfg.rank);
    if (rank->deficient) {
      print_check_hint(*rank);
      return kExitDegenerate;
    }
  }

  SolverOptions solver = cfg.solver;
  solver.keep_log = a.common.verbosity > 0;
  const CalibrationOutcome c = calibrate(m, guess, cfg.problem, solver);
  if (a.common.verbosity > 0) {
    for (const auto& it : c.report.log) {
      std::cerr << "iter " << it.iteration << " cost " << it.cost << " damping " << it.damping
                << " step " << it.step_norm << (it.accepted ? "" : " rejected") << "\n";
    }
    std::cerr << to_string(c.report.status) << " after " << c.report.iterations << " iterations, "
              << seconds_since(start) << " s\n";
  }
  if (c.report.status == SolveStatus::kNumericalFailure) {
    std::cerr << "error: numerical failure: " << c.report.message << "\n"
              << "hint: run `imucal check` on the dataset to look for unobservable directions\n";
    return kExitDegenerate;
  }

  ojson j;
  j["format_version"] = kFormatVersion;
  j["kind"] = "calibration_estimate";
  j["extrinsics"] = to_json(c.estimate.extrinsics);
  j["initial_extrinsics"] = to_json(c.initial.extrinsics);
  j["report"] = to_json(c.report, a.common.verbosity >= 2);
  j["fit"] = {{"residuals", c.fit.residuals},
              {"parameters", c.fit.parameters},
              {"reduced_chi2", c.fit.reduced_chi2},
              {"suspect", c.fit.suspect}};
  if (rank) {
    j["rank"] = {{"rank", rank->rank}, {"dimension", rank->dimension}, {"deficient", rank->deficient}};
  }
  j["states"] = {{"initial", states_to_json(c.initial)}, {"final", states_to_json(c.estimate)}};
  // the only run-dependent bytes
  j["metadata"] = {{"wall_time_s", c.report.wall_time_s}};
  emit(a.common.out, dump(j));

  if (c.fit.suspect && c.report.converged()) {
    std::cerr << "warning: reduced chi-square " << c.fit.reduced_chi2
              << " is high; the estimate may be a wrong local minimum\n";
  }
  if (!c.report.converged()) {
    std::cerr << "error: " << to_string(c.report.status) << ": " << c.report.message << "\n";
    return kExitNotConverged;
  }
  return kExitOk;
}

// -------------------------------------------------------------------- check

struct CheckArgs {
  CommonArgs common;
  std::string dataset;
};

std::string rank_text(const RankReport& r) {
  std::ostringstream s;
  s << "method: " << r.method << "\n"
    << "calibration rank: " << r.rank << " / " << r.dimension << (r.deficient ? " (deficient)" : "")
    << "\n"
    << "full state rank: " << r.full_rank << " / " << r.full_dimension << "\n"
    << "threshold: " << r.threshold << " x " << r.reference_singular_value << "\n";
  const auto smallest = r.smallest(std::min(r.dimension, 3));
  s << "smallest singular values:";
  for (double v : smallest) s << " " << v;
  s << "\n";
  for (int c = 0; c < r.null_directions.cols(); ++c) {
    s << "unobservable direction " << c + 1 << ":";
    for (int i = 0; i < r.null_directions.rows(); ++i) {
      const double v = r.null_directions(i, c);
      if (std::abs(v) > 1e-3) s << " " << r.labels[i] << "=" << v;
    }
    s << "\n";
  }
  return s.str();
}

int run_check(const CheckArgs& a) {
  const RunConfig cfg = load_config(a.common.config_path);
  const TableFormat format = table_format(a.common.format);
  if (format == TableFormat::kCsv) throw InvalidInput("check supports text and json output");
  require_output_dir(a.common.out);
  const MeasurementSeries m = load_dataset(a.dataset);
  const ParameterVector x0 = initial_guess(m, nominal_extrinsics(cfg, m));
  const RankReport r = check_rank(assemble(m, cfg.problem, x0), x0, cfg.rank);
  emit(a.common.out, format == TableFormat::kJson ? dump(to_json(r)) : rank_text(r));
  return r.deficient ? kExitDegenerate : kExitOk;
}

// ----------------------------------------------------------------- evaluate

struct EvaluateArgs {
  CommonArgs common;
  std::string estimate;
  std::string truth;
};

nlohmann::json parse_json_file(const std::string& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + path + "': invalid JSON: " + e.what());
  }
}

TrialResult load_result(const std::string& estimate_path, const std::string& truth_path) {
  const auto e = parse_json_file(estimate_path);
  if (!e.is_object() || e.value("kind", "") != "calibration_estimate") {
    throw FormatError("'" + estimate_path + "' is not a calibration estimate");
  }
  if (e.value("format_version", 0) != kFormatVersion) {
    throw FormatError("'" + estimate_path + "': unsupported format_version");
  }
  TrialResult r;
  r.truth = ground_truth_from_json(parse_json_file(truth_path));
  r.initial.extrinsics = extrinsics_from_json(e.at("initial_extrinsics"));
  r.estimate.extrinsics = extrinsics_from_json(e.at("extrinsics"));
  states_from_json(e.at("states").at("initial"), r.initial);
  states_from_json(e.at("states").at("final"), r.estimate);
  return r;
}

std::vector<Table> evaluation_tables(const TrialResult& r) {
  const ErrorSums sums = error_sums(r);
  const ExtrinsicRmse ex = extrinsic_rmse(sums);
  const AuxStateComparison aux = aux_state_rmse(sums);

  Table summary;
  summary.title = "Extrinsic RMSE";
  summary.columns = {"p_rmse_mm", "q_rmse_deg", "misalign_rmse_deg"};
  summary.rows.push_back({ex.position_mm, ex.orientation_deg, ex.misalignment_deg});

  Table per_imu;
  per_imu.title = "Per-IMU errors";
  per_imu.columns = {"imu", "p_error_mm", "q_error_deg", "misalign_error_deg"};
  const ExtrinsicSet& est = r.estimate.extrinsics;
  const ExtrinsicSet& truth = r.truth.extrinsics;
  for (int n = 0; n < truth.num_imus(); ++n) {
    per_imu.rows.push_back(
        {static_cast<long>(n), 1e3 * (est.position[n] - truth.position[n]).norm(),
         rad2deg(geodesic_angle(est.orientation[n], truth.orientation[n])),
         rad2deg(geodesic_angle(est.misalignment[n], truth.misalignment[n]))});
  }

  Table states;
  states.title = "RMSE of angular accelerations and biases";
  states.columns = {"state", "initial_rmse", "final_rmse"};
  states.rows.push_back({std::string("alpha [rad/s^2]"), aux.initial.alpha, aux.final_estimate.alpha});
  states.rows.push_back(
      {std::string("accel_bias [m/s^2]"), aux.initial.accel_bias, aux.final_estimate.accel_bias});
  states.rows.push_back(
      {std::string("gyro_bias [rad/s]"), aux.initial.gyro_bias, aux.final_estimate.gyro_bias});
  return {summary, per_imu, states};
}

int run_evaluate(const EvaluateArgs& a) {
  const TableFormat format = table_format(a.common.format);
  require_output_dir(a.common.out);
  const TrialResult r = load_result(a.estimate, a.truth);
  emit(a.common.out, render_tables(evaluation_tables(r), format));
  return kExitOk;
}

// ---------------------------------------------------------------- reproduce

struct ReproduceArgs {
  CommonArgs common;
  std::string experiment;
  int trials = 20;
  int jobs = 1;
  double duration = 30.0;
};

int run_reproduce(const ReproduceArgs& a) {
  const TableFormat format = table_format(a.common.format);
  const auto& ids = experiment_ids();
  if (std::find(ids.begin(), ids.end(), a.experiment) == ids.end()) {
    std::string known;
    for (const auto& id : ids) known += (known.empty() ? "" : ", ") + id;
    throw InvalidInput("unknown experiment '" + a.experiment + "' (one of " + known + ")");
  }
  require_output_dir(a.common.out);
  ExperimentOptions o;
  o.trials = a.trials;
  o.grid_trials = a.trials;
  o.jobs = a.jobs;
  o.duration = a.duration;
  o.seed = effective_seed(a.common, o.seed);
  if (a.common.verbosity > 0) o.progress = [](const std::string& line) { std::cerr << line << "\n"; };

  const auto start = std::chrono::steady_clock::now();
  std::vector<Table> tables;
  try {
    tables = reproduce(a.experiment, o);
  } catch (const std::invalid_argument& e) {
    throw InvalidInput(e.what());
  }
  emit(a.common.out, render_tables(tables, format));
  if (a.common.verbosity > 0) std::cerr << a.experiment << " finished in " << seconds_since(start) << " s\n";
  return kExitOk;
}

// --------------------------------------------------------------------- main

void add_config(CLI::App* cmd, CommonArgs& c) {
  cmd->add_option("--config", c.config_path, "JSON run configuration")->check(CLI::ExistingFile);
}

void add_seed(CLI::App* cmd, CommonArgs& c) {
  cmd->add_option("--seed", c.seed, "random seed (overrides IMUCAL_SEED and the config)");
}

void add_format(CLI::App* cmd, CommonArgs& c) {
  cmd->add_option("--format", c.format, "output format: text, json or csv");
}

template <class F>
int guarded(F&& f) {
  try {
    return f();
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDegenerate;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-IMU extrinsic calibration"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate_cmd = app.add_subcommand("simulate", "simulate a rig and write a dataset with its ground truth");
  add_config(simulate_cmd, sim.common);
  add_seed(simulate_cmd, sim.common);
  simulate_cmd->add_option("--out", sim.common.out, "dataset CSV to write")->required();
  simulate_cmd->add_option("--truth", sim.truth_out, "ground-truth JSON (default: <out>.truth.json)");
  simulate_cmd->add_flag("-v,--verbose", sim.common.verbosity, "timing on stderr");

  CalibrateArgs cal;
  auto* calibrate_cmd = app.add_subcommand("calibrate", "estimate extrinsics from a dataset");
  calibrate_cmd->add_option("dataset", cal.dataset, "dataset CSV")->required()->check(CLI::ExistingFile);
  add_config(calibrate_cmd, cal.common);
  add_seed(calibrate_cmd, cal.common);
  calibrate_cmd->add_option("--out", cal.common.out, "estimate JSON (default: stdout)");
  calibrate_cmd->add_flag("--skip-check", cal.skip_check, "do not test observability before solving");
  calibrate_cmd->add_flag("-v,--verbose", cal.common.verbosity,
                          "iteration log on stderr; twice also writes it into the estimate");

  CheckArgs chk;
  auto* check_cmd = app.add_subcommand("check", "report the observability of the calibration parameters");
  check_cmd->add_option("dataset", chk.dataset, "dataset CSV")->required()->check(CLI::ExistingFile);
  add_config(check_cmd, chk.common);
  add_format(check_cmd, chk.common);
  check_cmd->add_option("--out", chk.common.out, "report file (default: stdout)");

  EvaluateArgs ev;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "compare an estimate against ground truth");
  evaluate_cmd->add_option("--estimate", ev.estimate, "output of calibrate")->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--truth", ev.truth, "ground truth written by simulate")->required()->check(CLI::ExistingFile);
  add_format(evaluate_cmd, ev.common);
  evaluate_cmd->add_option("--out", ev.common.out, "report file (default: stdout)");

  ReproduceArgs rep;
  auto* reproduce_cmd = app.add_subcommand("reproduce", "run one of the simulation experiments");
  reproduce_cmd->add_option("experiment", rep.experiment,
                            "rmse_study, misalign_ablation, robustness_grid or aux_states")
      ->required();
  add_seed(reproduce_cmd, rep.common);
  add_format(reproduce_cmd, rep.common);
  reproduce_cmd->add_option("--trials", rep.trials, "trials per configuration (grid: per cell)")
      ->check(CLI::PositiveNumber);
  reproduce_cmd->add_option("--jobs", rep.jobs, "concurrent trials")->check(CLI::PositiveNumber);
  reproduce_cmd->add_option("--duration", rep.duration, "trajectory length [s]")->check(CLI::Range(1.0, 1e6));
  reproduce_cmd->add_option("--out", rep.common.out, "report file (default: stdout)");
  reproduce_cmd->add_flag("-v,--verbose", rep.common.verbosity, "per-trial progress on stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  if (*simulate_cmd) return guarded([&] { return run_simulate(sim); });
  if (*calibrate_cmd) return guarded([&] { return run_calibrate(cal); });
  if (*check_cmd) return guarded([&] { return run_check(chk); });
  if (*evaluate_cmd) return guarded([&] { return run_evaluate(ev); });
  return guarded([&] { return run_reproduce(rep); });
}
