#include "imucal/experiments.hpp"

#include <algorithm>
#include <cstdio>
#include <mutex>
#include <stdexcept>

namespace imucal {

namespace {

constexpr std::uint64_t kGuessStream = 1'000'000;

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

long count_converged(const StudyResult& s) {
  long n = 0;
  for (const auto& t : s.trials) n += t.status == SolveStatus::kConverged;
  return n;
}

long count_suspect(const StudyResult& s) {
  long n = 0;
  for (const auto& t : s.trials) n += t.suspect;
  return n;
}

StudyResult run_study(const ExperimentOptions& options, int trials, bool estimate_misalignment,
                      const InitialGuessSpec& guess, std::uint64_t guess_stream,
                      const std::string& label) {
  std::mutex progress_mutex;
  const std::function<TrialSummary(int)> task = [&](int i) {
    TrialSetup setup = reference_setup(options.duration, derive_seed(options.seed, i));
    setup.problem.estimate_misalignment = estimate_misalignment;
    setup.guess = guess;
    setup.guess.seed = derive_seed(options.seed, guess_stream + i);
    const TrialSummary s = summarize(run_trial(setup));
    if (options.progress) {
      const std::lock_guard<std::mutex> lock(progress_mutex);
      char buf[256];
      std::snprintf(buf, sizeof(buf), "%s trial %d: %s, %d iterations, p %.4f mm, q %.4f deg, %.1f s",
                    label.c_str(), i, to_string(s.status).c_str(), s.iterations,
                    s.extrinsics.position_mm, s.extrinsics.orientation_deg, s.wall_time_s);
      options.progress(buf);
    }
    return s;
  };
  StudyResult out;
  out.trials = run_parallel<TrialSummary>(trials, options.jobs, task);
  for (const auto& t : out.trials) out.pooled += t.sums;
  return out;
}

void check_options(const ExperimentOptions& o) {
  if (o.trials < 1 || o.grid_trials < 1) throw std::invalid_argument("experiment: trials must be >= 1");
  if (o.jobs < 1) throw std::invalid_argument("experiment: jobs must be >= 1");
  if (!(o.duration >= 1.0)) throw std::invalid_argument("experiment: duration must be >= 1 s");
}

}  // namespace

ExtrinsicSet perturbed_guess(const ExtrinsicSet& truth, const InitialGuessSpec& spec) {
  Rng rng(spec.seed);
  ExtrinsicSet guess = truth;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int n = 0; n < truth.num_imus(); ++n) {
    guess.misalignment[n] = UnitQuaternion();
    if (n == 0) continue;
    const double pos = spec.position_std_mm * 1e-3;
    const double ang = deg2rad(spec.orientation_std_deg);
    if (spec.fixed_magnitude) {
      guess.position[n] += pos * sample_unit_vector(rng);
      guess.orientation[n] = truth.orientation[n] * sample_fixed_angle_rotation(ang, rng);
    } else {
      Vec3 d;
      for (int i = 0; i < 3; ++i) d[i] = pos * normal(rng);
      guess.position[n] += d;
      guess.orientation[n] = truth.orientation[n] * sample_rotation_perturbation(ang, rng);
    }
  }
  return guess;
}

FitQuality fit_quality(const CalibrationProblem& problem, const SolveReport& report) {
  FitQuality f;
  f.residuals = 3 * static_cast<long>(problem.blocks().size());
  f.parameters = problem.layout().dimension();
  const long dof = f.residuals - f.parameters;
  f.reduced_chi2 = dof > 0 ? report.final_cost / static_cast<double>(dof) : 0.0;
  f.suspect = !report.converged() || f.reduced_chi2 > kSuspectChi2;
  return f;
}

CalibrationOutcome calibrate(const MeasurementSeries& measurements, const ExtrinsicSet& guess,
                             const ProblemOptions& problem_options, const SolverOptions& solver) {
  CalibrationOutcome out;
  out.initial = initial_guess(measurements, guess);
  const CalibrationProblem problem = assemble(measurements, problem_options, out.initial);
  auto [estimate, report] = solve(problem, out.initial, solver);
  out.fit = fit_quality(problem, report);
  out.estimate = pin_slack_gauge(estimate, out.initial);
  out.report = std::move(report);
  return out;
}

TrialOutcome run_trial(const TrialSetup& setup) {
  const Trajectory trajectory = make_excitation_trajectory(setup.scenario.duration, setup.dt, setup.motion);
  Simulation sim = simulate(setup.scenario, trajectory);
  CalibrationOutcome c = calibrate(sim.measurements, perturbed_guess(sim.truth.extrinsics, setup.guess),
                                   setup.problem, setup.solver);
  TrialOutcome out;
  out.result.initial = std::move(c.initial);
  out.result.estimate = std::move(c.estimate);
  out.result.report = std::move(c.report);
  out.result.truth = std::move(sim.truth);
  out.fit = c.fit;
  return out;
}

TrialSetup reference_setup(double duration, std::uint64_t seed) {
  TrialSetup s;
  s.scenario = RigScenario::reference(duration, seed);
  s.motion = MotionProfile::excitation();
  s.dt = ImuNoiseSpec::reference().dt;
  return s;
}

TrialSummary summarize(const TrialOutcome& o) {
  TrialSummary s;
  s.sums = error_sums(o.result);
  s.extrinsics = extrinsic_rmse(s.sums);
  s.aux = aux_state_rmse(s.sums);
  s.status = o.result.report.status;
  s.iterations = o.result.report.iterations;
  s.reduced_chi2 = o.fit.reduced_chi2;
  s.suspect = o.fit.suspect;
  s.wall_time_s = o.result.report.wall_time_s;
  return s;
}

StudyResult rmse_study(const ExperimentOptions& options, bool estimate_misalignment) {
  check_options(options);
  return run_study(options, options.trials, estimate_misalignment, InitialGuessSpec{}, kGuessStream,
                   estimate_misalignment ? "with misalignment" : "without misalignment");
}

std::vector<GridCell> robustness_grid(const ExperimentOptions& options) {
  check_options(options);
  std::vector<GridCell> cells;
  std::uint64_t cell_index = 0;
  for (double dp : options.grid_position_mm) {
    for (double dq : options.grid_orientation_deg) {
      InitialGuessSpec guess;
      guess.position_std_mm = dp;
      guess.orientation_std_deg = dq;
      guess.fixed_magnitude = true;
      GridCell cell;
      cell.position_mm = dp;
      cell.orientation_deg = dq;
      const std::string label = "grid " + fmt("%g mm", dp) + " / " + fmt("%g deg", dq);
      cell.study = run_study(options, options.grid_trials, true, guess,
                             2 * kGuessStream + 1000 * cell_index, label);
      cells.push_back(std::move(cell));
      ++cell_index;
    }
  }
  return cells;
}

const std::vector<std::string>& experiment_ids() {
  static const std::vector<std::string> ids{"rmse_study", "misalign_ablation", "robustness_grid",
                                            "aux_states"};
  return ids;
}

Table study_table(const std::string& title, const StudyResult& study, bool per_trial) {
  Table t;
  t.title = title;
  t.columns = {"trial", "status", "iterations", "p_rmse_mm", "q_rmse_deg", "misalign_rmse_deg",
               "reduced_chi2"};
  if (per_trial) {
    for (std::size_t i = 0; i < study.trials.size(); ++i) {
      const auto& s = study.trials[i];
      t.rows.push_back({std::to_string(i), to_string(s.status), static_cast<long>(s.iterations),
                        s.extrinsics.position_mm, s.extrinsics.orientation_deg,
                        s.extrinsics.misalignment_deg, s.reduced_chi2});
    }
  }
  const ExtrinsicRmse pooled = extrinsic_rmse(study.pooled);
  t.rows.push_back({std::string("all"),
                    std::to_string(count_converged(study)) + "/" + std::to_string(study.trials.size()) +
                        " converged",
                    std::string("-"), pooled.position_mm, pooled.orientation_deg,
                    pooled.misalignment_deg, std::string("-")});
  return t;
}

Table ablation_table(const StudyResult& without, const StudyResult& with) {
  const ExtrinsicRmse a = extrinsic_rmse(without.pooled);
  const ExtrinsicRmse b = extrinsic_rmse(with.pooled);
  Table t;
  t.title = "Averaged RMSE with and without misalignment estimation";
  t.columns = {"trials", "without_p_mm", "without_q_deg", "with_p_mm", "with_q_deg",
               "with_misalign_deg", "p_ratio", "q_ratio"};
  t.rows.push_back({static_cast<long>(with.trials.size()), a.position_mm, a.orientation_deg,
                    b.position_mm, b.orientation_deg, b.misalignment_deg,
                    a.position_mm / b.position_mm, a.orientation_deg / b.orientation_deg});
  return t;
}

Table aux_state_table(const StudyResult& study) {
  const AuxStateComparison c = aux_state_rmse(study.pooled);
  long improved = 0;
  for (const auto& s : study.trials) {
    improved += s.aux.final_estimate.alpha < s.aux.initial.alpha &&
                s.aux.final_estimate.accel_bias < s.aux.initial.accel_bias &&
                s.aux.final_estimate.gyro_bias < s.aux.initial.gyro_bias;
  }
  Table t;
  t.title = "RMSE of angular accelerations and biases (" + std::to_string(improved) + "/" +
            std::to_string(study.trials.size()) + " trials improved on all three)";
  t.columns = {"state", "initial_rmse", "final_rmse"};
  t.rows.push_back({std::string("alpha [rad/s^2]"), c.initial.alpha, c.final_estimate.alpha});
  t.rows.push_back({std::string("accel_bias [m/s^2]"), c.initial.accel_bias, c.final_estimate.accel_bias});
  t.rows.push_back({std::string("gyro_bias [rad/s]"), c.initial.gyro_bias, c.final_estimate.gyro_bias});
  return t;
}

std::vector<Table> grid_tables(const std::vector<GridCell>& cells) {
  std::vector<double> dps;
  std::vector<double> dqs;
  for (const auto& c : cells) {
    if (std::find(dps.begin(), dps.end(), c.position_mm) == dps.end()) dps.push_back(c.position_mm);
    if (std::find(dqs.begin(), dqs.end(), c.orientation_deg) == dqs.end()) dqs.push_back(c.orientation_deg);
  }
  const auto find = [&](double dp, double dq) -> const GridCell* {
    for (const auto& c : cells) {
      if (c.position_mm == dp && c.orientation_deg == dq) return &c;
    }
    return nullptr;
  };
  const auto make = [&](const std::string& title, auto value) {
    Table t;
    t.title = title;
    t.columns = {"dp_mm"};
    for (double dq : dqs) t.columns.push_back("dq_" + fmt("%g", dq) + "deg");
    for (double dp : dps) {
      std::vector<Cell> row{dp};
      for (double dq : dqs) {
        const GridCell* c = find(dp, dq);
        row.push_back(c ? value(*c) : Cell{std::string("-")});
      }
      t.rows.push_back(std::move(row));
    }
    return t;
  };
  return {
      make("Position RMSE [mm] vs initial guess error",
           [](const GridCell& c) { return Cell{extrinsic_rmse(c.study.pooled).position_mm}; }),
      make("Orientation RMSE [deg] vs initial guess error",
           [](const GridCell& c) { return Cell{extrinsic_rmse(c.study.pooled).orientation_deg}; }),
      make("Flagged trials (not converged or reduced chi-square > 1.5) vs initial guess error",
           [](const GridCell& c) {
             return Cell{std::to_string(count_suspect(c.study)) + "/" +
                         std::to_string(c.study.trials.size())};
           }),
  };
}

std::vector<Table> reproduce(const std::string& id, const ExperimentOptions& options) {
  check_options(options);
  if (id == "rmse_study") {
    const StudyResult s = rmse_study(options, true);
    return {study_table("RMSE of estimated extrinsic parameters", s, true)};
  }
  if (id == "misalign_ablation") {
    const StudyResult without = rmse_study(options, false);
    const StudyResult with = rmse_study(options, true);
    return {ablation_table(without, with),
            study_table("Without misalignment estimation", without, true),
            study_table("With misalignment estimation", with, true)};
  }
  if (id == "aux_states") {
    const StudyResult s = rmse_study(options, true);
    return {aux_state_table(s)};
  }
  if (id == "robustness_grid") return grid_tables(robustness_grid(options));
  throw std::invalid_argument("unknown experiment '" + id + "'");
}

}  // namespace imucal
