#pragma once

// Simulation trials and the scaled experiment protocols behind
// `imucal reproduce`.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "imucal/calib_problem.hpp"
#include "imucal/io.hpp"
#include "imucal/metrics.hpp"
#include "imucal/simulator.hpp"
#include "imucal/solver.hpp"

namespace imucal {

/// Perturbs every non-base pose of `truth`; misalignments are reset to
/// identity (the zero-misalignment reference).
ExtrinsicSet perturbed_guess(const ExtrinsicSet& truth, const InitialGuessSpec& spec);

/// Fit statistics of a converged solve.
struct FitQuality {
  long residuals = 0;
  long parameters = 0;
  double reduced_chi2 = 0.0;   ///< final cost / (residuals - parameters)
  /// True when the solve did not converge or the reduced chi-square exceeds
  /// the limit; a plausible sign of a wrong local minimum.
  bool suspect = false;
};

inline constexpr double kSuspectChi2 = 1.5;

FitQuality fit_quality(const CalibrationProblem& problem, const SolveReport& report);

struct CalibrationOutcome {
  ParameterVector initial;
  ParameterVector estimate;   ///< slack gauge pinned to `initial`
  SolveReport report;
  FitQuality fit;
};

/// Builds the initial state from `guess`, assembles and solves.
CalibrationOutcome calibrate(const MeasurementSeries& measurements, const ExtrinsicSet& guess,
                             const ProblemOptions& problem, const SolverOptions& solver);

struct TrialSetup {
  RigScenario scenario;
  MotionProfile motion;
  double dt = 0.01;
  ProblemOptions problem;
  SolverOptions solver;
  InitialGuessSpec guess;
};

struct TrialOutcome {
  TrialResult result;
  FitQuality fit;
};

/// Simulates, builds the initial guess and solves.
TrialOutcome run_trial(const TrialSetup& setup);

/// Runs `count` independent tasks on up to `jobs` threads. Results are
/// stored by index, so the output does not depend on scheduling.
template <class T>
std::vector<T> run_parallel(int count, int jobs, const std::function<T(int)>& task);

/// Reference setup for the simulation studies: four-IMU rig, reference
/// noise, 1 deg misalignment, excitation motion, 5 mm / 5 deg guess.
TrialSetup reference_setup(double duration, std::uint64_t seed);

struct ExperimentOptions {
  int trials = 20;            ///< per configuration; the grid uses `grid_trials`
  int grid_trials = 5;
  int jobs = 1;
  double duration = 30.0;
  std::uint64_t seed = 2024;
  /// Orientation errors of the robustness grid [deg].
  std::vector<double> grid_orientation_deg{0.0, 30.0, 60.0, 90.0};
  std::vector<double> grid_position_mm{0.0, 10.0, 20.0, 30.0};
  /// Called after each finished trial with a short description.
  std::function<void(const std::string&)> progress;
};

/// Per-trial numbers kept by the studies.
struct TrialSummary {
  ExtrinsicRmse extrinsics;
  AuxStateComparison aux;
  ErrorSums sums;
  SolveStatus status = SolveStatus::kMaxIterations;
  int iterations = 0;
  double reduced_chi2 = 0.0;
  bool suspect = false;
  double wall_time_s = 0.0;
};

TrialSummary summarize(const TrialOutcome& outcome);

struct StudyResult {
  std::vector<TrialSummary> trials;
  ErrorSums pooled;
};

/// `trials` trials of the reference setup; trial i uses data seed
/// derive_seed(seed, i) and guess seed derive_seed(seed, 1'000'000 + i).
StudyResult rmse_study(const ExperimentOptions& options, bool estimate_misalignment);

struct GridCell {
  double position_mm = 0.0;
  double orientation_deg = 0.0;
  StudyResult study;
};

/// Fixed-magnitude perturbations on the grid; every cell reuses the same
/// `grid_trials` datasets.
std::vector<GridCell> robustness_grid(const ExperimentOptions& options);

/// Experiment ids accepted by `imucal reproduce`.
const std::vector<std::string>& experiment_ids();

/// Runs one experiment and returns its tables. Throws std::invalid_argument
/// on an unknown id.
std::vector<Table> reproduce(const std::string& experiment_id, const ExperimentOptions& options);

// Table builders, shared with the acceptance suite.
Table study_table(const std::string& title, const StudyResult& study, bool per_trial);
Table ablation_table(const StudyResult& without, const StudyResult& with);
Table aux_state_table(const StudyResult& study);
std::vector<Table> grid_tables(const std::vector<GridCell>& cells);

}  // namespace imucal

#include "imucal/detail/run_parallel.hpp"
