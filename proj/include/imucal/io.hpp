#pragma once

// File formats: headered CSV datasets, JSON ground truth, JSON estimates and
// the JSON run configuration. Every document carries format_version = 1.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include <json.hpp>

#include "imucal/calib_problem.hpp"
#include "imucal/observability.hpp"
#include "imucal/rig.hpp"
#include "imucal/simulator.hpp"
#include "imucal/solver.hpp"

namespace imucal {

inline constexpr int kFormatVersion = 1;

/// Raised for malformed input files and configurations.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dataset: four header lines, then one row per (k, n), k-major.
//   # imucal dataset format_version=1
//   # num_imus=4 num_samples=3000 dt=0.01
//   # noise=[{"sigma_a":...,"sigma_g":...,"sigma_ba":...,"sigma_bg":...,"dt":...}, ...]
//   k,n,ax,ay,az,gx,gy,gz
void write_dataset(std::ostream& out, const MeasurementSeries& measurements);
MeasurementSeries read_dataset(std::istream& in);

nlohmann::ordered_json to_json(const ExtrinsicSet& extrinsics);
ExtrinsicSet extrinsics_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const ImuNoiseSpec& noise);
ImuNoiseSpec noise_from_json(const nlohmann::json& j);

nlohmann::ordered_json to_json(const GroundTruthLog& truth);
GroundTruthLog ground_truth_from_json(const nlohmann::json& j);

nlohmann::ordered_json to_json(const SolveReport& report, bool with_log);
nlohmann::ordered_json to_json(const RankReport& report);

/// Per-timestep states of a parameter vector (alpha, biases) as arrays.
nlohmann::ordered_json states_to_json(const ParameterVector& x);
/// Fills alpha and biases of `x` from states_to_json output.
void states_from_json(const nlohmann::json& j, ParameterVector& x);

/// Trajectory CSV with header
///   t,ax,ay,az,wx,wy,wz,alx,aly,alz,gx,gy,gz
/// (base linear acceleration, angular rate, angular acceleration and
/// gravity, all in the base frame). Samples must be uniformly spaced.
Trajectory read_trajectory_csv(std::istream& in);

struct InitialGuessSpec {
  double position_std_mm = 5.0;
  double orientation_std_deg = 5.0;
  /// true: every IMU is displaced by exactly the given magnitudes in a
  /// random direction; false: per-axis normal position and normal angle.
  bool fixed_magnitude = false;
  std::uint64_t seed = 1;
};

struct RunConfig {
  RigScenario scenario;
  MotionProfile motion;
  std::optional<std::string> trajectory_csv;   ///< replaces `motion` when set
  double dt = 0.01;
  ProblemOptions problem;
  SolverOptions solver;
  InitialGuessSpec initial_guess;
  RankOptions rank;
};

/// Defaults: the four-IMU reference rig, 30 s, reference noise, excitation
/// motion, misalignment estimated.
RunConfig default_config();

/// Parses and validates a configuration document. Unknown keys, wrong types
/// and invalid values raise FormatError. Missing keys keep their defaults.
RunConfig parse_config(const nlohmann::json& j);
RunConfig parse_config_text(const std::string& text);
nlohmann::ordered_json to_json(const RunConfig& config);

/// Reads a whole file; throws FormatError when it cannot be opened.
std::string read_file(const std::string& path);
/// Writes `content` to `path` through a temporary file and rename, so a
/// failed write leaves no partial file. Throws std::runtime_error.
void write_file(const std::string& path, const std::string& content);

}  // namespace imucal
