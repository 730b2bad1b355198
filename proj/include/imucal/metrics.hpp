#pragma once

// Error statistics over calibration trials and result-table rendering.
//
// Extrinsic RMSE pools the squared error norm over trials and IMUs:
//   p_rmse = sqrt(mean_{trials, n=1..N} |p_est - p_true|^2)
// Orientation and misalignment use the geodesic angle instead of the norm;
// misalignment also includes the base gyroscope (n = 0). Auxiliary-state
// RMSE is per component: pooled over time steps, IMUs and axes.

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "imucal/calib_problem.hpp"
#include "imucal/rig.hpp"
#include "imucal/solver.hpp"

namespace imucal {

struct TrialResult {
  ParameterVector initial;    ///< X0
  ParameterVector estimate;   ///< X*
  GroundTruthLog truth;
  SolveReport report;
};

/// Squared-error sums of one or more trials. Adding sums and then taking
/// rmse() equals pooling all trials at once.
struct ErrorSums {
  double position = 0.0;       ///< [m^2]
  double orientation = 0.0;    ///< [rad^2]
  double misalignment = 0.0;   ///< [rad^2]
  long extrinsic_count = 0;    ///< IMUs n >= 1
  long misalignment_count = 0; ///< IMUs n >= 0

  double alpha_initial = 0.0;
  double alpha_final = 0.0;
  double accel_bias_initial = 0.0;
  double accel_bias_final = 0.0;
  double gyro_bias_initial = 0.0;
  double gyro_bias_final = 0.0;
  long alpha_count = 0;        ///< scalar components
  long bias_count = 0;         ///< scalar components per bias kind

  ErrorSums& operator+=(const ErrorSums& other);
};

/// Throws std::invalid_argument if estimate and truth disagree in size or
/// the truth log lacks the per-timestep states.
ErrorSums error_sums(const TrialResult& trial);

struct ExtrinsicRmse {
  double position_mm = 0.0;
  double orientation_deg = 0.0;
  double misalignment_deg = 0.0;
};

struct AuxStateRmse {
  double alpha = 0.0;        ///< [rad/s^2]
  double accel_bias = 0.0;   ///< [m/s^2]
  double gyro_bias = 0.0;    ///< [rad/s]
};

struct AuxStateComparison {
  AuxStateRmse initial;
  AuxStateRmse final_estimate;
};

ExtrinsicRmse extrinsic_rmse(const ErrorSums& sums);
AuxStateComparison aux_state_rmse(const ErrorSums& sums);

/// Throws std::invalid_argument on an empty list.
ExtrinsicRmse rmse_extrinsics(const std::vector<TrialResult>& trials);
/// Throws std::invalid_argument on an empty list or missing ground truth.
AuxStateComparison rmse_aux_states(const std::vector<TrialResult>& trials);

using Cell = std::variant<std::string, double, long>;

struct Table {
  std::string title;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
};

enum class TableFormat { kText, kJson, kCsv };

inline constexpr int kReportFormatVersion = 1;

/// Parses "text", "json" or "csv".
std::optional<TableFormat> parse_table_format(const std::string& name);

/// Deterministic rendering. JSON carries format_version and round-trips
/// doubles exactly; CSV uses shortest round-trip doubles; text is aligned
/// for reading.
std::string render_table(const Table& table, TableFormat format);
std::string render_tables(const std::vector<Table>& tables, TableFormat format);

/// Inverse of the JSON rendering of a single table.
Table parse_table_json(const std::string& document);

}  // namespace imucal
