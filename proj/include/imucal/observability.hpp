#pragma once

// Rank test of the whitened Jacobian at a given state.
//
// The test is stated on the calibration parameters (poses and, when
// estimated, misalignments) after profiling out the per-timestep variables:
// the rank of P J_cal, where P projects onto the orthogonal complement of the
// columns of J_aux. The full Jacobian is never full rank (a constant
// accelerometer bias common to all IMUs cancels, and so does a constant
// alpha offset paired with bias shifts), so the raw rank of J is reported
// for information only.

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "imucal/calib_problem.hpp"

namespace imucal {

enum class RankMethod { kAuto, kDense, kStructured };

struct RankOptions {
  double threshold = 1e-8;    ///< relative to the largest calibration singular value
  RankMethod method = RankMethod::kAuto;
  int dense_limit = 500;      ///< kAuto uses the dense path up to this many parameters
};

struct RankReport {
  int dimension = 0;                  ///< calibration parameters
  int rank = 0;
  bool deficient = false;
  double threshold = 0.0;
  /// Largest singular value of the calibration columns before profiling;
  /// singular values count toward the rank above threshold times this.
  double reference_singular_value = 0.0;
  std::vector<double> singular_values;   ///< descending
  Eigen::MatrixXd null_directions;       ///< dimension x (dimension - rank), unit columns
  std::vector<std::string> labels;       ///< one per calibration parameter
  int full_dimension = 0;             ///< all tangent parameters
  int full_rank = 0;                  ///< rank of the whole Jacobian
  std::string method;

  /// Smallest `count` singular values, ascending.
  std::vector<double> smallest(int count) const;
};

/// Throws std::domain_error if the Jacobian contains non-finite entries and
/// std::invalid_argument on a bad threshold or state.
RankReport check_rank(const CalibrationProblem& problem, const ParameterVector& x,
                      const RankOptions& options = {});

/// Names of the calibration parameters in tangent order, e.g. "p1.x",
/// "q2.z", "m0.y".
std::vector<std::string> calibration_labels(const ParameterLayout& layout);

/// Rows and columns of the Jacobian cell for timestep k (1-based, k = K is
/// the last sample) and IMU n. Rows: 12 before the last sample, 6 at it.
/// Columns with misalignment: 12 for the base (alpha, b_a, b_g, misalignment)
/// and 15 otherwise (b_a, b_g, p, q, misalignment); 3 fewer without.
std::pair<int, int> jacobian_block_dims(int k, int num_samples, int n, bool estimate_misalignment);

}  // namespace imucal
