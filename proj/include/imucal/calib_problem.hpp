#pragma once

// The multi-IMU extrinsic calibration least-squares problem.
//
// Unknowns: the pose (p_n, q_n) of every IMU n >= 1 relative to the base
// IMU0, every gyroscope misalignment (optional), and per-timestep slack
// variables: accelerometer and gyroscope biases of every IMU and the base
// angular acceleration alpha_k. Four residual kinds are summed with
// isotropic Mahalanobis weights:
//
//   accel      (n >= 1, every k)  lever-arm consistency of specific force
//   gyro       (n >= 1, every k)  equal angular rate across the rigid body
//   accel walk (every n, k < K)   b_a[k+1] - b_a[k]
//   gyro walk  (every n, k < K)   b_g[k+1] - b_g[k]

#include <array>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "imucal/block_structure.hpp"
#include "imucal/rig.hpp"

namespace imucal {

struct ProblemOptions {
  bool estimate_misalignment = true;
  /// Replace the (sigma_g^2/dt)^2 term of the accel covariance with a
  /// first-order lever-arm propagation of base gyro noise.
  bool sigma_a_alt = false;
};

/// Scalar variances of the four residual kinds (each covariance is var * I).
struct ResidualVariances {
  double accel = 0.0;
  double gyro = 0.0;
  double accel_walk = 0.0;
  double gyro_walk = 0.0;
};

/// Whitening factors 1/sigma applied multiplicatively to residuals.
struct CovarianceWeights {
  double accel = 0.0;
  double gyro = 0.0;
  double accel_walk = 0.0;
  double gyro_walk = 0.0;
};

/// Variances for a pair of identical sensors:
///   accel:  2 sigma_a^2 / dt + (sigma_g^2 / dt)^2
///   gyro:   2 sigma_g^2 / dt
///   walks:  sigma_b^2 dt
ResidualVariances residual_variances(const ImuNoiseSpec& noise);

/// Pairwise generalization for sensors with different noise: white-noise
/// terms add per sensor, the gyro-squared accel term uses the base gyro and
/// the bias walks use `imu` alone.
ResidualVariances residual_variances(const ImuNoiseSpec& base, const ImuNoiseSpec& imu);

/// Throws std::invalid_argument when a variance is not finite and positive.
CovarianceWeights covariance_weights(const ResidualVariances& variances);
CovarianceWeights covariance_weights(const ImuNoiseSpec& noise);

/// Full optimization state. Extrinsics index 0 is the fixed base IMU.
struct ParameterVector {
  ExtrinsicSet extrinsics;
  std::vector<Vec3> alpha;        ///< per timestep
  std::vector<Vec3> accel_bias;   ///< index k * num_imus + n
  std::vector<Vec3> gyro_bias;    ///< index k * num_imus + n

  int num_imus() const { return extrinsics.num_imus(); }
  int num_samples() const { return static_cast<int>(alpha.size()); }
  std::size_t index(int k, int n) const { return static_cast<std::size_t>(k) * num_imus() + n; }
};

/// Maps parameters to tangent-space offsets. Time blocks hold
/// [alpha_k, b_a0, b_g0, b_a1, b_g1, ...]; the global block holds
/// [p_1, theta_1, ..., p_N, theta_N, (misalignment_0 .. misalignment_N)].
class ParameterLayout {
 public:
  ParameterLayout(int num_imus, int num_samples, bool estimate_misalignment);

  int num_imus() const { return num_imus_; }
  int num_samples() const { return num_samples_; }
  bool estimates_misalignment() const { return misalign_; }

  int time_block_size() const { return 3 + 6 * num_imus_; }
  int global_size() const { return 6 * (num_imus_ - 1) + (misalign_ ? 3 * num_imus_ : 0); }
  int dimension() const { return num_samples_ * time_block_size() + global_size(); }
  BlockStructure structure() const { return {num_samples_, time_block_size(), global_size()}; }

  int alpha(int k) const { return k * time_block_size(); }
  int accel_bias(int k, int n) const { return k * time_block_size() + 3 + 6 * n; }
  int gyro_bias(int k, int n) const { return k * time_block_size() + 6 + 6 * n; }
  /// n >= 1
  int position(int n) const { return global_offset() + 6 * (n - 1); }
  /// n >= 1
  int orientation(int n) const { return global_offset() + 6 * (n - 1) + 3; }
  /// -1 when misalignment is not estimated.
  int misalignment(int n) const {
    return misalign_ ? global_offset() + 6 * (num_imus_ - 1) + 3 * n : -1;
  }
  int global_offset() const { return num_samples_ * time_block_size(); }

 private:
  int num_imus_;
  int num_samples_;
  bool misalign_;
};

/// Parameters of the base IMU at one timestep.
struct BaseParams {
  UnitQuaternion gyro_misalignment;
  Vec3 accel_bias = Vec3::Zero();
  Vec3 gyro_bias = Vec3::Zero();
  Vec3 alpha = Vec3::Zero();
};

/// Parameters of IMU n >= 1 at one timestep.
struct ImuParams {
  Vec3 position = Vec3::Zero();
  UnitQuaternion orientation;
  UnitQuaternion gyro_misalignment;
  Vec3 accel_bias = Vec3::Zero();
  Vec3 gyro_bias = Vec3::Zero();
};

/// (a_n - b_an) - R_n^T { a0_hat + [w0_hat]x^2 p_n + [alpha]x p_n } with
/// a0_hat = a_0 - b_a0 and w0_hat = C(misalign_0)^T (w_0 - b_g0). Unweighted.
Vec3 residual_accel(const ImuParams& imu, const BaseParams& base, const Vec3& accel_n,
                    const Vec3& accel_0, const Vec3& gyro_0);

/// R_n C(misalign_n)^T (w_n - b_gn) - C(misalign_0)^T (w_0 - b_g0). Unweighted.
Vec3 residual_gyro(const ImuParams& imu, const BaseParams& base, const Vec3& gyro_n,
                   const Vec3& gyro_0);

/// next - prev.
Vec3 residual_bias_walk(const Vec3& next, const Vec3& prev);

enum class ResidualKind { kAccel, kGyro, kAccelBiasWalk, kGyroBiasWalk };

/// One 3-row residual, its whitening weight and the tangent slices it touches.
struct ResidualBlock {
  static constexpr int kMaxSlices = 7;
  ResidualKind kind = ResidualKind::kAccel;
  int k = 0;
  int n = 0;
  double weight = 1.0;
  std::array<int, kMaxSlices> slices{};
  int num_slices = 0;

  std::span<const int> touched() const { return {slices.data(), static_cast<std::size_t>(num_slices)}; }
};

/// Alpha from central differences of the base gyro (one-sided at the ends),
/// zero biases, extrinsics and misalignments copied from the guess.
/// Throws std::invalid_argument when fewer than three samples are available.
ParameterVector initial_guess(const MeasurementSeries& measurements,
                              const ExtrinsicSet& extrinsic_guess);

/// The cost has two exact null spaces in the slack variables: a constant
/// offset of every alpha_k compensated by constant accel-bias shifts, and a
/// common accel-bias mode shared by all IMUs. Moves `x` along them so the
/// mean alpha equals that of `reference` and the common bias mode is the
/// least-squares match to `reference`. Extrinsics and the cost are unchanged.
ParameterVector pin_slack_gauge(const ParameterVector& x, const ParameterVector& reference);

/// An assembled, immutable problem instance. Satisfies the solver's
/// BlockLeastSquares requirements.
class CalibrationProblem {
 public:
  using State = ParameterVector;

  const ParameterLayout& layout() const { return layout_; }
  BlockStructure structure() const { return layout_.structure(); }
  const MeasurementSeries& measurements() const { return measurements_; }
  const ProblemOptions& options() const { return options_; }
  std::span<const ResidualBlock> blocks() const { return blocks_; }
  /// Per-IMU weights; entry 0 only carries the base bias-walk weights.
  const std::vector<CovarianceWeights>& weights() const { return weights_; }

  /// Whitened residual of one block; fills one Jacobian per touched slice
  /// when `jacobians` is non-empty (size must equal block.num_slices).
  Vec3 evaluate(const ResidualBlock& block, const ParameterVector& x,
                std::span<Mat3> jacobians = {}) const;

  /// Sum of squared whitened residuals.
  double cost(const ParameterVector& x) const;

  /// Calls visitor once per block with the whitened residual and Jacobians.
  void linearize(const ParameterVector& x, BlockVisitor& visitor) const;

  /// x boxplus delta: vector parts add, rotations compose on the right.
  ParameterVector retract(const ParameterVector& x, const Eigen::VectorXd& delta) const;

  Eigen::VectorXd residual_vector(const ParameterVector& x) const;
  /// Dense whitened Jacobian; intended for small instances.
  Eigen::MatrixXd dense_jacobian(const ParameterVector& x) const;

  /// Throws std::invalid_argument if x does not match the layout.
  void check_state(const ParameterVector& x) const;

 private:
  friend CalibrationProblem assemble(const MeasurementSeries&, const ProblemOptions&,
                                     const ParameterVector&);
  CalibrationProblem(MeasurementSeries m, ProblemOptions o);

  struct Rotations;
  Rotations rotations(const ParameterVector& x) const;
  Vec3 evaluate_with(const ResidualBlock& block, const ParameterVector& x, const Rotations& rot,
                     std::span<Mat3> jacobians) const;

  MeasurementSeries measurements_;
  ProblemOptions options_;
  ParameterLayout layout_;
  std::vector<CovarianceWeights> weights_;
  std::vector<ResidualBlock> blocks_;
};

/// Builds every residual block. `guess` is only consulted for the optional
/// lever-arm covariance and for dimension checks. Throws std::invalid_argument
/// on empty or inconsistent input.
CalibrationProblem assemble(const MeasurementSeries& measurements, const ProblemOptions& options,
                            const ParameterVector& guess);

}  // namespace imucal
