#pragma once

// Data shared by the simulator, the calibration problem and the metrics:
// the rig geometry, synchronized measurement series and simulation truth.

#include <cstdint>
#include <vector>

#include "imucal/imu_model.hpp"
#include "imucal/so3.hpp"

namespace imucal {

/// Pose of every IMU relative to the base IMU0, plus each gyroscope's
/// misalignment. Index 0 is the base: position zero, identity orientation.
struct ExtrinsicSet {
  std::vector<Vec3> position;                 ///< p_{I_n} in I0 coordinates [m]
  std::vector<UnitQuaternion> orientation;    ///< q_{I_n}: orientation of I_n in I0
  std::vector<UnitQuaternion> misalignment;   ///< rotation from I_n to gyro frame g_n

  int num_imus() const { return static_cast<int>(position.size()); }

  /// Base IMU plus `num_imus - 1` IMUs, all colocated with identity rotations.
  static ExtrinsicSet identity(int num_imus);

  /// Four-IMU simulation layout: 200 mm offsets along each axis, each
  /// rotated by pi about the same axis.
  static ExtrinsicSet reference_layout();

  /// Throws std::invalid_argument if sizes disagree, fewer than two IMUs, any
  /// value is non-finite, or the base pose is not the identity.
  void validate() const;
};

/// Time-synchronized readings of all IMUs, stored time-major.
struct MeasurementSeries {
  int num_imus = 0;
  int num_samples = 0;
  double dt = 0.0;
  std::vector<ImuNoiseSpec> noise;    ///< one per IMU
  std::vector<ImuReading> readings;   ///< index k * num_imus + n

  const ImuReading& at(int k, int n) const { return readings[static_cast<std::size_t>(k) * num_imus + n]; }
  ImuReading& at(int k, int n) { return readings[static_cast<std::size_t>(k) * num_imus + n]; }

  /// Throws std::invalid_argument on inconsistent sizes or non-finite values.
  void validate() const;
};

/// Simulation truth needed to score an estimate.
struct GroundTruthLog {
  ExtrinsicSet extrinsics;
  std::uint64_t seed = 0;
  double gravity = 9.81;
  double dt = 0.0;
  std::vector<Vec3> alpha;        ///< base angular acceleration per timestep
  std::vector<Vec3> accel_bias;   ///< index k * num_imus + n
  std::vector<Vec3> gyro_bias;    ///< index k * num_imus + n

  int num_samples() const { return static_cast<int>(alpha.size()); }
};

}  // namespace imucal
