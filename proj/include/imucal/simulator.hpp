#pragma once

#include <cstdint>
#include <vector>

#include "imucal/imu_model.hpp"
#include "imucal/rig.hpp"
#include "imucal/so3.hpp"

namespace imucal {

/// Base-IMU kinematics at one timestep, all vectors in I0 coordinates.
struct TrajectorySample {
  double t = 0.0;
  Vec3 accel = Vec3::Zero();       ///< linear acceleration of I0 w.r.t. world [m/s^2]
  Vec3 omega = Vec3::Zero();       ///< angular velocity [rad/s]
  Vec3 alpha = Vec3::Zero();       ///< angular acceleration [rad/s^2]
  Vec3 gravity = Vec3::Zero();     ///< gravity expressed in I0 [m/s^2]
  Rotation3 world_from_base = Rotation3::Identity();
};

using Trajectory = std::vector<TrajectorySample>;

/// Per-axis sinusoids in the base frame:
///   omega(t) = omega_offset + A .* sin(f .* t + phi)
///   accel(t) = accel_offset + B .* sin(h .* t + psi)
/// Frequencies are angular [rad/s].
struct MotionProfile {
  Vec3 angular_amplitude{3.6, 3.0, 2.4};
  Vec3 angular_frequency{1.1, 1.7, 2.3};
  Vec3 angular_phase{0.0, 0.5, 1.0};
  Vec3 linear_amplitude{0.8, 0.6, 0.5};
  Vec3 linear_frequency{0.7, 1.3, 1.9};
  Vec3 linear_phase{0.2, 1.1, 2.0};
  Vec3 omega_offset = Vec3::Zero();
  Vec3 accel_offset = Vec3::Zero();
  UnitQuaternion initial_orientation = UnitQuaternion::from_euler_xyz(Vec3(0.3, -0.2, 0.1));
  double gravity = 9.81;

  /// Excitation on all three rotation axes; the default.
  static MotionProfile excitation();
};

/// Number of samples for a duration at a given interval (rounded).
int sample_count(double duration, double dt);

/// Samples a multi-axis excitation profile. Rejects profiles whose angular
/// amplitudes are all zero, as well as duration < 1 s or dt <= 0.
Trajectory make_excitation_trajectory(double duration, double dt, const MotionProfile& profile);

/// Same sampling without the excitation check. Used to build deliberately
/// degenerate motions (constant translation, single-axis constant rate).
Trajectory make_trajectory(double duration, double dt, const MotionProfile& profile);

/// omega x (omega x p) + alpha x p.
Vec3 lever_arm_accel(const Vec3& omega, const Vec3& alpha, const Vec3& p);

struct ImuKinematics {
  Vec3 specific_force;  ///< in I_n [m/s^2]
  Vec3 omega;           ///< in I_n [rad/s]
};

/// True specific force and angular rate at an IMU mounted at (p, q) relative
/// to the base.
ImuKinematics propagate_rigid_body(const TrajectorySample& base, const Vec3& p,
                                   const UnitQuaternion& q);

struct RigScenario {
  ExtrinsicSet extrinsics;                ///< ground truth
  std::vector<ImuNoiseSpec> noise;        ///< one per IMU
  double duration = 30.0;                 ///< [s]
  std::uint64_t seed = 0;
  bool add_noise = true;                  ///< white measurement noise
  bool bias_random_walk = true;
  double initial_bias_range = 0.05;       ///< first biases ~ U[-r, r] per axis
  double misalignment_std_deg = 0.0;      ///< > 0 replaces extrinsics.misalignment with samples

  /// Reference four-IMU rig with the simulation noise constants.
  static RigScenario reference(double duration, std::uint64_t seed);

  void validate() const;
};

struct Simulation {
  MeasurementSeries measurements;
  GroundTruthLog truth;
};

/// Synthesizes synchronized readings of every IMU along `trajectory`.
/// Deterministic in scenario.seed.
Simulation simulate(const RigScenario& scenario, const Trajectory& trajectory);

/// Random rotation: uniform axis, angle ~ N(0, std_rad).
UnitQuaternion sample_rotation_perturbation(double std_rad, Rng& rng);

/// Rotation by exactly `angle_rad` about a uniformly random axis.
UnitQuaternion sample_fixed_angle_rotation(double angle_rad, Rng& rng);

Vec3 sample_unit_vector(Rng& rng);

}  // namespace imucal
