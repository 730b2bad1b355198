#pragma once

#include <cstdint>
#include <random>
#include <utility>

#include "imucal/so3.hpp"

namespace imucal {

/// Continuous-time noise characteristics of one IMU plus its sample interval.
struct ImuNoiseSpec {
  double sigma_a = 0.0;   ///< accelerometer noise density [m/s^2/sqrt(Hz)]
  double sigma_g = 0.0;   ///< gyroscope noise density [rad/s/sqrt(Hz)]
  double sigma_ba = 0.0;  ///< accelerometer bias random walk [m/s^2*sqrt(Hz)]
  double sigma_bg = 0.0;  ///< gyroscope bias random walk [rad/s*sqrt(Hz)]
  double dt = 0.01;       ///< sampling interval [s]

  /// Throws std::invalid_argument unless every field is finite and > 0.
  void validate() const;

  /// Simulation-grade values used in the reference experiments (100 Hz).
  static ImuNoiseSpec reference();
};

struct ImuState {
  Vec3 accel_bias = Vec3::Zero();
  Vec3 gyro_bias = Vec3::Zero();
};

struct ImuReading {
  Vec3 accel = Vec3::Zero();
  Vec3 gyro = Vec3::Zero();
};

enum class SensorKind { kAccel, kGyro };

/// Generator used for every stochastic draw in the library.
using Rng = std::mt19937_64;

/// Derives an independent stream seed from a base seed and a stream index
/// (SplitMix64 finalizer), so parallel trials never share a generator.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// a_meas = a - g + b_a + n_a, with every vector in the IMU frame.
Vec3 accel_measure(const Vec3& accel_in_imu, const Vec3& gravity_in_imu, const Vec3& bias,
                   const Vec3& noise);

/// w_meas = C(misalign) * w + b_g + n_g; misalign is the IMU-to-gyro rotation.
Vec3 gyro_measure(const Vec3& omega_in_imu, const UnitQuaternion& misalign, const Vec3& bias,
                  const Vec3& noise);

/// Discrete white noise draws with per-axis std sigma / sqrt(dt).
/// Zero densities are allowed here and produce exact zeros.
std::pair<Vec3, Vec3> sample_noise(const ImuNoiseSpec& spec, Rng& rng);

/// One random-walk step with per-axis increment std sigma_b * sqrt(dt).
Vec3 step_bias(const ImuNoiseSpec& spec, const Vec3& bias, Rng& rng, SensorKind which);

}  // namespace imucal
