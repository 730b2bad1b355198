#include "imucal/imu_model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace imucal {

namespace {

void require_positive(double v, const char* name) {
  if (!std::isfinite(v) || v <= 0.0) {
    throw std::invalid_argument(std::string("noise spec: ") + name + " must be finite and > 0");
  }
}

Vec3 gaussian3(double stddev, Rng& rng) {
  if (stddev == 0.0) return Vec3::Zero();
  std::normal_distribution<double> n(0.0, 1.0);
  const double x = n(rng);
  const double y = n(rng);
  const double z = n(rng);
  return stddev * Vec3(x, y, z);
}

}  // namespace

void ImuNoiseSpec::validate() const {
  require_positive(sigma_a, "sigma_a");
  require_positive(sigma_g, "sigma_g");
  require_positive(sigma_ba, "sigma_ba");
  require_positive(sigma_bg, "sigma_bg");
  require_positive(dt, "dt");
}

ImuNoiseSpec ImuNoiseSpec::reference() {
  return ImuNoiseSpec{.sigma_a = 2e-3, .sigma_g = 1.6968e-4, .sigma_ba = 3e-3,
                      .sigma_bg = 1.9393e-5, .dt = 0.01};
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Vec3 accel_measure(const Vec3& accel_in_imu, const Vec3& gravity_in_imu, const Vec3& bias,
                   const Vec3& noise) {
  return accel_in_imu - gravity_in_imu + bias + noise;
}

Vec3 gyro_measure(const Vec3& omega_in_imu, const UnitQuaternion& misalign, const Vec3& bias,
                  const Vec3& noise) {
  return quat_to_rot(misalign) * omega_in_imu + bias + noise;
}

std::pair<Vec3, Vec3> sample_noise(const ImuNoiseSpec& spec, Rng& rng) {
  const double sqrt_dt = std::sqrt(spec.dt);
  // accel first, then gyro; the order is part of the reproducibility contract
  Vec3 na = gaussian3(spec.sigma_a / sqrt_dt, rng);
  Vec3 ng = gaussian3(spec.sigma_g / sqrt_dt, rng);
  return {na, ng};
}

Vec3 step_bias(const ImuNoiseSpec& spec, const Vec3& bias, Rng& rng, SensorKind which) {
  const double sigma = which == SensorKind::kAccel ? spec.sigma_ba : spec.sigma_bg;
  return bias + gaussian3(sigma * std::sqrt(spec.dt), rng);
}

}  // namespace imucal
