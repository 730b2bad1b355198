#include "imucal/rig.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace imucal {

ExtrinsicSet ExtrinsicSet::identity(int num_imus) {
  if (num_imus < 1) throw std::invalid_argument("ExtrinsicSet needs at least one IMU");
  ExtrinsicSet e;
  e.position.assign(num_imus, Vec3::Zero());
  e.orientation.assign(num_imus, UnitQuaternion());
  e.misalignment.assign(num_imus, UnitQuaternion());
  return e;
}

ExtrinsicSet ExtrinsicSet::reference_layout() {
  ExtrinsicSet e = identity(4);
  e.position[1] = Vec3(0.2, 0.0, 0.0);
  e.position[2] = Vec3(0.0, 0.2, 0.0);
  e.position[3] = Vec3(0.0, 0.0, 0.2);
  e.orientation[1] = UnitQuaternion::from_euler_xyz(Vec3(kPi, 0.0, 0.0));
  e.orientation[2] = UnitQuaternion::from_euler_xyz(Vec3(0.0, kPi, 0.0));
  e.orientation[3] = UnitQuaternion::from_euler_xyz(Vec3(0.0, 0.0, kPi));
  return e;
}

void ExtrinsicSet::validate() const {
  const auto n = position.size();
  if (n < 2) throw std::invalid_argument("rig needs at least two IMUs");
  if (orientation.size() != n || misalignment.size() != n) {
    throw std::invalid_argument("extrinsic set: inconsistent IMU counts");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!position[i].allFinite()) {
      throw std::invalid_argument("extrinsic set: non-finite position for IMU " + std::to_string(i));
    }
  }
  if (position[0].norm() != 0.0 || geodesic_angle(orientation[0], UnitQuaternion()) > 1e-12) {
    throw std::invalid_argument("extrinsic set: base IMU pose must be the identity");
  }
}

void MeasurementSeries::validate() const {
  if (num_imus < 2) throw std::invalid_argument("measurements: need at least two IMUs");
  if (num_samples < 1) throw std::invalid_argument("measurements: empty series");
  if (!std::isfinite(dt) || dt <= 0.0) throw std::invalid_argument("measurements: dt must be > 0");
  if (noise.size() != static_cast<std::size_t>(num_imus)) {
    throw std::invalid_argument("measurements: need one noise spec per IMU");
  }
  if (readings.size() != static_cast<std::size_t>(num_imus) * num_samples) {
    throw std::invalid_argument("measurements: reading count does not match num_imus * num_samples");
  }
  for (const auto& r : readings) {
    if (!r.accel.allFinite() || !r.gyro.allFinite()) {
      throw std::invalid_argument("measurements: non-finite reading");
    }
  }
}

}  // namespace imucal
