#include "imucal/so3.hpp"

#include <cmath>
#include <stdexcept>

namespace imucal {

namespace {
constexpr double kSmallAngle = 1e-8;
}

UnitQuaternion UnitQuaternion::from_xyzw(double x, double y, double z, double w) {
  if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z) || !std::isfinite(w)) {
    throw std::invalid_argument("quaternion has non-finite components");
  }
  Eigen::Quaterniond q(w, x, y, z);
  const double n = q.norm();
  if (n < 1e-300) throw std::invalid_argument("quaternion has zero norm");
  q.coeffs() /= n;
  return UnitQuaternion(q);
}

UnitQuaternion UnitQuaternion::from_eigen(const Eigen::Quaterniond& q) {
  return from_xyzw(q.x(), q.y(), q.z(), q.w());
}

UnitQuaternion UnitQuaternion::from_euler_xyz(const Vec3& angles) {
  const Eigen::Quaterniond q = Eigen::AngleAxisd(angles.x(), Vec3::UnitX()) *
                               Eigen::AngleAxisd(angles.y(), Vec3::UnitY()) *
                               Eigen::AngleAxisd(angles.z(), Vec3::UnitZ());
  return from_eigen(q);
}

UnitQuaternion UnitQuaternion::inverse() const { return UnitQuaternion(q_.conjugate()); }

UnitQuaternion UnitQuaternion::operator*(const UnitQuaternion& rhs) const {
  Eigen::Quaterniond p = q_ * rhs.q_;
  p.normalize();
  return UnitQuaternion(p);
}

Rotation3 quat_to_rot(const UnitQuaternion& q) {
  const double x = q.x(), y = q.y(), z = q.z(), w = q.w();
  if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z) || !std::isfinite(w)) {
    throw std::invalid_argument("quat_to_rot: non-finite quaternion");
  }
  Rotation3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w),
      2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
      2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y);
  return r;
}

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return s;
}

UnitQuaternion exp_map(const Vec3& theta) {
  const double angle = theta.norm();
  if (angle < kSmallAngle) {
    return UnitQuaternion::from_xyzw(0.5 * theta.x(), 0.5 * theta.y(), 0.5 * theta.z(), 1.0);
  }
  const Vec3 v = std::sin(0.5 * angle) / angle * theta;
  return UnitQuaternion::from_xyzw(v.x(), v.y(), v.z(), std::cos(0.5 * angle));
}

Vec3 log_map(const UnitQuaternion& q) {
  Vec3 v(q.x(), q.y(), q.z());
  double w = q.w();
  if (w < 0.0) {
    v = -v;
    w = -w;
  }
  const double s = v.norm();
  if (s < kSmallAngle) return 2.0 * v;
  return 2.0 * std::atan2(s, w) / s * v;
}

double geodesic_angle(const UnitQuaternion& q1, const UnitQuaternion& q2) {
  const Eigen::Quaterniond rel = q1.eigen().conjugate() * q2.eigen();
  return 2.0 * std::atan2(rel.vec().norm(), std::abs(rel.w()));
}

UnitQuaternion retract(const UnitQuaternion& q, const Vec3& delta) { return q * exp_map(delta); }

bool all_finite(const Vec3& v) { return v.allFinite(); }

}  // namespace imucal
