#pragma once

// Quaternion and rotation helpers for the calibration problem.
//
// Conventions: Hamilton product, scalar-last storage [x, y, z, w], and
// passive frame transforms. For a quaternion q describing the orientation of
// frame A in frame B, C(q) maps A-coordinates to B-coordinates:
//   p_B = C(q) * p_A
// Composition follows C(q1 * q2) = C(q1) * C(q2).

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace imucal {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
/// 3x3 rotation matrix. Orthogonality is a convention, not enforced by type.
using Rotation3 = Eigen::Matrix3d;

class UnitQuaternion {
 public:
  /// Identity rotation [0, 0, 0, 1].
  UnitQuaternion() : q_(Eigen::Quaterniond::Identity()) {}

  /// Builds from scalar-last components and normalizes.
  /// Throws std::invalid_argument for non-finite or zero-norm input.
  static UnitQuaternion from_xyzw(double x, double y, double z, double w);
  static UnitQuaternion from_eigen(const Eigen::Quaterniond& q);
  /// XYZ Euler angles (rad): rotation = Rx(rx) * Ry(ry) * Rz(rz).
  static UnitQuaternion from_euler_xyz(const Vec3& angles);

  double x() const { return q_.x(); }
  double y() const { return q_.y(); }
  double z() const { return q_.z(); }
  double w() const { return q_.w(); }
  Eigen::Vector4d xyzw() const { return {q_.x(), q_.y(), q_.z(), q_.w()}; }
  const Eigen::Quaterniond& eigen() const { return q_; }

  UnitQuaternion inverse() const;
  /// Renormalized Hamilton product.
  UnitQuaternion operator*(const UnitQuaternion& rhs) const;

 private:
  explicit UnitQuaternion(const Eigen::Quaterniond& q) : q_(q) {}
  Eigen::Quaterniond q_;
};

/// C(q). Throws std::invalid_argument on non-finite components.
Rotation3 quat_to_rot(const UnitQuaternion& q);

/// Matrix form of the cross product: skew(v) * u == v.cross(u).
Mat3 skew(const Vec3& v);

/// Axis-angle vector (rad) to quaternion.
UnitQuaternion exp_map(const Vec3& theta);

/// Inverse of exp_map; returns the rotation vector with angle in [0, pi].
Vec3 log_map(const UnitQuaternion& q);

/// Angle of the relative rotation q1^-1 * q2, in [0, pi]. Invariant to the
/// sign of either quaternion.
double geodesic_angle(const UnitQuaternion& q1, const UnitQuaternion& q2);

/// Right-composed manifold update q * exp(delta), renormalized.
UnitQuaternion retract(const UnitQuaternion& q, const Vec3& delta);

bool all_finite(const Vec3& v);

constexpr double kPi = 3.14159265358979323846;
constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }
constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }

}  // namespace imucal
