#ifndef ORIENT_GEO_SO3_H_
#define ORIENT_GEO_SO3_H_

// Rotation representations on SO(3), conversions between them, the
// exponential/logarithm maps and geodesic distances.
//
// All functions are pure; values are immutable once constructed.

#include <Eigen/Core>

#include <numbers>

namespace orient_geo {

inline constexpr double kPi = std::numbers::pi;

// Below this angle exp/log switch to their Taylor expansions.
inline constexpr double kSmallAngle = 1e-8;
// log_map rejects rotations with trace <= -1 + kNearPiTrace.
inline constexpr double kNearPiTrace = 1e-7;
// rotation_to_euler rejects |sin(el)| below this value.
inline constexpr double kGimbalLockSin = 1e-8;
// Tolerance used by the Rotation and UnitQuaternion invariants.
inline constexpr double kRepresentationTol = 1e-9;
// Largest norm an axis-angle vector is rescaled to by project_axis_angle.
inline constexpr double kMaxAxisAngleNorm = kPi - 1e-6;

Eigen::Matrix3d skew(const Eigen::Vector3d& v);
// Inverse of skew applied to the antisymmetric part: vee(M - M^T) / 2.
Eigen::Vector3d vee(const Eigen::Matrix3d& m);

// 3x3 special orthogonal matrix.
class Rotation {
 public:
  Rotation() : m_(Eigen::Matrix3d::Identity()) {}
  // Throws InvalidRotation unless m^T m = I and det(m) = 1 within 1e-9.
  explicit Rotation(const Eigen::Matrix3d& m);

  static Rotation about_x(double angle);
  static Rotation about_y(double angle);
  static Rotation about_z(double angle);

  const Eigen::Matrix3d& matrix() const { return m_; }
  double trace() const { return m_.trace(); }
  Rotation inverse() const { return Rotation(m_.transpose(), Trusted{}); }
  Rotation operator*(const Rotation& other) const {
    return Rotation(m_ * other.m_, Trusted{});
  }
  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const { return m_ * p; }

  static bool is_valid(const Eigen::Matrix3d& m, double tol = kRepresentationTol);

 private:
  struct Trusted {};
  Rotation(const Eigen::Matrix3d& m, Trusted) : m_(m) {}
  friend Rotation rotation_from_trusted(const Eigen::Matrix3d& m);

  Eigen::Matrix3d m_;
};

// Axis-angle vector theta * v with theta in [0, pi).
class AxisAngle {
 public:
  AxisAngle() : v_(Eigen::Vector3d::Zero()) {}
  // Throws InvalidAxisAngle when the norm is >= pi or not finite.
  explicit AxisAngle(const Eigen::Vector3d& v);
  AxisAngle(double x, double y, double z) : AxisAngle(Eigen::Vector3d(x, y, z)) {}

  const Eigen::Vector3d& vector() const { return v_; }
  double angle() const { return v_.norm(); }

 private:
  Eigen::Vector3d v_;
};

// Unit quaternion (c, s1, s2, s3), stored on the canonical hemisphere: c > 0,
// or c == 0 with the first nonzero vector component positive.
class UnitQuaternion {
 public:
  UnitQuaternion() : q_(1.0, 0.0, 0.0, 0.0) {}
  // Throws InvalidQuaternion unless |q| = 1 within 1e-9.
  explicit UnitQuaternion(const Eigen::Vector4d& q);
  UnitQuaternion(double c, double s1, double s2, double s3)
      : UnitQuaternion(Eigen::Vector4d(c, s1, s2, s3)) {}
  // Normalizes before canonicalizing. Throws InvalidQuaternion on zero input.
  static UnitQuaternion normalized(const Eigen::Vector4d& q);

  const Eigen::Vector4d& coeffs() const { return q_; }
  double scalar() const { return q_[0]; }
  Eigen::Vector3d vec() const { return q_.tail<3>(); }

 private:
  Eigen::Vector4d q_;
};

// Canonical antipodal representative of q (no normalization).
Eigen::Vector4d canonicalize_quaternion(const Eigen::Vector4d& q);

// ZXZ Euler angles: R = Rz(ct) * Rx(el) * Rz(az).
struct EulerZXZ {
  double az = 0.0;
  double el = 0.0;
  double ct = 0.0;
};

// Wraps an angle into [-pi, pi).
double wrap_angle(double angle);

// Rodrigues' formula for an arbitrary 3-vector (no norm restriction).
Eigen::Matrix3d rodrigues(const Eigen::Vector3d& y);
// Right Jacobian of the exponential map: exp(y + d) ~ exp(y) exp(Jr(y) d).
Eigen::Matrix3d right_jacobian(const Eigen::Vector3d& y);

Rotation exp_map(const AxisAngle& y);
// Throws NearPiRotation when trace(R) <= -1 + kNearPiTrace.
AxisAngle log_map(const Rotation& r);

// |acos((tr(R1^T R2) - 1) / 2)| in [0, pi].
double geodesic_distance(const Rotation& r1, const Rotation& r2);
// 2 acos(|<q1, q2>|) in [0, pi].
double quat_distance(const UnitQuaternion& q1, const UnitQuaternion& q2);

Rotation euler_to_rotation(const EulerZXZ& e);
// Returns the branch with sin(el) > 0, i.e. el in (0, pi), and az, ct in
// [-pi, pi). Throws GimbalLock when |sin(el)| < kGimbalLockSin.
EulerZXZ rotation_to_euler(const Rotation& r);

UnitQuaternion to_quaternion(const AxisAngle& y);
UnitQuaternion to_quaternion(const Rotation& r);
// Throws NearPiRotation for quaternions with c == 0 (angle pi).
AxisAngle to_axis_angle(const UnitQuaternion& q);
Rotation to_rotation(const UnitQuaternion& q);

// Rescales vectors with norm >= pi to norm kMaxAxisAngleNorm.
AxisAngle project_axis_angle(const Eigen::Vector3d& y);

}  // namespace orient_geo

#endif  // ORIENT_GEO_SO3_H_
