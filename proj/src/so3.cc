#include "orient_geo/so3.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/LU>

#include "orient_geo/errors.h"

namespace orient_geo {

Rotation rotation_from_trusted(const Eigen::Matrix3d& m) {
  return Rotation(m, Rotation::Trusted{});
}

namespace {

double clamp_unit(double u) { return std::clamp(u, -1.0, 1.0); }

}  // namespace

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return s;
}

Eigen::Vector3d vee(const Eigen::Matrix3d& m) {
  return 0.5 * Eigen::Vector3d(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0),
                               m(1, 0) - m(0, 1));
}

bool Rotation::is_valid(const Eigen::Matrix3d& m, double tol) {
  if (!m.allFinite()) return false;
  const double orth = (m.transpose() * m - Eigen::Matrix3d::Identity()).norm();
  return orth <= tol && std::abs(m.determinant() - 1.0) <= tol;
}

Rotation::Rotation(const Eigen::Matrix3d& m) : m_(m) {
  if (!is_valid(m)) {
    std::ostringstream os;
    os << "matrix is not a rotation:\n" << m;
    throw InvalidRotation(os.str());
  }
}

Rotation Rotation::about_x(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Eigen::Matrix3d m;
  m << 1.0, 0.0, 0.0,
       0.0, c, -s,
       0.0, s, c;
  return Rotation(m, Trusted{});
}

Rotation Rotation::about_y(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Eigen::Matrix3d m;
  m << c, 0.0, s,
       0.0, 1.0, 0.0,
       -s, 0.0, c;
  return Rotation(m, Trusted{});
}

Rotation Rotation::about_z(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Eigen::Matrix3d m;
  m << c, -s, 0.0,
       s, c, 0.0,
       0.0, 0.0, 1.0;
  return Rotation(m, Trusted{});
}

AxisAngle::AxisAngle(const Eigen::Vector3d& v) : v_(v) {
  if (!v.allFinite() || !(v.norm() < kPi)) {
    std::ostringstream os;
    os << "axis-angle norm must lie in [0, pi), got " << v.norm();
    throw InvalidAxisAngle(os.str());
  }
}

Eigen::Vector4d canonicalize_quaternion(const Eigen::Vector4d& q) {
  if (q[0] > 0.0) return q;
  if (q[0] < 0.0) return -q;
  for (int i = 1; i < 4; ++i) {
    if (q[i] > 0.0) return q;
    if (q[i] < 0.0) return -q;
  }
  return q;
}

UnitQuaternion::UnitQuaternion(const Eigen::Vector4d& q) {
  if (!q.allFinite() || std::abs(q.norm() - 1.0) > kRepresentationTol) {
    std::ostringstream os;
    os << "quaternion must be unit norm, got norm " << q.norm();
    throw InvalidQuaternion(os.str());
  }
  q_ = canonicalize_quaternion(q);
}

UnitQuaternion UnitQuaternion::normalized(const Eigen::Vector4d& q) {
  const double n = q.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw InvalidQuaternion("cannot normalize a zero or non-finite quaternion");
  }
  return UnitQuaternion(q / n);
}

double wrap_angle(double angle) {
  double a = std::fmod(angle + kPi, 2.0 * kPi);
  if (a < 0.0) a += 2.0 * kPi;
  a -= kPi;
  // fmod can land exactly on +pi after the shift.
  if (a >= kPi) a -= 2.0 * kPi;
  return a;
}

Eigen::Matrix3d rodrigues(const Eigen::Vector3d& y) {
  const double theta = y.norm();
  if (theta < kSmallAngle) {
    return Eigen::Matrix3d::Identity() + skew(y);
  }
  const Eigen::Matrix3d k = skew(y / theta);
  return Eigen::Matrix3d::Identity() + std::sin(theta) * k +
         (1.0 - std::cos(theta)) * k * k;
}

Eigen::Matrix3d right_jacobian(const Eigen::Vector3d& y) {
  const double theta2 = y.squaredNorm();
  const double theta = std::sqrt(theta2);
  double a;  // (1 - cos t) / t^2
  double b;  // (t - sin t) / t^3
  if (theta < 1e-2) {
    const double t4 = theta2 * theta2;
    a = 0.5 - theta2 / 24.0 + t4 / 720.0;
    b = 1.0 / 6.0 - theta2 / 120.0 + t4 / 5040.0;
  } else {
    const double half_sin = std::sin(0.5 * theta);
    a = 2.0 * half_sin * half_sin / theta2;
    b = (theta - std::sin(theta)) / (theta2 * theta);
  }
  const Eigen::Matrix3d k = skew(y);
  return Eigen::Matrix3d::Identity() - a * k + b * k * k;
}

Rotation exp_map(const AxisAngle& y) {
  return rotation_from_trusted(rodrigues(y.vector()));
}

AxisAngle log_map(const Rotation& r) {
  const Eigen::Matrix3d& m = r.matrix();
  const double tr = m.trace();
  if (tr <= -1.0 + kNearPiTrace) {
    std::ostringstream os;
    os << "rotation angle too close to pi for a unique logarithm (trace " << tr
       << ")";
    throw NearPiRotation(os.str());
  }
  const double cos_theta = clamp_unit(0.5 * (tr - 1.0));
  const Eigen::Vector3d w = vee(m);  // sin(theta) * axis
  const double sin_theta = w.norm();
  const double theta = std::atan2(sin_theta, cos_theta);
  double factor;  // theta / sin(theta)
  if (theta < kSmallAngle) {
    factor = 1.0 + theta * theta / 6.0;
  } else {
    factor = theta / sin_theta;
  }
  return AxisAngle(factor * w);
}

double geodesic_distance(const Rotation& r1, const Rotation& r2) {
  // tr(R1^T R2) is the elementwise inner product of R1 and R2.
  const double tr = (r1.matrix().array() * r2.matrix().array()).sum();
  return std::abs(std::acos(clamp_unit(0.5 * (tr - 1.0))));
}

double quat_distance(const UnitQuaternion& q1, const UnitQuaternion& q2) {
  const double d = std::abs(q1.coeffs().dot(q2.coeffs()));
  return 2.0 * std::acos(std::min(1.0, d));
}

Rotation euler_to_rotation(const EulerZXZ& e) {
  return Rotation::about_z(e.ct) * Rotation::about_x(e.el) *
         Rotation::about_z(e.az);
}

EulerZXZ rotation_to_euler(const Rotation& r) {
  const Eigen::Matrix3d& m = r.matrix();
  // Third row is (se*sa, se*ca, ce); third column is (sc*se, -cc*se, ce).
  const double se = std::hypot(m(2, 0), m(2, 1));
  if (se < kGimbalLockSin) {
    throw GimbalLock("elevation is degenerate (sin(el) ~ 0)");
  }
  EulerZXZ e;
  e.el = std::atan2(se, m(2, 2));
  e.az = wrap_angle(std::atan2(m(2, 0), m(2, 1)));
  e.ct = wrap_angle(std::atan2(m(0, 2), -m(1, 2)));
  return e;
}

UnitQuaternion to_quaternion(const AxisAngle& y) {
  const Eigen::Vector3d& v = y.vector();
  const double theta2 = v.squaredNorm();
  const double theta = std::sqrt(theta2);
  double real, imag;
  if (theta < 1e-4) {
    real = 1.0 - theta2 / 8.0 + theta2 * theta2 / 384.0;
    imag = 0.5 - theta2 / 48.0 + theta2 * theta2 / 3840.0;
  } else {
    real = std::cos(0.5 * theta);
    imag = std::sin(0.5 * theta) / theta;
  }
  Eigen::Vector4d q;
  q << real, imag * v;
  return UnitQuaternion::normalized(q);
}

UnitQuaternion to_quaternion(const Rotation& r) {
  const Eigen::Matrix3d& m = r.matrix();
  const double tr = m.trace();
  Eigen::Vector4d q;
  if (tr > 0.0) {
    const double s = 2.0 * std::sqrt(tr + 1.0);
    q << 0.25 * s, (m(2, 1) - m(1, 2)) / s, (m(0, 2) - m(2, 0)) / s,
        (m(1, 0) - m(0, 1)) / s;
  } else if (m(0, 0) > m(1, 1) && m(0, 0) > m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + m(0, 0) - m(1, 1) - m(2, 2));
    q << (m(2, 1) - m(1, 2)) / s, 0.25 * s, (m(0, 1) + m(1, 0)) / s,
        (m(0, 2) + m(2, 0)) / s;
  } else if (m(1, 1) > m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + m(1, 1) - m(0, 0) - m(2, 2));
    q << (m(0, 2) - m(2, 0)) / s, (m(0, 1) + m(1, 0)) / s, 0.25 * s,
        (m(1, 2) + m(2, 1)) / s;
  } else {
    const double s = 2.0 * std::sqrt(1.0 + m(2, 2) - m(0, 0) - m(1, 1));
    q << (m(1, 0) - m(0, 1)) / s, (m(0, 2) + m(2, 0)) / s,
        (m(1, 2) + m(2, 1)) / s, 0.25 * s;
  }
  return UnitQuaternion::normalized(q);
}

AxisAngle to_axis_angle(const UnitQuaternion& q) {
  const double c = q.scalar();
  const Eigen::Vector3d s = q.vec();
  const double n = s.norm();
  if (c <= 0.0) {
    throw NearPiRotation("quaternion with zero scalar part has angle pi");
  }
  if (n < kSmallAngle) {
    return AxisAngle(2.0 * s / c);
  }
  const double theta = 2.0 * std::atan2(n, c);
  return AxisAngle(theta / n * s);
}

Rotation to_rotation(const UnitQuaternion& q) {
  const double w = q.coeffs()[0], x = q.coeffs()[1], y = q.coeffs()[2],
               z = q.coeffs()[3];
  Eigen::Matrix3d m;
  m << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
       2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
       2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
  return rotation_from_trusted(m);
}

AxisAngle project_axis_angle(const Eigen::Vector3d& y) {
  if (!y.allFinite()) throw InvalidAxisAngle("non-finite axis-angle vector");
  const double n = y.norm();
  if (n >= kPi) return AxisAngle(y * (kMaxAxisAngleNorm / n));
  return AxisAngle(y);
}

}  // namespace orient_geo
