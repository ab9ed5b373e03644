// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cmath>

namespace mimu {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// Unit quaternion, Hamilton convention, scalar-first storage, passive
/// rotation. For a body-to-global quaternion q, rot(q) maps body-frame
/// vectors into the global frame and rot(q).transpose() maps global to body.
/// All factory functions and operators return normalized quaternions with
/// w >= 0 (the double cover is collapsed to one canonical sign).
struct Quat {
  double w{1.0};
  double x{0.0};
  double y{0.0};
  double z{0.0};

  Quat() = default;
  Quat(double w_, double x_, double y_, double z_) : w(w_), x(x_), y(y_), z(z_) {}

  static Quat identity() { return Quat{}; }

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

  Vec3 vec() const { return Vec3(x, y, z); }

  /// Normalize and flip to the w >= 0 representative.
  Quat normalized() const {
    const double n = norm();
    Quat q{w / n, x / n, y / n, z / n};
    if (q.w < 0.0) {
      q.w = -q.w;
      q.x = -q.x;
      q.y = -q.y;
      q.z = -q.z;
    }
    return q;
  }

  Quat conjugate() const { return Quat{w, -x, -y, -z}; }
};

/// Cross-product matrix: skew(v) * u = v x u.
inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

/// Quaternion-rate matrix for body angular rate w, acting on a scalar-last
/// [x y z w] component vector: qdot = 0.5 * omega_matrix(w) * q integrates
/// the same orientation as right-composition with quat_from_rotvec(w * t).
/// The matrix is antisymmetric (norm preserving): the lower-left row is
/// -w^T, pairing with the +w column.
inline Mat4 omega_matrix(const Vec3& w) {
  Mat4 m = Mat4::Zero();
  m.topLeftCorner<3, 3>() = -skew(w);
  m.topRightCorner<3, 1>() = w;
  m.bottomLeftCorner<1, 3>() = -w.transpose();
  return m;
}

/// Exponential map: rotation vector (axis * angle, radians) to quaternion.
inline Quat quat_from_rotvec(const Vec3& theta) {
  const double angle = theta.norm();
  double c, s_over_a;
  if (angle < 1e-8) {
    // second-order series around zero
    c = 1.0 - angle * angle / 8.0;
    s_over_a = 0.5 - angle * angle / 48.0;
  } else {
    c = std::cos(0.5 * angle);
    s_over_a = std::sin(0.5 * angle) / angle;
  }
  return Quat{c, s_over_a * theta.x(), s_over_a * theta.y(), s_over_a * theta.z()}
      .normalized();
}

/// Logarithm map: quaternion to rotation vector, inverse of quat_from_rotvec
/// for ||theta|| < pi.
inline Vec3 rotvec_from_quat(const Quat& q_in) {
  const Quat q = q_in.normalized();
  const double s = q.vec().norm();
  if (s < 1e-9) {
    return 2.0 / q.w * q.vec();
  }
  const double angle = 2.0 * std::atan2(s, q.w);
  return (angle / s) * q.vec();
}

/// Hamilton product a (x) b.
inline Quat quat_mul(const Quat& a, const Quat& b) {
  return Quat{a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
              a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
              a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
              a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w}
      .normalized();
}

/// Rotation matrix of q: quat_to_rot(quat_mul(a, b)) = quat_to_rot(a) * quat_to_rot(b).
inline Mat3 quat_to_rot(const Quat& q_in) {
  const Quat q = q_in.normalized();
  const Mat3 vx = skew(q.vec());
  return Mat3::Identity() + 2.0 * q.w * vx + 2.0 * vx * vx;
}

/// Rotation between two quaternions expressed as a body-frame rotation
/// vector: b = a (x) quat_from_rotvec(result).
inline Vec3 quat_boxminus(const Quat& b, const Quat& a) {
  return rotvec_from_quat(quat_mul(a.conjugate(), b));
}

/// Right Jacobian of SO(3): Exp(theta + d) ~ Exp(theta) (x) Exp(Jr(theta) d).
inline Mat3 so3_right_jacobian(const Vec3& theta) {
  const double a = theta.norm();
  const Mat3 tx = skew(theta);
  double c1, c2;
  if (a < 1e-5) {
    c1 = 0.5 - a * a / 24.0;
    c2 = 1.0 / 6.0 - a * a / 120.0;
  } else {
    c1 = (1.0 - std::cos(a)) / (a * a);
    c2 = (a - std::sin(a)) / (a * a * a);
  }
  return Mat3::Identity() - c1 * tx + c2 * tx * tx;
}

}  // namespace mimu
