// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "mimu/so3.hpp"

namespace mimu {

constexpr double kGravityMag = 9.80665;  // m/s^2
constexpr double kMilliG = 9.80665e-3;   // 1 mg in m/s^2

/// Global gravity vector, z-up world.
inline Vec3 gravity() { return Vec3(0.0, 0.0, -kGravityMag); }

// Error-state layout. Body block first, then one 12-dim block per IMU
// (IMU 0 included, its extrinsic sub-block pinned):
//   [dp dv da dtheta domega dalpha | per IMU: dp_BI dtheta_BI dba dbw]
constexpr int kErrPos = 0;
constexpr int kErrVel = 3;
constexpr int kErrAcc = 6;
constexpr int kErrTheta = 9;
constexpr int kErrOmega = 12;
constexpr int kErrAlpha = 15;
constexpr int kBodyErrDim = 18;
constexpr int kImuErrDim = 12;
constexpr int kImuErrPos = 0;
constexpr int kImuErrTheta = 3;
constexpr int kImuErrBa = 6;
constexpr int kImuErrBw = 9;

/// Total error-state dimension for n_imus IMUs (IMU 0 counted).
inline int error_dim(int n_imus) {
  if (n_imus < 1) {
    throw std::invalid_argument("error_dim: need at least one IMU");
  }
  return kBodyErrDim + kImuErrDim * n_imus;
}

/// Offset of IMU i's error block.
inline int imu_err_base(int i) { return kBodyErrDim + kImuErrDim * i; }

/// Body motion state. Position, velocity and specific force are global-frame;
/// angular rate and angular acceleration are body-frame. `a` is specific
/// force (gravity-compensated): vdot = a + g.
struct BodyState {
  Vec3 p{Vec3::Zero()};      // m, global
  Vec3 v{Vec3::Zero()};      // m/s, global
  Vec3 a{Vec3::Zero()};      // m/s^2, global specific force
  Quat q_GB{};               // body -> global
  Vec3 w{Vec3::Zero()};      // rad/s, body
  Vec3 alpha{Vec3::Zero()};  // rad/s^2, body
};

/// Per-IMU calibration: rigid transform IMU -> body plus slowly drifting
/// measurement biases. IMU 0 defines the body frame, so its extrinsics are
/// pinned to identity and carry no uncertainty.
struct ImuCalibration {
  Vec3 p_BI{Vec3::Zero()};  // IMU origin in body frame, m
  Quat q_BI{};              // IMU -> body
  Vec3 b_a{Vec3::Zero()};   // accel bias, m/s^2
  Vec3 b_w{Vec3::Zero()};   // gyro bias, rad/s
  bool pinned{false};
};

/// Continuous-time sensor noise densities plus sampling rate.
struct NoiseParams {
  double accel_density{1.372931e-3};  // m/s^2/sqrt(Hz)
  double gyro_density{6.1e-5};        // rad/s/sqrt(Hz)
  double accel_bias_rw{1e-4};         // m/s^2 * s^-1/2
  double gyro_bias_rw{1e-5};          // rad/s * s^-1/2
  double rate_hz{400.0};

  void validate() const {
    if (accel_density <= 0.0 || gyro_density <= 0.0 || accel_bias_rw <= 0.0 ||
        gyro_bias_rw <= 0.0 || rate_hz <= 0.0) {
      throw std::invalid_argument("NoiseParams: all fields must be strictly positive");
    }
  }
};

/// Noise-density presets for the supported sensors.
inline NoiseParams preset_noise(const std::string& name) {
  NoiseParams p;
  if (name == "VN300") {
    p.accel_density = 0.14 * kMilliG;
    p.gyro_density = 0.061e-3;
    p.rate_hz = 400.0;
  } else if (name == "VN100") {
    p.accel_density = 0.14 * kMilliG;
    p.gyro_density = 0.061e-3;
    p.rate_hz = 100.0;
  } else if (name == "DETA10") {
    p.accel_density = 40.0 * kMilliG;
    p.gyro_density = 0.049e-3;
    p.rate_hz = 100.0;
  } else {
    throw std::invalid_argument("preset_noise: unknown preset '" + name + "'");
  }
  return p;
}

/// Default initial standard deviations of the error state.
struct InitStd {
  double body_a{1.0};                   // m/s^2
  double body_w{0.316227766016838};     // rad/s (variance 0.1)
  double body_alpha{1.0};               // rad/s^2
  double imu_pos{0.02};                 // m
  double imu_ang{5.0 * M_PI / 180.0};   // rad
  double imu_ba{0.1};                   // m/s^2
  double imu_bw{0.01};                  // rad/s
};

/// Full filter state: body motion, N+1 calibration blocks, error covariance.
struct FilterState {
  BodyState body;
  std::vector<ImuCalibration> imus;
  MatX P;
  double t{0.0};

  int n_imus() const { return static_cast<int>(imus.size()); }
  int dim() const { return error_dim(n_imus()); }
};

/// Zero rows and columns of the pinned IMU-0 extrinsic sub-block.
inline void zero_pinned_blocks(FilterState& x) {
  for (int i = 0; i < x.n_imus(); ++i) {
    if (!x.imus[i].pinned) continue;
    const int base = imu_err_base(i);
    x.P.middleRows(base, 6).setZero();
    x.P.middleCols(base, 6).setZero();
  }
}

/// Build a filter state with default initial covariance. IMU 0 is pinned.
inline FilterState make_filter_state(const BodyState& body,
                                     const std::vector<ImuCalibration>& imus,
                                     const InitStd& s = InitStd{}) {
  if (imus.empty()) {
    throw std::invalid_argument("make_filter_state: need at least one IMU");
  }
  FilterState x;
  x.body = body;
  x.imus = imus;
  x.imus[0].pinned = true;
  x.imus[0].p_BI.setZero();
  x.imus[0].q_BI = Quat::identity();
  const int n = x.dim();
  x.P = MatX::Zero(n, n);
  x.P.block<3, 3>(kErrAcc, kErrAcc) = s.body_a * s.body_a * Mat3::Identity();
  x.P.block<3, 3>(kErrOmega, kErrOmega) = s.body_w * s.body_w * Mat3::Identity();
  x.P.block<3, 3>(kErrAlpha, kErrAlpha) = s.body_alpha * s.body_alpha * Mat3::Identity();
  for (int i = 0; i < x.n_imus(); ++i) {
    const int base = imu_err_base(i);
    if (!x.imus[i].pinned) {
      x.P.block<3, 3>(base + kImuErrPos, base + kImuErrPos) =
          s.imu_pos * s.imu_pos * Mat3::Identity();
      x.P.block<3, 3>(base + kImuErrTheta, base + kImuErrTheta) =
          s.imu_ang * s.imu_ang * Mat3::Identity();
    }
    x.P.block<3, 3>(base + kImuErrBa, base + kImuErrBa) =
        s.imu_ba * s.imu_ba * Mat3::Identity();
    x.P.block<3, 3>(base + kImuErrBw, base + kImuErrBw) =
        s.imu_bw * s.imu_bw * Mat3::Identity();
  }
  return x;
}

/// Multiplicative error injection. Vector states are additive, attitude
/// errors are right-multiplied body-frame rotation vectors, pinned blocks
/// ignore their entries.
inline FilterState inject_error(const FilterState& x, const VecX& dx) {
  if (dx.size() != x.dim()) {
    throw std::invalid_argument("inject_error: error vector has dimension " +
                                std::to_string(dx.size()) + ", state needs " +
                                std::to_string(x.dim()));
  }
  FilterState out = x;
  out.body.p += dx.segment<3>(kErrPos);
  out.body.v += dx.segment<3>(kErrVel);
  out.body.a += dx.segment<3>(kErrAcc);
  out.body.q_GB = quat_mul(out.body.q_GB, quat_from_rotvec(dx.segment<3>(kErrTheta)));
  out.body.w += dx.segment<3>(kErrOmega);
  out.body.alpha += dx.segment<3>(kErrAlpha);
  for (int i = 0; i < out.n_imus(); ++i) {
    const int base = imu_err_base(i);
    ImuCalibration& imu = out.imus[i];
    if (!imu.pinned) {
      imu.p_BI += dx.segment<3>(base + kImuErrPos);
      imu.q_BI = quat_mul(imu.q_BI, quat_from_rotvec(dx.segment<3>(base + kImuErrTheta)));
    }
    imu.b_a += dx.segment<3>(base + kImuErrBa);
    imu.b_w += dx.segment<3>(base + kImuErrBw);
  }
  return out;
}

/// Error vector from a to b: additive differences for vector states,
/// right-multiplicative rotation vectors for attitudes. Inverse of
/// inject_error for unpinned states; pinned blocks report the raw
/// difference, which injection would have ignored.
inline VecX state_boxminus(const FilterState& b, const FilterState& a) {
  if (b.n_imus() != a.n_imus()) {
    throw std::invalid_argument("state_boxminus: IMU counts differ");
  }
  VecX dx = VecX::Zero(a.dim());
  dx.segment<3>(kErrPos) = b.body.p - a.body.p;
  dx.segment<3>(kErrVel) = b.body.v - a.body.v;
  dx.segment<3>(kErrAcc) = b.body.a - a.body.a;
  dx.segment<3>(kErrTheta) = quat_boxminus(b.body.q_GB, a.body.q_GB);
  dx.segment<3>(kErrOmega) = b.body.w - a.body.w;
  dx.segment<3>(kErrAlpha) = b.body.alpha - a.body.alpha;
  for (int i = 0; i < a.n_imus(); ++i) {
    const int base = imu_err_base(i);
    dx.segment<3>(base + kImuErrPos) = b.imus[i].p_BI - a.imus[i].p_BI;
    dx.segment<3>(base + kImuErrTheta) = quat_boxminus(b.imus[i].q_BI, a.imus[i].q_BI);
    dx.segment<3>(base + kImuErrBa) = b.imus[i].b_a - a.imus[i].b_a;
    dx.segment<3>(base + kImuErrBw) = b.imus[i].b_w - a.imus[i].b_w;
  }
  return dx;
}

/// Force exact symmetry.
inline void symmetrize(MatX& P) { P = 0.5 * (P + P.transpose()).eval(); }

/// Symmetry and eigenvalue-floor check used by tests and paranoid runs.
/// Returns an empty string when healthy, else a description.
inline std::string covariance_health(const MatX& P) {
  const double scale = std::max(1.0, P.cwiseAbs().maxCoeff());
  if (!P.allFinite()) return "covariance has non-finite entries";
  const double asym = (P - P.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * scale) {
    return "covariance asymmetry " + std::to_string(asym);
  }
  Eigen::SelfAdjointEigenSolver<MatX> es(P, Eigen::EigenvaluesOnly);
  const double min_eig = es.eigenvalues().minCoeff();
  if (min_eig < -1e-9) {
    return "covariance min eigenvalue " + std::to_string(min_eig);
  }
  return {};
}

}  // namespace mimu
