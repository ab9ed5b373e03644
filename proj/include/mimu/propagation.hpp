// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <vector>

#include "mimu/state.hpp"

namespace mimu {

/// Largest single propagation step; longer gaps are split.
constexpr double kMaxPropagationDt = 1.0;

/// Process noise drives for the constant-acceleration body model plus
/// per-IMU bias random walks. All are continuous-time PSDs (unit/s).
///
/// Q_alpha is zero by default: the nominal model treats angular acceleration
/// as an unforced state. A nonzero drive lets the filter track angular
/// acceleration that actually varies, which trajectories with any rotational
/// excitation need — with the drive at zero its variance collapses and the
/// stale estimate leaks into the rate and bias estimates through the
/// prediction and the lever-arm terms.
struct ProcessNoise {
  Mat3 Q_a{Mat3::Identity()};         // (m/s^2)^2 / s on the specific-force state
  Mat3 Q_w{0.1 * Mat3::Identity()};   // (rad/s)^2 / s on the angular-rate state
  Mat3 Q_alpha{Mat3::Zero()};         // (rad/s^2)^2 / s on angular acceleration
  std::vector<Mat3> Q_ba;             // per-IMU accel-bias walk
  std::vector<Mat3> Q_bw;             // per-IMU gyro-bias walk

  static ProcessNoise from_noise_params(const Mat3& qa, const Mat3& qw,
                                        const std::vector<NoiseParams>& imus) {
    ProcessNoise pn;
    pn.Q_a = qa;
    pn.Q_w = qw;
    for (const NoiseParams& np : imus) {
      pn.Q_ba.push_back(np.accel_bias_rw * np.accel_bias_rw * Mat3::Identity());
      pn.Q_bw.push_back(np.gyro_bias_rw * np.gyro_bias_rw * Mat3::Identity());
    }
    return pn;
  }

  /// Default body drives with per-IMU bias walks from the noise parameters.
  static ProcessNoise from_noise_params(const std::vector<NoiseParams>& imus) {
    return from_noise_params(Mat3::Identity(), 0.1 * Mat3::Identity(), imus);
  }
};

inline void check_dt(double dt) {
  if (dt < 0.0) throw std::invalid_argument("propagation: negative dt");
  if (dt > kMaxPropagationDt + 1e-12) {
    throw std::invalid_argument("propagation: dt exceeds 1 s step cap");
  }
}

/// Discrete state transition over dt: the exact solution of the
/// constant-jerk-free body model (a and alpha held constant), so position
/// and attitude carry their second-order terms. Calibration states are
/// invariant.
inline FilterState predict_state(const FilterState& x, double dt) {
  check_dt(dt);
  FilterState out = x;
  const Vec3 accel = x.body.a + gravity();
  out.body.p = x.body.p + x.body.v * dt + 0.5 * dt * dt * accel;
  out.body.v = x.body.v + accel * dt;
  out.body.q_GB =
      quat_mul(x.body.q_GB,
               quat_from_rotvec(x.body.w * dt + 0.5 * dt * dt * x.body.alpha));
  out.body.w = x.body.w + x.body.alpha * dt;
  out.t = x.t + dt;
  return out;
}

/// Exact Jacobian of predict_state on the error state.
///
/// Under the global specific-force model the velocity row has no attitude
/// coupling (gravity is a constant, not rotated through q), so the
/// position/orientation correlation block is identically zero. The attitude
/// row is the discrete right-multiplicative error transport for the rotation
/// increment u = w dt + alpha dt^2/2:
///   dtheta' = C(q(u))^T dtheta + Jr(u) (dt domega + dt^2/2 dalpha)
inline MatX compute_F(const FilterState& x, double dt) {
  check_dt(dt);
  const int n = x.dim();
  MatX F = MatX::Identity(n, n);
  F.block<3, 3>(kErrPos, kErrVel) = dt * Mat3::Identity();
  F.block<3, 3>(kErrPos, kErrAcc) = 0.5 * dt * dt * Mat3::Identity();
  F.block<3, 3>(kErrVel, kErrAcc) = dt * Mat3::Identity();
  const Vec3 u = x.body.w * dt + 0.5 * dt * dt * x.body.alpha;
  const Mat3 Jr = so3_right_jacobian(u);
  F.block<3, 3>(kErrTheta, kErrTheta) = quat_to_rot(quat_from_rotvec(u)).transpose();
  F.block<3, 3>(kErrTheta, kErrOmega) = Jr * dt;
  F.block<3, 3>(kErrTheta, kErrAlpha) = Jr * (0.5 * dt * dt);
  F.block<3, 3>(kErrOmega, kErrAlpha) = dt * Mat3::Identity();
  return F;
}

/// Block-diagonal process noise for one step of length dt. Bias random
/// walks only enter in the calibration case; extrinsics never receive
/// process noise.
inline MatX build_Q(const ProcessNoise& pn, int n_imus, double dt, bool calibrating) {
  if (dt <= 0.0) throw std::invalid_argument("build_Q: dt must be positive");
  const int n = error_dim(n_imus);
  MatX Q = MatX::Zero(n, n);
  Q.block<3, 3>(kErrAcc, kErrAcc) = pn.Q_a * dt;
  Q.block<3, 3>(kErrOmega, kErrOmega) = pn.Q_w * dt;
  Q.block<3, 3>(kErrAlpha, kErrAlpha) = pn.Q_alpha * dt;
  if (calibrating) {
    for (int i = 0; i < n_imus; ++i) {
      const int base = imu_err_base(i);
      const Mat3 qba = i < static_cast<int>(pn.Q_ba.size()) ? pn.Q_ba[i] : Mat3::Zero();
      const Mat3 qbw = i < static_cast<int>(pn.Q_bw.size()) ? pn.Q_bw[i] : Mat3::Zero();
      Q.block<3, 3>(base + kImuErrBa, base + kImuErrBa) = qba * dt;
      Q.block<3, 3>(base + kImuErrBw, base + kImuErrBw) = qbw * dt;
    }
  }
  return Q;
}

/// Covariance prediction, F P F^T + F Q F^T, symmetrized.
inline MatX predict_covariance(const MatX& P, const MatX& F, const MatX& Q) {
  if (P.rows() != F.cols() || Q.rows() != F.cols() || P.rows() != P.cols()) {
    throw std::invalid_argument("predict_covariance: dimension mismatch");
  }
  MatX out = F * (P + Q) * F.transpose();
  symmetrize(out);
  return out;
}

/// Propagate state and covariance to target_t, splitting long gaps into
/// sub-steps no longer than the 1 s cap.
inline void propagate_to(FilterState& x, double target_t, const ProcessNoise& pn,
                         bool calibrating) {
  double remaining = target_t - x.t;
  if (remaining < 0.0) throw std::invalid_argument("propagate_to: target in the past");
  while (remaining > 1e-12) {
    const double dt = std::min(remaining, kMaxPropagationDt);
    const MatX F = compute_F(x, dt);
    const MatX Q = build_Q(pn, x.n_imus(), dt, calibrating);
    x.P = predict_covariance(x.P, F, Q);
    FilterState next = predict_state(x, dt);
    x.body = next.body;
    x.t = next.t;
    remaining = target_t - x.t;
  }
  x.t = target_t;
}

}  // namespace mimu
