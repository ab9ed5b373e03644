// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>

#include "mimu/camera_update.hpp"
#include "mimu/imu_update.hpp"
#include "mimu/so3.hpp"
#include "mimu/state.hpp"

namespace mimu {

/// Classical 15-state error-state KF: IMU measurements drive the prediction
/// step (zero-order hold), the camera is the only update. This is the
/// single-IMU comparison baseline; it estimates position, velocity,
/// attitude, and the driving IMU's biases. Error layout:
/// [dp dv dtheta db_a db_w].
class BaselineFilter {
 public:
  static constexpr int kDim = 15;
  using Mat15 = Eigen::Matrix<double, kDim, kDim>;

  Vec3 p{Vec3::Zero()};
  Vec3 v{Vec3::Zero()};
  Quat q_GB{};
  Vec3 b_a{Vec3::Zero()};
  Vec3 b_w{Vec3::Zero()};
  Mat15 P{Mat15::Zero()};
  double t{0.0};

  NoiseParams noise;  // densities of the driving IMU

  void store_sample(const Vec3& accel, const Vec3& gyro) {
    last_accel_ = accel;
    last_gyro_ = gyro;
    have_sample_ = true;
  }

  /// Zero-order-hold propagation to target_t with the stored IMU sample.
  /// Before the first sample arrives the body is assumed at rest.
  void propagate_to(double target_t) {
    double remaining = target_t - t;
    if (remaining < 0.0) {
      throw std::invalid_argument("baseline propagate_to: target in the past");
    }
    while (remaining > 1e-12) {
      const double dt = std::min(remaining, kMaxPropagationDt);
      step(dt);
      remaining -= dt;
    }
    t = target_t;
  }

  /// Propagate to the sample time, then hold this sample for the next span.
  MeasurementOutcome process_imu(const ImuSample& z) {
    if (z.t < t - 1e-12) return MeasurementOutcome::kDroppedStale;
    propagate_to(std::max(z.t, t));
    store_sample(z.accel, z.gyro);
    return MeasurementOutcome::kFused;
  }

  MeasurementOutcome process_camera(const CameraSample& z, const CameraModel& cam,
                                    const LandmarkSet& landmarks) {
    if (z.t < t - 1e-12) return MeasurementOutcome::kDroppedStale;
    propagate_to(std::max(z.t, t));
    if (z.landmark_ids.empty()) return MeasurementOutcome::kFused;
    if (z.landmark_ids.size() != z.pixels.size()) {
      throw std::invalid_argument("baseline camera: ids and pixels differ in length");
    }

    const int m = static_cast<int>(z.landmark_ids.size());
    MatX H = MatX::Zero(2 * m, kDim);
    VecX r = VecX::Zero(2 * m);
    const Mat3 C_GB = quat_to_rot(q_GB);
    const Mat3 C_BCt = quat_to_rot(cam.q_BC).transpose();
    for (int k = 0; k < m; ++k) {
      const int id = z.landmark_ids[static_cast<std::size_t>(k)];
      if (id < 0 || id >= static_cast<int>(landmarks.size())) {
        throw std::invalid_argument("baseline camera: landmark id out of range");
      }
      const Vec3& L = landmarks[static_cast<std::size_t>(id)];
      const Vec3 pc = C_BCt * (C_GB.transpose() * (L - p) - cam.p_BC);
      if (pc.z() < cam.min_depth) {
        throw std::invalid_argument("baseline camera: landmark behind camera");
      }
      Vec2 uv;
      uv.x() = cam.focal_px * pc.x() / pc.z() + cam.principal.x();
      uv.y() = cam.focal_px * pc.y() / pc.z() + cam.principal.y();
      r.segment<2>(2 * k) = z.pixels[static_cast<std::size_t>(k)] - uv;

      Eigen::Matrix<double, 2, 3> J;
      const double zc = pc.z();
      J << cam.focal_px / zc, 0.0, -cam.focal_px * pc.x() / (zc * zc),
          0.0, cam.focal_px / zc, -cam.focal_px * pc.y() / (zc * zc);
      H.block<2, 3>(2 * k, 0) = -J * C_BCt * C_GB.transpose();
      H.block<2, 3>(2 * k, 6) = J * C_BCt * skew(C_GB.transpose() * (L - p));
    }

    const MatX R =
        MatX::Identity(2 * m, 2 * m) * (cam.pixel_noise_std * cam.pixel_noise_std);
    const MatX PHt = P * H.transpose();
    MatX S = H * PHt + R;
    S = 0.5 * (S + S.transpose()).eval();
    Eigen::LDLT<MatX> ldlt(S);
    if (ldlt.info() != Eigen::Success || !ldlt.vectorD().allFinite() ||
        ldlt.vectorD().minCoeff() <= 0.0) {
      throw FilterDivergence("baseline camera update: innovation covariance not PD");
    }
    const MatX K = ldlt.solve(PHt.transpose()).transpose();
    const VecX dx = K * r;
    p += dx.segment<3>(0);
    v += dx.segment<3>(3);
    q_GB = quat_mul(q_GB, quat_from_rotvec(dx.segment<3>(6)));
    b_a += dx.segment<3>(9);
    b_w += dx.segment<3>(12);
    const Mat15 A = Mat15::Identity() - (K * H).eval();
    P = A * P * A.transpose() + K * R * K.transpose();
    P = 0.5 * (P + P.transpose()).eval();
    if (!P.allFinite()) throw FilterDivergence("baseline camera update: non-finite P");
    return MeasurementOutcome::kFused;
  }

 private:
  Vec3 last_accel_{Vec3::Zero()};
  Vec3 last_gyro_{Vec3::Zero()};
  bool have_sample_{false};

  void step(double dt) {
    const Mat3 C = quat_to_rot(q_GB);
    // at rest until the first measurement: assume the accelerometer reads
    // the gravity reaction and the gyro reads the bias
    const Vec3 am = have_sample_ ? last_accel_ : (C.transpose() * -gravity() + b_a).eval();
    const Vec3 wm = have_sample_ ? last_gyro_ : b_w;
    const Vec3 a_hat = am - b_a;
    const Vec3 w_hat = wm - b_w;
    const Vec3 a_world = C * a_hat + gravity();

    Mat15 F = Mat15::Identity();
    F.block<3, 3>(0, 3) = dt * Mat3::Identity();
    F.block<3, 3>(3, 6) = -C * skew(a_hat) * dt;
    F.block<3, 3>(3, 9) = -C * dt;
    const Vec3 dtheta = w_hat * dt;
    F.block<3, 3>(6, 6) = quat_to_rot(quat_from_rotvec(dtheta)).transpose();
    F.block<3, 3>(6, 12) = -so3_right_jacobian(dtheta) * dt;

    Mat15 Q = Mat15::Zero();
    Q.block<3, 3>(3, 3) =
        noise.accel_density * noise.accel_density * dt * Mat3::Identity();
    Q.block<3, 3>(6, 6) = noise.gyro_density * noise.gyro_density * dt * Mat3::Identity();
    Q.block<3, 3>(9, 9) =
        noise.accel_bias_rw * noise.accel_bias_rw * dt * Mat3::Identity();
    Q.block<3, 3>(12, 12) = noise.gyro_bias_rw * noise.gyro_bias_rw * dt * Mat3::Identity();

    p += v * dt;
    v += a_world * dt;
    q_GB = quat_mul(q_GB, quat_from_rotvec(w_hat * dt));
    t += dt;
    P = F * P * F.transpose() + Q;
    P = 0.5 * (P + P.transpose()).eval();
  }
};

}  // namespace mimu
