// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

#include "mimu/propagation.hpp"
#include "mimu/state.hpp"

namespace mimu {

/// Thrown when the innovation covariance cannot be factorized; the caller
/// aborts the run and records a divergence.
struct FilterDivergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Timestamped IMU sample: specific force and angular rate in the sensor
/// frame, with its 6x6 measurement covariance.
struct ImuSample {
  double t{0.0};
  Vec3 accel{Vec3::Zero()};
  Vec3 gyro{Vec3::Zero()};
  int imu_id{0};
  Eigen::Matrix<double, 6, 6> R{Eigen::Matrix<double, 6, 6>::Identity()};
};

/// 95% chi-square threshold for a 6-dof innovation.
constexpr double kChi2Gate6Dof = 12.592;

struct ImuUpdateOptions {
  bool calibrating{true};
  bool chi2_gate{false};
  bool paranoid_covariance{false};  // eigenvalue floor check after every update
  int iterations{1};                // Gauss-Newton relinearizations per update
};

/// Outcome of feeding one measurement to the filter.
enum class MeasurementOutcome { kFused, kDroppedStale, kDroppedGate };

/// Accelerometer and gyroscope reading implied by a body state and one
/// IMU's calibration. The specific force state is global, so it is mapped
/// into the body frame before the lever-arm terms and then into the sensor
/// frame; biases add on top.
inline Vec6 imu_measurement_model(const BodyState& body, const ImuCalibration& imu) {
  const Mat3 C_GB = quat_to_rot(body.q_GB);
  const Mat3 C_BI = quat_to_rot(imu.q_BI);
  const Vec3 a_body = C_GB.transpose() * body.a + body.alpha.cross(imu.p_BI) +
                      body.w.cross(body.w.cross(imu.p_BI));
  Vec6 z;
  z.head<3>() = C_BI.transpose() * a_body + imu.b_a;
  z.tail<3>() = C_BI.transpose() * body.w + imu.b_w;
  return z;
}

inline Vec6 predict_imu_measurement(const FilterState& x, int i) {
  if (i < 0 || i >= x.n_imus()) {
    throw std::invalid_argument("predict_imu_measurement: bad IMU index");
  }
  return imu_measurement_model(x.body, x.imus[i]);
}

/// 6x18 Jacobian of the IMU measurement w.r.t. the body error state.
inline Eigen::Matrix<double, 6, 18> compute_H_body(const FilterState& x, int i) {
  if (i < 0 || i >= x.n_imus()) {
    throw std::invalid_argument("compute_H_body: bad IMU index");
  }
  const ImuCalibration& imu = x.imus[i];
  const Mat3 C_GB = quat_to_rot(x.body.q_GB);
  const Mat3 C_BIt = quat_to_rot(imu.q_BI).transpose();
  const Vec3& w = x.body.w;
  const Vec3& p = imu.p_BI;

  Eigen::Matrix<double, 6, 18> H = Eigen::Matrix<double, 6, 18>::Zero();
  H.block<3, 3>(0, kErrAcc) = C_BIt * C_GB.transpose();
  H.block<3, 3>(0, kErrTheta) = C_BIt * skew(C_GB.transpose() * x.body.a);
  H.block<3, 3>(0, kErrOmega) =
      C_BIt * (skew(w) * skew(p).transpose() + skew(w.cross(p)).transpose());
  H.block<3, 3>(0, kErrAlpha) = C_BIt * skew(p).transpose();
  H.block<3, 3>(3, kErrOmega) = C_BIt;
  return H;
}

/// 6x12 Jacobian of the IMU measurement w.r.t. IMU i's calibration block.
/// Pinned extrinsic columns are zeroed unless the caller asks for the
/// unpinned system (observability analysis).
inline Eigen::Matrix<double, 6, 12> compute_H_calib(const FilterState& x, int i,
                                                    bool zero_pinned_columns = true) {
  if (i < 0 || i >= x.n_imus()) {
    throw std::invalid_argument("compute_H_calib: bad IMU index");
  }
  const ImuCalibration& imu = x.imus[i];
  const Mat3 C_GB = quat_to_rot(x.body.q_GB);
  const Mat3 C_BIt = quat_to_rot(imu.q_BI).transpose();
  const Vec3& w = x.body.w;
  const Vec3& p = imu.p_BI;
  const Vec3 a_body = C_GB.transpose() * x.body.a + x.body.alpha.cross(p) +
                      w.cross(w.cross(p));

  Eigen::Matrix<double, 6, 12> H = Eigen::Matrix<double, 6, 12>::Zero();
  H.block<3, 3>(0, kImuErrPos) = C_BIt * (skew(x.body.alpha) + skew(w) * skew(w));
  H.block<3, 3>(0, kImuErrTheta) = skew(C_BIt * a_body);
  H.block<3, 3>(0, kImuErrBa) = Mat3::Identity();
  H.block<3, 3>(3, kImuErrTheta) = skew(C_BIt * w);
  H.block<3, 3>(3, kImuErrBw) = Mat3::Identity();
  if (imu.pinned && zero_pinned_columns) {
    H.leftCols<6>().setZero();
  }
  return H;
}

/// Full-width measurement Jacobian for IMU i: body block plus the IMU's own
/// calibration block, all other columns zero. Calibration columns are zero
/// in the non-calibration case.
inline MatX assemble_imu_jacobian(const FilterState& x, int i, bool calibrating,
                                  bool zero_pinned_columns = true) {
  MatX H = MatX::Zero(6, x.dim());
  H.leftCols<18>() = compute_H_body(x, i);
  if (calibrating) {
    H.middleCols<12>(imu_err_base(i)) = compute_H_calib(x, i, zero_pinned_columns);
  }
  return H;
}

/// EKF measurement update with Joseph-form covariance. Throws
/// FilterDivergence when the innovation covariance cannot be solved.
inline FilterState ekf_update(const FilterState& x, const MatX& H, const VecX& r,
                              const MatX& R, bool paranoid = false) {
  if (H.cols() != x.dim() || H.rows() != r.size() || R.rows() != r.size() ||
      R.cols() != r.size()) {
    throw std::invalid_argument("ekf_update: dimension mismatch");
  }
  const MatX PHt = x.P * H.transpose();
  MatX S = H * PHt + R;
  symmetrize(S);
  Eigen::LDLT<MatX> ldlt(S);
  if (ldlt.info() != Eigen::Success || !ldlt.vectorD().allFinite() ||
      ldlt.vectorD().minCoeff() <= 0.0) {
    throw FilterDivergence("ekf_update: innovation covariance not positive definite");
  }
  const MatX K = ldlt.solve(PHt.transpose()).transpose();
  FilterState out = inject_error(x, K * r);
  const MatX A = MatX::Identity(x.dim(), x.dim()) - K * H;
  out.P = A * x.P * A.transpose() + K * R * K.transpose();
  symmetrize(out.P);
  zero_pinned_blocks(out);
  if (!out.P.allFinite()) {
    throw FilterDivergence("ekf_update: covariance has non-finite entries");
  }
  if (paranoid) {
    const std::string msg = covariance_health(out.P);
    if (!msg.empty()) throw FilterDivergence("ekf_update: " + msg);
  }
  return out;
}

/// Iterated (Gauss-Newton) measurement update. The model and Jacobian are
/// re-evaluated at each iterate while the gain is always formed from the
/// prior covariance, which removes most of the linearization bias when the
/// prior error is large relative to the measurement noise. One iteration is
/// exactly the single-step EKF update; the covariance uses the Jacobian of
/// the final iterate in Joseph form.
template <class MeasFn, class JacFn>
FilterState iterated_update(const FilterState& x, MeasFn&& predict, JacFn&& jacobian,
                            const VecX& z, const MatX& R, int iterations,
                            bool paranoid = false) {
  if (iterations < 1) {
    throw std::invalid_argument("iterated_update: iterations must be >= 1");
  }
  FilterState xi = x;
  MatX H;
  MatX K;
  for (int it = 0; it < iterations; ++it) {
    H = jacobian(xi);
    if (H.cols() != x.dim() || H.rows() != z.size() || R.rows() != z.size() ||
        R.cols() != z.size()) {
      throw std::invalid_argument("iterated_update: dimension mismatch");
    }
    VecX r = z - predict(xi);
    if (it > 0) {
      // Refer the residual back to the prior linearization point.
      r += H * state_boxminus(xi, x);
    }
    const MatX PHt = x.P * H.transpose();
    MatX S = H * PHt + R;
    symmetrize(S);
    Eigen::LDLT<MatX> ldlt(S);
    if (ldlt.info() != Eigen::Success || !ldlt.vectorD().allFinite() ||
        ldlt.vectorD().minCoeff() <= 0.0) {
      throw FilterDivergence(
          "iterated_update: innovation covariance not positive definite");
    }
    K = ldlt.solve(PHt.transpose()).transpose();
    xi = inject_error(x, K * r);
  }
  const MatX A = MatX::Identity(x.dim(), x.dim()) - K * H;
  xi.P = A * x.P * A.transpose() + K * R * K.transpose();
  symmetrize(xi.P);
  zero_pinned_blocks(xi);
  if (!xi.P.allFinite()) {
    throw FilterDivergence("iterated_update: covariance has non-finite entries");
  }
  if (paranoid) {
    const std::string msg = covariance_health(xi.P);
    if (!msg.empty()) throw FilterDivergence("iterated_update: " + msg);
  }
  return xi;
}

/// Propagate to the sample time and fuse one IMU measurement. Stale samples
/// are dropped, not errors.
inline MeasurementOutcome process_imu(FilterState& x, const ImuSample& z,
                                      const ProcessNoise& pn,
                                      const ImuUpdateOptions& opts) {
  if (z.t < x.t - 1e-12) {
    return MeasurementOutcome::kDroppedStale;
  }
  propagate_to(x, std::max(z.t, x.t), pn, opts.calibrating);
  const Vec6 predicted = predict_imu_measurement(x, z.imu_id);
  Vec6 r;
  r.head<3>() = z.accel - predicted.head<3>();
  r.tail<3>() = z.gyro - predicted.tail<3>();
  const MatX H = assemble_imu_jacobian(x, z.imu_id, opts.calibrating);
  if (opts.chi2_gate) {
    MatX S = H * x.P * H.transpose() + z.R;
    symmetrize(S);
    Eigen::LDLT<MatX> ldlt(S);
    if (ldlt.info() == Eigen::Success && ldlt.vectorD().minCoeff() > 0.0) {
      const double m2 = r.dot(ldlt.solve(r));
      if (m2 > kChi2Gate6Dof) return MeasurementOutcome::kDroppedGate;
    }
  }
  if (opts.iterations > 1) {
    VecX zvec(6);
    zvec.head<3>() = z.accel;
    zvec.tail<3>() = z.gyro;
    x = iterated_update(
        x,
        [&](const FilterState& s) -> VecX { return predict_imu_measurement(s, z.imu_id); },
        [&](const FilterState& s) -> MatX {
          return assemble_imu_jacobian(s, z.imu_id, opts.calibrating);
        },
        zvec, z.R, opts.iterations, opts.paranoid_covariance);
  } else {
    x = ekf_update(x, H, r, z.R, opts.paranoid_covariance);
  }
  return MeasurementOutcome::kFused;
}

}  // namespace mimu
