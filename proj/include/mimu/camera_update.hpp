// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mimu/imu_update.hpp"
#include "mimu/propagation.hpp"
#include "mimu/state.hpp"

namespace mimu {

/// Pinhole camera with known mounting relative to the body frame.
struct CameraModel {
  double focal_px{400.0};
  Vec2 principal{320.0, 200.0};
  int width{640};
  int height{400};
  double pixel_noise_std{0.5};
  Vec3 p_BC{Vec3::Zero()};
  Quat q_BC{};  // identity: camera axes aligned with body

  double min_depth{0.1};
};

/// Camera looking along body +x: camera z forward, x right (-y body),
/// y down (-z body).
inline Quat forward_camera_orientation() {
  Mat3 R_BC;
  R_BC.col(0) = Vec3(0.0, -1.0, 0.0);
  R_BC.col(1) = Vec3(0.0, 0.0, -1.0);
  R_BC.col(2) = Vec3(1.0, 0.0, 0.0);
  const Eigen::Quaterniond eq(R_BC);
  Quat q;
  q.w = eq.w();
  q.x = eq.x();
  q.y = eq.y();
  q.z = eq.z();
  return q.normalized();
}

/// Known landmark positions in the global frame.
using LandmarkSet = std::vector<Vec3>;

/// Planar grid of nx*ny landmarks centered on the y axis, offset_m ahead of
/// the origin along +x, spanning y and z.
inline LandmarkSet make_landmark_grid(int nx, int ny, double spacing_m, double offset_m) {
  if (nx < 1 || ny < 1) throw std::invalid_argument("make_landmark_grid: empty grid");
  LandmarkSet pts;
  pts.reserve(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny));
  const double y0 = -0.5 * spacing_m * (nx - 1);
  const double z0 = -0.5 * spacing_m * (ny - 1);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      pts.emplace_back(offset_m, y0 + spacing_m * i, z0 + spacing_m * j);
    }
  }
  return pts;
}

/// One camera epoch: pixel observations of a subset of the landmarks.
struct CameraSample {
  double t{0.0};
  std::vector<int> landmark_ids;
  std::vector<Vec2> pixels;
};

/// Landmark position in the camera frame for the given body pose.
inline Vec3 landmark_in_camera(const CameraModel& cam, const BodyState& body,
                               const Vec3& landmark) {
  const Mat3 C_GB = quat_to_rot(body.q_GB);
  const Mat3 C_BC = quat_to_rot(cam.q_BC);
  return C_BC.transpose() * (C_GB.transpose() * (landmark - body.p) - cam.p_BC);
}

/// Pixel projection, or nullopt when the point is behind the camera or
/// outside the image.
inline std::optional<Vec2> project_landmark(const CameraModel& cam, const BodyState& body,
                                            const Vec3& landmark) {
  const Vec3 pc = landmark_in_camera(cam, body, landmark);
  if (pc.z() < cam.min_depth) return std::nullopt;
  Vec2 uv;
  uv.x() = cam.focal_px * pc.x() / pc.z() + cam.principal.x();
  uv.y() = cam.focal_px * pc.y() / pc.z() + cam.principal.y();
  if (uv.x() < 0.0 || uv.x() > cam.width || uv.y() < 0.0 || uv.y() > cam.height) {
    return std::nullopt;
  }
  return uv;
}

/// 2xdim Jacobian of one pixel observation. Only position and attitude
/// columns are populated.
inline MatX compute_H_camera(const CameraModel& cam, const FilterState& x,
                             const Vec3& landmark) {
  const Mat3 C_GB = quat_to_rot(x.body.q_GB);
  const Mat3 C_BCt = quat_to_rot(cam.q_BC).transpose();
  const Vec3 pc = landmark_in_camera(cam, x.body, landmark);
  if (pc.z() < cam.min_depth) {
    throw std::invalid_argument("compute_H_camera: landmark not in view");
  }
  Eigen::Matrix<double, 2, 3> J_proj;
  const double z = pc.z();
  J_proj << cam.focal_px / z, 0.0, -cam.focal_px * pc.x() / (z * z),
      0.0, cam.focal_px / z, -cam.focal_px * pc.y() / (z * z);

  MatX H = MatX::Zero(2, x.dim());
  H.block<2, 3>(0, kErrPos) = -J_proj * C_BCt * C_GB.transpose();
  H.block<2, 3>(0, kErrTheta) =
      J_proj * C_BCt * skew(C_GB.transpose() * (landmark - x.body.p));
  return H;
}

/// Propagate to the sample time and fuse all pixel observations in one
/// stacked update.
inline MeasurementOutcome process_camera(FilterState& x, const CameraSample& z,
                                         const CameraModel& cam,
                                         const LandmarkSet& landmarks,
                                         const ProcessNoise& pn,
                                         const ImuUpdateOptions& opts) {
  if (z.landmark_ids.size() != z.pixels.size()) {
    throw std::invalid_argument("process_camera: ids and pixels differ in length");
  }
  if (z.t < x.t - 1e-12) {
    return MeasurementOutcome::kDroppedStale;
  }
  propagate_to(x, std::max(z.t, x.t), pn, opts.calibrating);
  if (z.landmark_ids.empty()) {
    return MeasurementOutcome::kFused;
  }
  const int m = static_cast<int>(z.landmark_ids.size());
  MatX H = MatX::Zero(2 * m, x.dim());
  VecX r = VecX::Zero(2 * m);
  for (int k = 0; k < m; ++k) {
    const int id = z.landmark_ids[static_cast<std::size_t>(k)];
    if (id < 0 || id >= static_cast<int>(landmarks.size())) {
      throw std::invalid_argument("process_camera: landmark id out of range");
    }
    const Vec3& L = landmarks[static_cast<std::size_t>(id)];
    const Vec3 pc = landmark_in_camera(cam, x.body, L);
    if (pc.z() < cam.min_depth) {
      throw std::invalid_argument("process_camera: landmark behind camera");
    }
    Vec2 uv;
    uv.x() = cam.focal_px * pc.x() / pc.z() + cam.principal.x();
    uv.y() = cam.focal_px * pc.y() / pc.z() + cam.principal.y();
    r.segment<2>(2 * k) = z.pixels[static_cast<std::size_t>(k)] - uv;
    H.middleRows<2>(2 * k) = compute_H_camera(cam, x, L);
  }
  const MatX R = MatX::Identity(2 * m, 2 * m) *
                 (cam.pixel_noise_std * cam.pixel_noise_std);
  if (opts.iterations > 1) {
    VecX zvec = VecX::Zero(2 * m);
    for (int k = 0; k < m; ++k) {
      zvec.segment<2>(2 * k) = z.pixels[static_cast<std::size_t>(k)];
    }
    const auto predict = [&](const FilterState& s) -> VecX {
      VecX out = VecX::Zero(2 * m);
      for (int k = 0; k < m; ++k) {
        const Vec3& L = landmarks[static_cast<std::size_t>(z.landmark_ids[static_cast<std::size_t>(k)])];
        const Vec3 pc = landmark_in_camera(cam, s.body, L);
        if (pc.z() < cam.min_depth) {
          throw FilterDivergence("process_camera: iterate lost view of landmark");
        }
        out[2 * k] = cam.focal_px * pc.x() / pc.z() + cam.principal.x();
        out[2 * k + 1] = cam.focal_px * pc.y() / pc.z() + cam.principal.y();
      }
      return out;
    };
    const auto jacobian = [&](const FilterState& s) -> MatX {
      MatX Hs = MatX::Zero(2 * m, s.dim());
      for (int k = 0; k < m; ++k) {
        const Vec3& L = landmarks[static_cast<std::size_t>(z.landmark_ids[static_cast<std::size_t>(k)])];
        if (landmark_in_camera(cam, s.body, L).z() < cam.min_depth) {
          throw FilterDivergence("process_camera: iterate lost view of landmark");
        }
        Hs.middleRows<2>(2 * k) = compute_H_camera(cam, s, L);
      }
      return Hs;
    };
    x = iterated_update(x, predict, jacobian, zvec, R, opts.iterations,
                        opts.paranoid_covariance);
  } else {
    x = ekf_update(x, H, r, R, opts.paranoid_covariance);
  }
  return MeasurementOutcome::kFused;
}

}  // namespace mimu
