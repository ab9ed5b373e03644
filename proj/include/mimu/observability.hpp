// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/SVD>

#include "mimu/camera_update.hpp"
#include "mimu/imu_update.hpp"
#include "mimu/propagation.hpp"
#include "mimu/state.hpp"

namespace mimu {

/// Stacked observability matrix [H; HF; HF^2; ...; HF^n] for a fixed
/// linearization point. n defaults to the state dimension.
inline MatX build_observability_matrix(const MatX& F, const MatX& H, int n = -1) {
  if (F.rows() != F.cols() || H.cols() != F.rows()) {
    throw std::invalid_argument("build_observability_matrix: dimension mismatch");
  }
  if (n < 0) n = static_cast<int>(F.rows());
  MatX O(H.rows() * (n + 1), H.cols());
  MatX HFk = H;
  for (int k = 0; k <= n; ++k) {
    O.middleRows(k * H.rows(), H.rows()) = HFk;
    if (k < n) HFk = HFk * F;
  }
  return O;
}

struct RankReport {
  int rows{0};
  int state_dim{0};
  int rank{0};
  int deficiency{0};
  double max_singular_value{0.0};
  double threshold{0.0};
  VecX singular_values;
};

/// Numerical rank from the SVD with a relative singular value cutoff.
inline RankReport rank_report(const MatX& O, double rel_tol = 1e-8) {
  RankReport rep;
  rep.rows = static_cast<int>(O.rows());
  rep.state_dim = static_cast<int>(O.cols());
  Eigen::JacobiSVD<MatX> svd(O);
  rep.singular_values = svd.singularValues();
  rep.max_singular_value = rep.singular_values.size() > 0 ? rep.singular_values(0) : 0.0;
  rep.threshold = rel_tol * rep.max_singular_value;
  rep.rank = 0;
  for (int i = 0; i < rep.singular_values.size(); ++i) {
    if (rep.singular_values(i) > rep.threshold) ++rep.rank;
  }
  rep.deficiency = rep.state_dim - rep.rank;
  return rep;
}

struct ObservabilityOptions {
  int n_epochs{40};
  double dt{0.05};
  bool use_camera{false};
  bool calibrating{true};
  double rel_tol{1e-8};
  // Analyze the full analytic system including the reference IMU's extrinsic
  // directions instead of the production system that holds them fixed.
  bool include_pinned{false};
};

struct ObservabilityReport {
  RankReport rank;
  int pinned_dims{0};           // extrinsic dimensions held fixed by the reference IMU
  int adjusted_deficiency{0};   // deficiency beyond the pinned dimensions
  int n_imus{0};
  bool used_camera{false};
};

namespace detail {

/// Generic excitation for the linearization trajectory: smooth, non-constant
/// specific force and angular acceleration so no axis stays degenerate.
inline void set_excitation(FilterState& x, double t) {
  x.body.a = Vec3(0.8 * std::sin(0.7 * t) + 0.4, 0.6 * std::cos(1.1 * t),
                  0.5 * std::sin(1.3 * t) - 0.3);
  x.body.alpha = Vec3(0.9 * std::cos(0.8 * t), 0.7 * std::sin(1.2 * t),
                      0.5 * std::cos(0.6 * t));
}

/// Camera rows for every landmark in front of the camera, ignoring image
/// bounds: rank analysis cares about geometry, not the sensor window.
inline MatX camera_rows(const CameraModel& cam, const FilterState& x,
                        const LandmarkSet& landmarks) {
  std::vector<MatX> rows;
  for (const Vec3& L : landmarks) {
    if (landmark_in_camera(cam, x.body, L).z() < cam.min_depth) continue;
    rows.push_back(compute_H_camera(cam, x, L));
  }
  MatX H(2 * static_cast<int>(rows.size()), x.dim());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    H.middleRows<2>(2 * static_cast<int>(i)) = rows[i];
  }
  return H;
}

}  // namespace detail

/// Landmarks spread around the origin so some are always in view while the
/// body tumbles.
inline LandmarkSet omnidirectional_landmarks(double radius = 5.0) {
  LandmarkSet pts;
  const double r = radius;
  pts.emplace_back(r, 0.0, 0.0);
  pts.emplace_back(-r, 0.5, 0.0);
  pts.emplace_back(0.0, r, 0.5);
  pts.emplace_back(0.5, -r, 0.0);
  pts.emplace_back(0.0, 0.5, r);
  pts.emplace_back(0.5, 0.0, -r);
  pts.emplace_back(r * 0.7, r * 0.7, 0.3);
  pts.emplace_back(-r * 0.7, 0.3, r * 0.7);
  return pts;
}

/// Rank analysis of the stacked time-varying system H_k * Phi(k, 0) along a
/// generic rotating trajectory. A single linearization point is not enough:
/// with frozen attitude the accelerometer bias of each IMU is
/// indistinguishable from a (constantly rotated) shift of the specific
/// force, and lever arm errors mimic bias errors. Sweeping the attitude
/// through distinct orientations separates those directions, leaving only
/// global position and velocity unobservable without the camera.
inline ObservabilityReport analyze_observability(const FilterState& x0,
                                                 const ObservabilityOptions& opts,
                                                 const CameraModel* cam = nullptr,
                                                 const LandmarkSet* landmarks = nullptr) {
  if (opts.n_epochs < 1) throw std::invalid_argument("analyze_observability: n_epochs < 1");
  FilterState x = x0;
  detail::set_excitation(x, 0.0);

  const int dim = x.dim();
  std::vector<MatX> blocks;
  MatX Phi = MatX::Identity(dim, dim);
  const CameraModel default_cam = [] {
    CameraModel c;
    c.q_BC = forward_camera_orientation();
    return c;
  }();
  const LandmarkSet default_lms = omnidirectional_landmarks();
  const CameraModel& camera = cam ? *cam : default_cam;
  const LandmarkSet& lms = landmarks ? *landmarks : default_lms;

  int total_rows = 0;
  for (int k = 0; k < opts.n_epochs; ++k) {
    MatX Hk = MatX::Zero(6 * x.n_imus(), dim);
    for (int i = 0; i < x.n_imus(); ++i) {
      Hk.middleRows<6>(6 * i) =
          assemble_imu_jacobian(x, i, opts.calibrating, !opts.include_pinned);
    }
    if (opts.use_camera) {
      const MatX Hc = detail::camera_rows(camera, x, lms);
      MatX stacked(Hk.rows() + Hc.rows(), dim);
      stacked << Hk, Hc;
      Hk = std::move(stacked);
    }
    blocks.push_back(Hk * Phi);
    total_rows += static_cast<int>(Hk.rows());

    const MatX F = compute_F(x, opts.dt);
    Phi = F * Phi;
    x = predict_state(x, opts.dt);
    detail::set_excitation(x, x.t - x0.t);
  }

  MatX O(total_rows, dim);
  int row = 0;
  for (const MatX& b : blocks) {
    O.middleRows(row, b.rows()) = b;
    row += static_cast<int>(b.rows());
  }

  ObservabilityReport rep;
  rep.rank = rank_report(O, opts.rel_tol);
  rep.n_imus = x.n_imus();
  rep.used_camera = opts.use_camera;
  rep.pinned_dims = 0;
  if (opts.calibrating && !opts.include_pinned) {
    for (const ImuCalibration& imu : x.imus) {
      if (imu.pinned) rep.pinned_dims += 6;
    }
  }
  rep.adjusted_deficiency = rep.rank.deficiency - rep.pinned_dims;
  if (rep.adjusted_deficiency < 0) rep.adjusted_deficiency = 0;
  return rep;
}

}  // namespace mimu
