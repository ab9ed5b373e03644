// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>

#include "mimu/state.hpp"

namespace mimu::test {

template <class Rng>
Vec3 random_vec3(Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  return Vec3(n(rng), n(rng), n(rng));
}

template <class Rng>
Quat random_quat(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Quat q;
  q.w = n(rng);
  q.x = n(rng);
  q.y = n(rng);
  q.z = n(rng);
  return q.normalized();
}

/// Generic motion state with nonzero rates everywhere. All IMUs unpinned so
/// error injection reaches every coordinate (finite differences need that).
template <class Rng>
FilterState random_state(int n_imus, Rng& rng, bool pin_first = false) {
  FilterState x;
  x.body.p = random_vec3(rng, 2.0);
  x.body.v = random_vec3(rng, 1.0);
  x.body.a = random_vec3(rng, 2.0);
  x.body.q_GB = random_quat(rng);
  x.body.w = random_vec3(rng, 1.0);
  x.body.alpha = random_vec3(rng, 1.0);
  for (int i = 0; i < n_imus; ++i) {
    ImuCalibration imu;
    if (i > 0 || !pin_first) {
      imu.p_BI = random_vec3(rng, 0.1);
      imu.q_BI = random_quat(rng);
    }
    imu.b_a = random_vec3(rng, 0.05);
    imu.b_w = random_vec3(rng, 0.005);
    imu.pinned = pin_first && i == 0;
    x.imus.push_back(imu);
  }
  x.P = MatX::Identity(x.dim(), x.dim());
  return x;
}

template <class Rng>
MatX random_psd(int n, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  MatX A(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = d(rng);
  return A * A.transpose() / n;
}

/// Central finite differences of a state-to-vector map, perturbing through
/// the multiplicative error injection.
template <class Fn>
MatX numeric_jacobian(Fn&& h, const FilterState& x, int out_dim, double eps = 1e-6) {
  const int n = x.dim();
  MatX J(out_dim, n);
  for (int j = 0; j < n; ++j) {
    VecX dx = VecX::Zero(n);
    dx(j) = eps;
    const VecX hp = h(inject_error(x, dx));
    dx(j) = -eps;
    const VecX hm = h(inject_error(x, dx));
    J.col(j) = (hp - hm) / (2.0 * eps);
  }
  return J;
}

/// Relative agreement between an analytic Jacobian and its finite-difference
/// estimate: max abs entry difference scaled by the analytic magnitude.
inline double relative_difference(const MatX& analytic, const MatX& fd) {
  const double scale = std::max(1.0, analytic.cwiseAbs().maxCoeff());
  return (analytic - fd).cwiseAbs().maxCoeff() / scale;
}

}  // namespace mimu::test
