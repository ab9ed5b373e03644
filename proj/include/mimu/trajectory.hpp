// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

#include "mimu/state.hpp"

namespace mimu {

/// One sinusoidal term, amp * sin(2*pi*freq*t + phase).
struct Sinusoid {
  double amp{0.0};
  double freq_hz{0.0};
  double phase{0.0};

  double value(double t) const { return amp * std::sin(2.0 * M_PI * freq_hz * t + phase); }
  double d1(double t) const {
    const double w = 2.0 * M_PI * freq_hz;
    return amp * w * std::cos(w * t + phase);
  }
  double d2(double t) const {
    const double w = 2.0 * M_PI * freq_hz;
    return -amp * w * w * std::sin(w * t + phase);
  }
};

/// Sum of three sinusoids driving one coordinate.
struct AxisSignal {
  std::array<Sinusoid, 3> terms{};

  double value(double t) const {
    return terms[0].value(t) + terms[1].value(t) + terms[2].value(t);
  }
  double d1(double t) const { return terms[0].d1(t) + terms[1].d1(t) + terms[2].d1(t); }
  double d2(double t) const { return terms[0].d2(t) + terms[1].d2(t) + terms[2].d2(t); }
};

/// Sampling ranges for random trajectories. Amplitudes are additionally
/// capped so no single term demands more acceleration than the stated
/// limits; the filter models specific force and angular acceleration as
/// random walks, so unbounded trajectory jerk would break consistency.
struct TrajectoryBounds {
  double max_pos_amp_m{2.0};
  double min_freq_hz{0.05};
  double max_freq_hz{0.5};
  double max_eul_amp_rad{0.3};
  double max_accel_per_term{1.5};  // m/s^2
  double max_eul_accel_per_term{0.8};  // rad/s^2 per Euler term

  void validate() const {
    if (max_pos_amp_m < 0.0 || max_eul_amp_rad < 0.0 || min_freq_hz <= 0.0 ||
        max_freq_hz < min_freq_hz || max_accel_per_term <= 0.0 ||
        max_eul_accel_per_term <= 0.0) {
      throw std::invalid_argument("TrajectoryBounds: invalid ranges");
    }
  }
};

/// Closed-form 6-DoF trajectory: sinusoidal position per global axis and
/// sinusoidal ZYX Euler angles (roll about x, pitch about y, yaw about z).
/// Everything downstream (v, specific force, body rates, angular
/// acceleration) is analytic, so the simulator has exact ground truth for
/// every filter state.
struct TrajectoryModel {
  std::array<AxisSignal, 3> pos{};  // x, y, z in the global frame
  std::array<AxisSignal, 3> eul{};  // roll, pitch, yaw

  /// Ground-truth body state at time t. Body rates come from the exact ZYX
  /// Euler-rate map and their analytic time derivative.
  BodyState state_at(double t) const {
    BodyState s;
    s.p = Vec3(pos[0].value(t), pos[1].value(t), pos[2].value(t));
    s.v = Vec3(pos[0].d1(t), pos[1].d1(t), pos[2].d1(t));
    const Vec3 pdd(pos[0].d2(t), pos[1].d2(t), pos[2].d2(t));
    s.a = pdd - gravity();

    const double r = eul[0].value(t), p = eul[1].value(t), y = eul[2].value(t);
    const double rd = eul[0].d1(t), pd = eul[1].d1(t), yd = eul[2].d1(t);
    const double rdd = eul[0].d2(t), pdd2 = eul[1].d2(t), ydd = eul[2].d2(t);

    s.q_GB = quat_mul(quat_mul(quat_from_rotvec(Vec3(0, 0, y)),
                               quat_from_rotvec(Vec3(0, p, 0))),
                      quat_from_rotvec(Vec3(r, 0, 0)));

    const double sr = std::sin(r), cr = std::cos(r);
    const double sp = std::sin(p), cp = std::cos(p);
    s.w = Vec3(rd - yd * sp,
               pd * cr + yd * cp * sr,
               -pd * sr + yd * cp * cr);
    s.alpha = Vec3(rdd - ydd * sp - yd * pd * cp,
                   pdd2 * cr - pd * rd * sr + ydd * cp * sr - yd * pd * sp * sr +
                       yd * rd * cp * cr,
                   -pdd2 * sr - pd * rd * cr + ydd * cp * cr - yd * pd * sp * cr -
                       yd * rd * cp * sr);
    return s;
  }
};

/// Random trajectory with three sinusoids per position axis and per Euler
/// angle. Amplitudes are clipped so each term's peak linear or angular
/// acceleration stays within the bounds.
inline TrajectoryModel gen_trajectory(std::uint64_t seed, const TrajectoryBounds& b = {}) {
  b.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> freq(b.min_freq_hz, b.max_freq_hz);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  TrajectoryModel m;
  for (int axis = 0; axis < 3; ++axis) {
    for (int k = 0; k < 3; ++k) {
      Sinusoid s;
      s.freq_hz = freq(rng);
      s.phase = phase(rng);
      const double w = 2.0 * M_PI * s.freq_hz;
      s.amp = std::min(unit(rng) * b.max_pos_amp_m, b.max_accel_per_term / (w * w));
      m.pos[static_cast<std::size_t>(axis)].terms[static_cast<std::size_t>(k)] = s;
    }
  }
  for (int axis = 0; axis < 3; ++axis) {
    for (int k = 0; k < 3; ++k) {
      Sinusoid s;
      s.freq_hz = freq(rng);
      s.phase = phase(rng);
      const double w = 2.0 * M_PI * s.freq_hz;
      s.amp = std::min(unit(rng) * b.max_eul_amp_rad, b.max_eul_accel_per_term / (w * w));
      m.eul[static_cast<std::size_t>(axis)].terms[static_cast<std::size_t>(k)] = s;
    }
  }
  return m;
}

}  // namespace mimu
