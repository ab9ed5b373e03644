// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "mimu/baseline.hpp"
#include "mimu/camera_update.hpp"
#include "mimu/imu_update.hpp"
#include "mimu/state.hpp"
#include "mimu/trajectory.hpp"

namespace mimu {

/// One simulated IMU: its noise model, its true mounting and biases, and the
/// standard deviations of the random errors applied to the filter's initial
/// estimate (the filter's initial sigmas match these).
struct ImuSpec {
  NoiseParams noise;
  Vec3 true_p_BI{Vec3::Zero()};
  Vec3 true_rotvec_BI{Vec3::Zero()};
  Vec3 true_b_a{Vec3::Zero()};
  Vec3 true_b_w{Vec3::Zero()};
  double init_pos_std{0.02};                 // m
  double init_ang_std{5.0 * M_PI / 180.0};   // rad
  double init_ba_std{0.1};                   // m/s^2
  double init_bw_std{0.01};                  // rad/s

  ImuCalibration true_calibration() const {
    ImuCalibration c;
    c.p_BI = true_p_BI;
    c.q_BI = quat_from_rotvec(true_rotvec_BI);
    c.b_a = true_b_a;
    c.b_w = true_b_w;
    return c;
  }
};

struct CameraConfig {
  // forward-looking camera by default so the standard landmark wall at
  // positive body x is in view
  CameraModel model = [] {
    CameraModel c;
    c.q_BC = forward_camera_orientation();
    return c;
  }();
  double rate_hz{20.0};
  int grid_nx{7};
  int grid_ny{5};
  double grid_spacing_m{1.0};
  double grid_offset_m{6.0};
};

enum class FilterMode { kMultiUpdate, kSinglePredictor };

inline std::string to_string(FilterMode m) {
  return m == FilterMode::kMultiUpdate ? "multi_update" : "single_predictor";
}

inline FilterMode filter_mode_from_string(const std::string& s) {
  if (s == "multi_update") return FilterMode::kMultiUpdate;
  if (s == "single_predictor") return FilterMode::kSinglePredictor;
  throw std::invalid_argument("mode: expected multi_update or single_predictor, got '" + s +
                              "'");
}

struct SimConfig {
  std::uint64_t seed{1};
  double duration_s{60.0};
  int runs{1};
  FilterMode mode{FilterMode::kMultiUpdate};
  bool calibrating{true};
  TrajectoryBounds bounds{};
  std::vector<ImuSpec> imus;
  bool use_camera{true};
  CameraConfig camera{};
  double record_hz{20.0};
  std::string output_dir{};
  int update_iterations{3};  // Gauss-Newton relinearizations per measurement
  double q_a{1.0};           // body specific-force drive, (m/s^2)^2/s
  double q_w{0.1};           // body angular-rate drive, (rad/s)^2/s
  double q_alpha{100.0};     // body angular-acceleration drive, (rad/s^2)^2/s
  bool paranoid{false};      // covariance health check after every update
  // test hooks, not exposed in config files: scale measurement noise draws
  // and initial-estimate error draws (0 gives a noise-free or error-free run)
  double noise_scale{1.0};
  double init_error_scale{1.0};

  void validate() const {
    if (imus.empty()) throw std::invalid_argument("SimConfig: need at least one IMU");
    if (duration_s <= 0.0) throw std::invalid_argument("SimConfig: duration_s must be > 0");
    if (runs < 1) throw std::invalid_argument("SimConfig: runs must be >= 1");
    if (record_hz <= 0.0) throw std::invalid_argument("SimConfig: record_hz must be > 0");
    if (update_iterations < 1) {
      throw std::invalid_argument("SimConfig: update_iterations must be >= 1");
    }
    if (q_a <= 0.0 || q_w <= 0.0 || q_alpha < 0.0) {
      throw std::invalid_argument("SimConfig: q_a, q_w must be > 0 and q_alpha >= 0");
    }
    if (noise_scale < 0.0 || init_error_scale < 0.0) {
      throw std::invalid_argument("SimConfig: scales must be >= 0");
    }
    bounds.validate();
    if (imus[0].true_p_BI.norm() != 0.0 || imus[0].true_rotvec_BI.norm() != 0.0) {
      throw std::invalid_argument(
          "SimConfig: IMU 0 defines the body frame, its extrinsics must be zero");
    }
    for (const ImuSpec& s : imus) {
      s.noise.validate();
      if (s.init_pos_std <= 0.0 || s.init_ang_std <= 0.0 || s.init_ba_std <= 0.0 ||
          s.init_bw_std <= 0.0) {
        throw std::invalid_argument("SimConfig: init error stds must be > 0");
      }
    }
    if (use_camera) {
      if (camera.rate_hz <= 0.0) throw std::invalid_argument("SimConfig: camera rate_hz must be > 0");
      if (camera.grid_nx < 1 || camera.grid_ny < 1 || camera.grid_spacing_m <= 0.0) {
        throw std::invalid_argument("SimConfig: camera landmark grid must be non-empty");
      }
    }
  }
};

/// Ground-truth IMU reading at time t: the measurement model evaluated on the
/// true state (true biases included) plus white noise with per-sample sigma
/// density * sqrt(rate). The caller assigns imu_id.
inline ImuSample sample_imu(const TrajectoryModel& traj, double t,
                            const ImuCalibration& true_calib, const NoiseParams& noise,
                            std::mt19937_64& rng, double noise_scale = 1.0) {
  const Vec6 h = imu_measurement_model(traj.state_at(t), true_calib);
  const double sa = noise.accel_density * std::sqrt(noise.rate_hz);
  const double sw = noise.gyro_density * std::sqrt(noise.rate_hz);
  std::normal_distribution<double> n01(0.0, 1.0);
  ImuSample z;
  z.t = t;
  for (int k = 0; k < 3; ++k) z.accel[k] = h[k] + noise_scale * sa * n01(rng);
  for (int k = 0; k < 3; ++k) z.gyro[k] = h[3 + k] + noise_scale * sw * n01(rng);
  z.R.setZero();
  z.R.topLeftCorner<3, 3>() = sa * sa * Mat3::Identity();
  z.R.bottomRightCorner<3, 3>() = sw * sw * Mat3::Identity();
  return z;
}

/// Pixel observations of every landmark visible from the true pose at time t.
inline CameraSample sample_camera(const TrajectoryModel& traj, double t,
                                  const CameraModel& cam, const LandmarkSet& landmarks,
                                  std::mt19937_64& rng, double noise_scale = 1.0) {
  const BodyState truth = traj.state_at(t);
  std::normal_distribution<double> n01(0.0, 1.0);
  CameraSample z;
  z.t = t;
  for (int id = 0; id < static_cast<int>(landmarks.size()); ++id) {
    const auto uv = project_landmark(cam, truth, landmarks[static_cast<std::size_t>(id)]);
    if (!uv) continue;
    Vec2 px = *uv;
    px.x() += noise_scale * cam.pixel_noise_std * n01(rng);
    px.y() += noise_scale * cam.pixel_noise_std * n01(rng);
    z.landmark_ids.push_back(id);
    z.pixels.push_back(px);
  }
  return z;
}

/// Snapshot of truth and estimate on the uniform record grid.
struct Epoch {
  double t{0.0};
  BodyState truth;
  BodyState est;
  std::vector<ImuCalibration> est_imus;
  VecX sigma;                            // sqrt of diag(P), the mode's own layout
  Eigen::Matrix<double, 6, 6> P_pose;    // body position+attitude covariance
};

struct ResidualRecord {
  double t{0.0};
  int sensor{0};  // IMU index, or -1 for the camera
  int dim{0};
  double norm{0.0};
};

struct RunRecord {
  int run_id{0};
  FilterMode mode{FilterMode::kMultiUpdate};
  int n_imus{0};
  bool calibrating{true};
  double record_hz{20.0};
  bool diverged{false};
  std::string divergence_reason;
  std::vector<ImuCalibration> true_imus;
  std::vector<Epoch> epochs;
  std::vector<ResidualRecord> residuals;
};

/// Where body position and attitude errors live in the mode's error vector.
struct ErrorLayout {
  int pos{0};
  int theta{0};
  int dim{0};
};

inline ErrorLayout layout_for(FilterMode mode, int n_imus) {
  if (mode == FilterMode::kMultiUpdate) return {kErrPos, kErrTheta, error_dim(n_imus)};
  return {0, 6, BaselineFilter::kDim};
}

/// Calibration error of an estimate against truth, stacked
/// [pos, rotvec, b_a, b_w]. The attitude entry is the right-multiplied
/// rotation-vector error, matching the filter's error definition.
inline Eigen::Matrix<double, 12, 1> calibration_error_vec(const ImuCalibration& est,
                                                          const ImuCalibration& truth) {
  Eigen::Matrix<double, 12, 1> e;
  e.segment<3>(0) = est.p_BI - truth.p_BI;
  e.segment<3>(3) = quat_boxminus(est.q_BI, truth.q_BI);
  e.segment<3>(6) = est.b_a - truth.b_a;
  e.segment<3>(9) = est.b_w - truth.b_w;
  return e;
}

/// Sigma entries matching calibration_error_vec for one IMU; zeros where the
/// mode carries no such state (extrinsics in the baseline, pinned blocks).
inline Eigen::Matrix<double, 12, 1> calibration_sigma_vec(const Epoch& e, FilterMode mode,
                                                          int imu) {
  Eigen::Matrix<double, 12, 1> s = Eigen::Matrix<double, 12, 1>::Zero();
  if (mode == FilterMode::kMultiUpdate) {
    s = e.sigma.segment<12>(imu_err_base(imu));
  } else if (imu == 0) {
    s.segment<3>(6) = e.sigma.segment<3>(9);
    s.segment<3>(9) = e.sigma.segment<3>(12);
  }
  return s;
}

namespace detail {

inline Vec3 draw_vec3(std::mt19937_64& rng, double sigma) {
  std::normal_distribution<double> n01(0.0, 1.0);
  return Vec3(n01(rng), n01(rng), n01(rng)) * sigma;
}

inline std::mt19937_64 stream_rng(std::uint64_t master, int run_id, int stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(master & 0xffffffffu),
                    static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(run_id), static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

struct Event {
  double t{0.0};
  int kind{0};  // 0 IMU, 1 camera, 2 record
  int sensor{0};

  bool operator<(const Event& o) const {
    if (t != o.t) return t < o.t;
    if (kind != o.kind) return kind < o.kind;
    return sensor < o.sensor;
  }
};

/// Every sensor and record tick in [0, duration], time-ordered. Sensor
/// streams carry distinct phase offsets so nothing is accidentally
/// synchronized; the camera fires mid-period so an IMU sample always
/// precedes the first image.
inline std::vector<Event> build_schedule(const SimConfig& cfg) {
  std::vector<Event> ev;
  const double end = cfg.duration_s + 1e-9;
  const int n = static_cast<int>(cfg.imus.size());
  for (int i = 0; i < n; ++i) {
    const double rate = cfg.imus[static_cast<std::size_t>(i)].noise.rate_hz;
    const double phase = static_cast<double>(i) / static_cast<double>(n + 1);
    for (std::int64_t k = 0;; ++k) {
      const double t = (static_cast<double>(k) + phase) / rate;
      if (t > end) break;
      ev.push_back({t, 0, i});
    }
  }
  if (cfg.use_camera) {
    for (std::int64_t k = 0;; ++k) {
      const double t = (static_cast<double>(k) + 0.5) / cfg.camera.rate_hz;
      if (t > end) break;
      ev.push_back({t, 1, 0});
    }
  }
  for (std::int64_t k = 0;; ++k) {
    const double t = static_cast<double>(k) / cfg.record_hz;
    if (t > end) break;
    ev.push_back({t, 2, 0});
  }
  std::sort(ev.begin(), ev.end());
  return ev;
}

inline VecX sqrt_diag(const MatX& P) {
  VecX s(P.rows());
  for (int i = 0; i < P.rows(); ++i) s[i] = std::sqrt(std::max(P(i, i), 0.0));
  return s;
}

inline Eigen::Matrix<double, 6, 6> pose_cov(const MatX& P, int pos, int theta) {
  Eigen::Matrix<double, 6, 6> B;
  B.topLeftCorner<3, 3>() = P.block<3, 3>(pos, pos);
  B.topRightCorner<3, 3>() = P.block<3, 3>(pos, theta);
  B.bottomLeftCorner<3, 3>() = P.block<3, 3>(theta, pos);
  B.bottomRightCorner<3, 3>() = P.block<3, 3>(theta, theta);
  return B;
}

/// Drop landmarks that the current estimate places at or behind the image
/// plane; their pixel measurements cannot be linearized.
inline CameraSample usable_subset(const CameraSample& z, const CameraModel& cam,
                                  const BodyState& est, const LandmarkSet& landmarks) {
  CameraSample out;
  out.t = z.t;
  for (std::size_t k = 0; k < z.landmark_ids.size(); ++k) {
    const Vec3 pc =
        landmark_in_camera(cam, est, landmarks[static_cast<std::size_t>(z.landmark_ids[k])]);
    if (pc.z() < cam.min_depth) continue;
    out.landmark_ids.push_back(z.landmark_ids[k]);
    out.pixels.push_back(z.pixels[k]);
  }
  return out;
}

inline double camera_residual_norm(const CameraSample& z, const CameraModel& cam,
                                   const BodyState& est, const LandmarkSet& landmarks) {
  double sq = 0.0;
  for (std::size_t k = 0; k < z.landmark_ids.size(); ++k) {
    const auto uv = [&]() -> Vec2 {
      const Vec3 pc = landmark_in_camera(
          cam, est, landmarks[static_cast<std::size_t>(z.landmark_ids[k])]);
      return Vec2(cam.focal_px * pc.x() / pc.z() + cam.principal.x(),
                  cam.focal_px * pc.y() / pc.z() + cam.principal.y());
    }();
    sq += (z.pixels[k] - uv).squaredNorm();
  }
  return std::sqrt(sq);
}

}  // namespace detail

/// One complete simulated run: generate a trajectory, draw initial-estimate
/// errors, stream unsynchronized sensor events through the chosen filter,
/// and record truth vs estimate on a uniform grid. Divergence (NaN or a
/// covariance failure) ends the run early and marks the record, it does not
/// throw. The same (cfg, run_id) always produces the same record bitwise.
inline RunRecord run_single(const SimConfig& cfg, int run_id = 0) {
  cfg.validate();
  const int n = static_cast<int>(cfg.imus.size());

  // independent, deterministic random streams per run
  auto traj_rng = detail::stream_rng(cfg.seed, run_id, 0);
  auto init_rng = detail::stream_rng(cfg.seed, run_id, 1);
  std::vector<std::mt19937_64> imu_rngs;
  for (int i = 0; i < n; ++i) imu_rngs.push_back(detail::stream_rng(cfg.seed, run_id, 2 + i));
  auto cam_rng = detail::stream_rng(cfg.seed, run_id, 100);

  const TrajectoryModel traj = gen_trajectory(traj_rng(), cfg.bounds);
  const BodyState truth0 = traj.state_at(0.0);

  std::vector<ImuCalibration> true_imus;
  for (const ImuSpec& s : cfg.imus) true_imus.push_back(s.true_calibration());

  // initial estimate: pose and velocity are known exactly, the motion states
  // and every calibration block start with drawn errors
  const double es = cfg.init_error_scale;
  BodyState body0 = truth0;
  const InitStd init_std{};
  body0.a += detail::draw_vec3(init_rng, es * init_std.body_a);
  body0.w += detail::draw_vec3(init_rng, es * init_std.body_w);
  body0.alpha += detail::draw_vec3(init_rng, es * init_std.body_alpha);

  std::vector<ImuCalibration> est_imus = true_imus;
  for (int i = 0; i < n; ++i) {
    const ImuSpec& s = cfg.imus[static_cast<std::size_t>(i)];
    const Vec3 dp = detail::draw_vec3(init_rng, es * s.init_pos_std);
    const Vec3 dth = detail::draw_vec3(init_rng, es * s.init_ang_std);
    const Vec3 dba = detail::draw_vec3(init_rng, es * s.init_ba_std);
    const Vec3 dbw = detail::draw_vec3(init_rng, es * s.init_bw_std);
    ImuCalibration& e = est_imus[static_cast<std::size_t>(i)];
    if (i != 0) {
      e.p_BI += dp;
      e.q_BI = quat_mul(e.q_BI, quat_from_rotvec(dth));
    }
    e.b_a += dba;
    e.b_w += dbw;
  }

  const LandmarkSet landmarks =
      cfg.use_camera ? make_landmark_grid(cfg.camera.grid_nx, cfg.camera.grid_ny,
                                          cfg.camera.grid_spacing_m, cfg.camera.grid_offset_m)
                     : LandmarkSet{};

  RunRecord rec;
  rec.run_id = run_id;
  rec.mode = cfg.mode;
  rec.n_imus = cfg.mode == FilterMode::kMultiUpdate ? n : 1;
  rec.calibrating = cfg.calibrating;
  rec.record_hz = cfg.record_hz;
  rec.true_imus = true_imus;

  const std::vector<detail::Event> schedule = detail::build_schedule(cfg);
  rec.epochs.reserve(static_cast<std::size_t>(cfg.duration_s * cfg.record_hz) + 2);

  if (cfg.mode == FilterMode::kMultiUpdate) {
    std::vector<NoiseParams> noise;
    for (const ImuSpec& s : cfg.imus) noise.push_back(s.noise);
    FilterState x = make_filter_state(body0, est_imus);
    for (int i = 0; i < n; ++i) {
      const ImuSpec& s = cfg.imus[static_cast<std::size_t>(i)];
      const int base = imu_err_base(i);
      if (!x.imus[static_cast<std::size_t>(i)].pinned) {
        x.P.block<3, 3>(base + kImuErrPos, base + kImuErrPos) =
            s.init_pos_std * s.init_pos_std * Mat3::Identity();
        x.P.block<3, 3>(base + kImuErrTheta, base + kImuErrTheta) =
            s.init_ang_std * s.init_ang_std * Mat3::Identity();
      }
      x.P.block<3, 3>(base + kImuErrBa, base + kImuErrBa) =
          s.init_ba_std * s.init_ba_std * Mat3::Identity();
      x.P.block<3, 3>(base + kImuErrBw, base + kImuErrBw) =
          s.init_bw_std * s.init_bw_std * Mat3::Identity();
    }
    ProcessNoise pn = ProcessNoise::from_noise_params(
        cfg.q_a * Mat3::Identity(), cfg.q_w * Mat3::Identity(), noise);
    pn.Q_alpha = cfg.q_alpha * Mat3::Identity();
    ImuUpdateOptions opts;
    opts.calibrating = cfg.calibrating;
    opts.iterations = cfg.update_iterations;
    opts.paranoid_covariance = cfg.paranoid;

    try {
      for (const detail::Event& ev : schedule) {
        if (ev.kind == 0) {
          const int i = ev.sensor;
          ImuSample z = sample_imu(traj, ev.t, true_imus[static_cast<std::size_t>(i)],
                                   noise[static_cast<std::size_t>(i)],
                                   imu_rngs[static_cast<std::size_t>(i)], cfg.noise_scale);
          z.imu_id = i;
          propagate_to(x, ev.t, pn, cfg.calibrating);
          const Vec6 pred = predict_imu_measurement(x, i);
          Vec6 r;
          r.head<3>() = z.accel - pred.head<3>();
          r.tail<3>() = z.gyro - pred.tail<3>();
          rec.residuals.push_back({ev.t, i, 6, r.norm()});
          process_imu(x, z, pn, opts);
        } else if (ev.kind == 1) {
          const CameraSample z =
              sample_camera(traj, ev.t, cfg.camera.model, landmarks, cam_rng, cfg.noise_scale);
          propagate_to(x, ev.t, pn, cfg.calibrating);
          const CameraSample usable =
              detail::usable_subset(z, cfg.camera.model, x.body, landmarks);
          if (!usable.landmark_ids.empty()) {
            rec.residuals.push_back(
                {ev.t, -1, 2 * static_cast<int>(usable.landmark_ids.size()),
                 detail::camera_residual_norm(usable, cfg.camera.model, x.body, landmarks)});
          }
          process_camera(x, usable, cfg.camera.model, landmarks, pn, opts);
        } else {
          propagate_to(x, ev.t, pn, cfg.calibrating);
          Epoch e;
          e.t = ev.t;
          e.truth = traj.state_at(ev.t);
          e.est = x.body;
          e.est_imus = x.imus;
          e.sigma = detail::sqrt_diag(x.P);
          e.P_pose = detail::pose_cov(x.P, kErrPos, kErrTheta);
          rec.epochs.push_back(std::move(e));
        }
      }
    } catch (const FilterDivergence& err) {
      rec.diverged = true;
      rec.divergence_reason = err.what();
    }
  } else {
    BaselineFilter f;
    f.p = body0.p;
    f.v = body0.v;
    f.q_GB = body0.q_GB;
    f.b_a = est_imus[0].b_a;
    f.b_w = est_imus[0].b_w;
    f.noise = cfg.imus[0].noise;
    const ImuSpec& s0 = cfg.imus[0];
    f.P.setZero();
    f.P.block<3, 3>(9, 9) = s0.init_ba_std * s0.init_ba_std * Mat3::Identity();
    f.P.block<3, 3>(12, 12) = s0.init_bw_std * s0.init_bw_std * Mat3::Identity();

    try {
      for (const detail::Event& ev : schedule) {
        if (ev.kind == 0) {
          // the baseline consumes only the primary IMU; other streams still
          // advance their generators so records stay comparable across modes
          ImuSample z = sample_imu(traj, ev.t, true_imus[static_cast<std::size_t>(ev.sensor)],
                                   cfg.imus[static_cast<std::size_t>(ev.sensor)].noise,
                                   imu_rngs[static_cast<std::size_t>(ev.sensor)],
                                   cfg.noise_scale);
          if (ev.sensor != 0) continue;
          z.imu_id = 0;
          f.process_imu(z);
        } else if (ev.kind == 1) {
          const CameraSample z =
              sample_camera(traj, ev.t, cfg.camera.model, landmarks, cam_rng, cfg.noise_scale);
          f.propagate_to(ev.t);
          BodyState est;
          est.p = f.p;
          est.v = f.v;
          est.q_GB = f.q_GB;
          const CameraSample usable =
              detail::usable_subset(z, cfg.camera.model, est, landmarks);
          if (!usable.landmark_ids.empty()) {
            rec.residuals.push_back(
                {ev.t, -1, 2 * static_cast<int>(usable.landmark_ids.size()),
                 detail::camera_residual_norm(usable, cfg.camera.model, est, landmarks)});
          }
          f.process_camera(usable, cfg.camera.model, landmarks);
        } else {
          f.propagate_to(ev.t);
          Epoch e;
          e.t = ev.t;
          e.truth = traj.state_at(ev.t);
          e.est.p = f.p;
          e.est.v = f.v;
          e.est.q_GB = f.q_GB;
          ImuCalibration c;
          c.b_a = f.b_a;
          c.b_w = f.b_w;
          c.pinned = true;
          e.est_imus = {c};
          e.sigma = detail::sqrt_diag(f.P);
          e.P_pose = detail::pose_cov(f.P, 0, 6);
          rec.epochs.push_back(std::move(e));
        }
      }
    } catch (const FilterDivergence& err) {
      rec.diverged = true;
      rec.divergence_reason = err.what();
    }
  }
  return rec;
}

/// Parallelism cap for campaign runs: MIMU_THREADS if set, otherwise the
/// machine's hardware concurrency.
inline int campaign_threads() {
  if (const char* s = std::getenv("MIMU_THREADS")) {
    const int v = std::atoi(s);
    if (v >= 1) return v;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

/// Execute runs 0..n_runs-1, possibly in parallel, feeding each finished
/// record to `reduce` strictly in run order. The reduction is therefore
/// deterministic regardless of thread count. Worker exceptions other than
/// divergence (which run_single absorbs) are rethrown on the calling thread.
template <class Reduce>
void run_campaign_ordered(const SimConfig& cfg, int n_runs, Reduce&& reduce) {
  cfg.validate();
  if (n_runs < 1) throw std::invalid_argument("run_campaign_ordered: n_runs must be >= 1");
  const int nt = std::min(campaign_threads(), n_runs);
  if (nt <= 1) {
    for (int i = 0; i < n_runs; ++i) reduce(run_single(cfg, i));
    return;
  }

  std::mutex mu;
  std::condition_variable produced, space;
  std::vector<std::unique_ptr<RunRecord>> slots(static_cast<std::size_t>(n_runs));
  int next_claim = 0;
  int reduced = 0;
  std::exception_ptr failure;
  const int max_ahead = 2 * nt + 2;  // bounds buffered, not-yet-reduced records

  auto worker = [&]() {
    for (;;) {
      int id;
      {
        std::unique_lock<std::mutex> lock(mu);
        space.wait(lock, [&] {
          return failure || next_claim >= n_runs || next_claim - reduced <= max_ahead;
        });
        if (failure || next_claim >= n_runs) return;
        id = next_claim++;
      }
      try {
        auto rec = std::make_unique<RunRecord>(run_single(cfg, id));
        std::lock_guard<std::mutex> lock(mu);
        slots[static_cast<std::size_t>(id)] = std::move(rec);
        produced.notify_all();
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
        produced.notify_all();
        space.notify_all();
        return;
      }
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(nt));
  for (int i = 0; i < nt; ++i) pool.emplace_back(worker);

  for (int id = 0; id < n_runs; ++id) {
    std::unique_ptr<RunRecord> rec;
    {
      std::unique_lock<std::mutex> lock(mu);
      produced.wait(lock, [&] { return failure || slots[static_cast<std::size_t>(id)]; });
      if (failure) break;
      rec = std::move(slots[static_cast<std::size_t>(id)]);
      ++reduced;
      space.notify_all();
    }
    reduce(std::move(*rec));
  }

  for (std::thread& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace mimu
