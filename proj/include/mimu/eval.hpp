// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "mimu/sim.hpp"

namespace mimu {

/// Root-mean-square position error over aligned series.
inline double rmse(const std::vector<Vec3>& truth, const std::vector<Vec3>& est) {
  if (truth.size() != est.size()) {
    throw std::invalid_argument("rmse: series lengths differ");
  }
  if (truth.empty()) return 0.0;
  double sq = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) sq += (est[i] - truth[i]).squaredNorm();
  return std::sqrt(sq / static_cast<double>(truth.size()));
}

struct PoseSeries {
  std::vector<Vec3> p;
  std::vector<Quat> q;
  double rate_hz{20.0};
};

/// Relative pose error over a fixed time window: for every start index the
/// window displacement is expressed in that epoch's own body frame for truth
/// and estimate separately, and the difference taken. RMS of the translation
/// part. Invariant to one global rigid transform applied to the whole
/// estimated series.
inline double rpe(const PoseSeries& truth, const PoseSeries& est, double window_s) {
  if (truth.p.size() != est.p.size() || truth.p.size() != truth.q.size() ||
      est.p.size() != est.q.size()) {
    throw std::invalid_argument("rpe: series lengths differ");
  }
  const int w = static_cast<int>(std::lround(window_s * truth.rate_hz));
  const int len = static_cast<int>(truth.p.size());
  if (w < 1 || w >= len) throw std::invalid_argument("rpe: window too long for series");
  double sq = 0.0;
  int count = 0;
  for (int i = 0; i + w < len; ++i) {
    const auto su = static_cast<std::size_t>(i);
    const auto sv = static_cast<std::size_t>(i + w);
    const Vec3 d_true =
        quat_to_rot(truth.q[su]).transpose() * (truth.p[sv] - truth.p[su]);
    const Vec3 d_est = quat_to_rot(est.q[su]).transpose() * (est.p[sv] - est.p[su]);
    sq += (d_est - d_true).squaredNorm();
    ++count;
  }
  return std::sqrt(sq / static_cast<double>(count));
}

/// Normalized estimation error squared on the 6-dof body position+attitude
/// block. Throws when the covariance sub-block is singular.
inline double nees(const BodyState& truth, const BodyState& est,
                   const Eigen::Matrix<double, 6, 6>& P_pose) {
  Vec6 e;
  e.head<3>() = est.p - truth.p;
  e.tail<3>() = quat_boxminus(est.q_GB, truth.q_GB);
  Eigen::Matrix<double, 6, 6> S = 0.5 * (P_pose + P_pose.transpose());
  Eigen::LDLT<Eigen::Matrix<double, 6, 6>> ldlt(S);
  if (ldlt.info() != Eigen::Success || !ldlt.vectorD().allFinite() ||
      ldlt.vectorD().minCoeff() <= 0.0) {
    throw std::invalid_argument("nees: covariance sub-block is singular");
  }
  return e.dot(ldlt.solve(e));
}

namespace detail {

inline bool pose_cov_invertible(const Eigen::Matrix<double, 6, 6>& P) {
  Eigen::Matrix<double, 6, 6> S = 0.5 * (P + P.transpose());
  Eigen::LDLT<Eigen::Matrix<double, 6, 6>> ldlt(S);
  return ldlt.info() == Eigen::Success && ldlt.vectorD().allFinite() &&
         ldlt.vectorD().minCoeff() > 0.0;
}

/// Visit every estimated calibration component of one epoch:
/// f(class_id, imu, axis, error, sigma) with classes 0 position, 1
/// orientation, 2 accel bias, 3 gyro bias. Pinned extrinsics are skipped,
/// and the baseline mode only carries the primary IMU's biases.
template <class F>
void for_each_cal_component(const RunRecord& rec, const Epoch& e, F&& f) {
  const int n = static_cast<int>(e.est_imus.size());
  for (int i = 0; i < n; ++i) {
    const ImuCalibration& est = e.est_imus[static_cast<std::size_t>(i)];
    const ImuCalibration& truth = rec.true_imus[static_cast<std::size_t>(i)];
    const Eigen::Matrix<double, 12, 1> err = calibration_error_vec(est, truth);
    const Eigen::Matrix<double, 12, 1> sig = calibration_sigma_vec(e, rec.mode, i);
    const bool extrinsics = rec.mode == FilterMode::kMultiUpdate && !est.pinned;
    for (int k = 0; k < 3; ++k) {
      if (extrinsics) {
        f(0, i, k, err[k], sig[k]);
        f(1, i, k, err[3 + k], sig[3 + k]);
      }
      f(2, i, k, err[6 + k], sig[6 + k]);
      f(3, i, k, err[9 + k], sig[9 + k]);
    }
  }
}

}  // namespace detail

/// Unit scale from SI to the reporting units mm, mrad, mm/s^2, mrad/s.
inline constexpr double kClassUnitScale = 1e3;

/// One row of the campaign summary, plus the per-component vectors the
/// aggregate statistics are built from (not part of the CSV).
struct RunSummary {
  int run_id{0};
  FilterMode mode{FilterMode::kMultiUpdate};
  int n_imus{0};
  double rmse_pos_m{0.0};
  double rpe_1s_m{0.0};
  double rpe_5s_m{0.0};
  double nees_mean{0.0};
  double cal_pos_err_mm{0.0};
  double cal_ori_err_mrad{0.0};
  double cal_ba_err_mm_s2{0.0};
  double cal_bw_err_mrad_s{0.0};
  double sigma3_coverage{0.0};
  bool diverged{false};

  // per-component calibration state at the end of the run, SI units,
  // flattened [imu][pos ang ba bw][axis]; entries the mode does not
  // estimate are NaN
  VecX final_err;
  VecX final_sigma;
  VecX last5_err;  // signed error averaged over the last 5% of epochs
};

/// Reduce one run record to its summary metrics. Final errors use the last
/// 5% of epochs averaged; coverage counts epochs and components whose error
/// lies inside the filter's own 3-sigma envelope.
inline RunSummary summarize_run(const RunRecord& rec) {
  constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
  RunSummary s;
  s.run_id = rec.run_id;
  s.mode = rec.mode;
  s.n_imus = rec.n_imus;
  s.diverged = rec.diverged;
  const int n_epochs = static_cast<int>(rec.epochs.size());
  const int n_imus = static_cast<int>(rec.true_imus.size());
  s.final_err = VecX::Constant(12 * n_imus, kNan);
  s.final_sigma = VecX::Constant(12 * n_imus, kNan);
  s.last5_err = VecX::Constant(12 * n_imus, kNan);
  if (n_epochs == 0) {
    s.rmse_pos_m = s.rpe_1s_m = s.rpe_5s_m = s.nees_mean = kNan;
    s.cal_pos_err_mm = s.cal_ori_err_mrad = s.cal_ba_err_mm_s2 = s.cal_bw_err_mrad_s = kNan;
    s.sigma3_coverage = kNan;
    return s;
  }

  PoseSeries truth, est;
  truth.rate_hz = est.rate_hz = rec.record_hz;
  truth.p.reserve(rec.epochs.size());
  for (const Epoch& e : rec.epochs) {
    truth.p.push_back(e.truth.p);
    truth.q.push_back(e.truth.q_GB);
    est.p.push_back(e.est.p);
    est.q.push_back(e.est.q_GB);
  }
  s.rmse_pos_m = rmse(truth.p, est.p);
  auto try_rpe = [&](double w) {
    const int we = static_cast<int>(std::lround(w * rec.record_hz));
    return (we >= 1 && we < n_epochs) ? rpe(truth, est, w) : kNan;
  };
  s.rpe_1s_m = try_rpe(1.0);
  s.rpe_5s_m = try_rpe(5.0);

  double nees_sum = 0.0;
  int nees_count = 0;
  long cov_in = 0, cov_total = 0;
  for (const Epoch& e : rec.epochs) {
    if (detail::pose_cov_invertible(e.P_pose)) {
      nees_sum += nees(e.truth, e.est, e.P_pose);
      ++nees_count;
    }
    detail::for_each_cal_component(rec, e, [&](int, int, int, double err, double sig) {
      ++cov_total;
      if (std::abs(err) <= 3.0 * sig) ++cov_in;
    });
  }
  s.nees_mean = nees_count > 0 ? nees_sum / nees_count : kNan;
  s.sigma3_coverage =
      cov_total > 0 ? static_cast<double>(cov_in) / static_cast<double>(cov_total) : kNan;

  const int tail = std::max(1, (n_epochs + 19) / 20);  // last 5%, rounded up
  VecX tail_sum = VecX::Zero(12 * n_imus);
  for (int k = n_epochs - tail; k < n_epochs; ++k) {
    const Epoch& e = rec.epochs[static_cast<std::size_t>(k)];
    detail::for_each_cal_component(rec, e, [&](int c, int i, int a, double err, double) {
      const int idx = 12 * i + 3 * c + a;
      if (std::isnan(tail_sum[idx])) return;
      tail_sum[idx] += err;
    });
  }
  const Epoch& last = rec.epochs.back();
  VecX cls_abs_sum = VecX::Zero(4);
  Eigen::Vector4i cls_count = Eigen::Vector4i::Zero();
  detail::for_each_cal_component(rec, last, [&](int c, int i, int a, double err, double sig) {
    const int idx = 12 * i + 3 * c + a;
    s.final_err[idx] = err;
    s.final_sigma[idx] = sig;
    s.last5_err[idx] = tail_sum[idx] / tail;
    cls_abs_sum[c] += std::abs(s.last5_err[idx]);
    cls_count[c] += 1;
  });
  auto cls_mean = [&](int c) {
    return cls_count[c] > 0 ? kClassUnitScale * cls_abs_sum[c] / cls_count[c] : kNan;
  };
  s.cal_pos_err_mm = cls_mean(0);
  s.cal_ori_err_mrad = cls_mean(1);
  s.cal_ba_err_mm_s2 = cls_mean(2);
  s.cal_bw_err_mrad_s = cls_mean(3);
  return s;
}

/// Epoch-aligned mean convergence curves across a campaign, in reporting
/// units: RMS of the error components and mean 3-sigma envelope per
/// parameter class. Diverged runs are excluded.
struct ConvergenceTable {
  std::vector<double> t;
  MatX err_rms;    // epochs x 4 classes
  MatX sig3_mean;  // epochs x 4 classes
};

struct CampaignResult {
  std::vector<RunSummary> runs;
  int divergences{0};
  ConvergenceTable convergence;
};

namespace detail {

struct ConvergenceAccum {
  std::vector<double> t;
  MatX err_sq;   // epochs x 4
  MatX sig_sum;  // epochs x 4
  Eigen::Matrix<long, 4, 1> comps_per_epoch{Eigen::Matrix<long, 4, 1>::Zero()};
  long runs{0};

  void add(const RunRecord& rec) {
    if (rec.diverged) return;
    if (runs == 0) {
      t.clear();
      t.reserve(rec.epochs.size());
      for (const Epoch& e : rec.epochs) t.push_back(e.t);
      err_sq = MatX::Zero(static_cast<int>(t.size()), 4);
      sig_sum = MatX::Zero(static_cast<int>(t.size()), 4);
    }
    if (rec.epochs.size() != t.size()) {
      throw std::invalid_argument("convergence: record epoch grids differ");
    }
    Eigen::Matrix<long, 4, 1> comps = Eigen::Matrix<long, 4, 1>::Zero();
    for (int k = 0; k < static_cast<int>(rec.epochs.size()); ++k) {
      const Epoch& e = rec.epochs[static_cast<std::size_t>(k)];
      for_each_cal_component(rec, e, [&](int c, int, int, double err, double sig) {
        err_sq(k, c) += err * err;
        sig_sum(k, c) += sig;
        if (k == 0) comps[c] += 1;
      });
    }
    comps_per_epoch = comps;
    ++runs;
  }

  ConvergenceTable table() const {
    ConvergenceTable out;
    out.t = t;
    const int ne = static_cast<int>(t.size());
    out.err_rms = MatX::Constant(ne, 4, std::numeric_limits<double>::quiet_NaN());
    out.sig3_mean = MatX::Constant(ne, 4, std::numeric_limits<double>::quiet_NaN());
    for (int c = 0; c < 4; ++c) {
      const long denom = runs * comps_per_epoch[c];
      if (denom == 0) continue;
      for (int k = 0; k < ne; ++k) {
        out.err_rms(k, c) =
            kClassUnitScale * std::sqrt(err_sq(k, c) / static_cast<double>(denom));
        out.sig3_mean(k, c) = kClassUnitScale * 3.0 * sig_sum(k, c) / static_cast<double>(denom);
      }
    }
    return out;
  }
};

}  // namespace detail

/// Full campaign: n_runs deterministic runs reduced in run order to summary
/// rows plus cross-run convergence curves.
inline CampaignResult run_monte_carlo(const SimConfig& cfg, int n_runs) {
  CampaignResult out;
  detail::ConvergenceAccum conv;
  run_campaign_ordered(cfg, n_runs, [&](RunRecord&& rec) {
    out.runs.push_back(summarize_run(rec));
    if (rec.diverged) ++out.divergences;
    conv.add(rec);
  });
  out.convergence = conv.table();
  return out;
}

/// Mean and standard deviation of final calibration errors per parameter
/// class, pooled over runs and components, in reporting units. Coverage is
/// the mean per-run 3-sigma coverage. Diverged runs are excluded.
struct ClassStats {
  std::string name;
  double mean{0.0};
  double stddev{0.0};
  double sigma3_coverage{0.0};
};

inline std::vector<ClassStats> calibration_convergence(const std::vector<RunRecord>& records) {
  static const char* kNames[4] = {"position_mm", "orientation_mrad", "accel_bias_mm_s2",
                                  "gyro_bias_mrad_s"};
  std::vector<double> vals[4];
  double cov_sum = 0.0;
  int cov_count = 0;
  for (const RunRecord& rec : records) {
    if (rec.diverged || rec.epochs.empty()) continue;
    const RunSummary s = summarize_run(rec);
    for (int i = 0; i < s.last5_err.size(); ++i) {
      if (std::isnan(s.last5_err[i])) continue;
      vals[(i % 12) / 3].push_back(kClassUnitScale * s.last5_err[i]);
    }
    if (!std::isnan(s.sigma3_coverage)) {
      cov_sum += s.sigma3_coverage;
      ++cov_count;
    }
  }
  std::vector<ClassStats> rows;
  for (int c = 0; c < 4; ++c) {
    ClassStats row;
    row.name = kNames[c];
    const auto& v = vals[c];
    if (!v.empty()) {
      double mean = 0.0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      double var = 0.0;
      for (double x : v) var += (x - mean) * (x - mean);
      var = v.size() > 1 ? var / static_cast<double>(v.size() - 1) : 0.0;
      row.mean = mean;
      row.stddev = std::sqrt(var);
    }
    row.sigma3_coverage = cov_count > 0 ? cov_sum / cov_count : 0.0;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace mimu
