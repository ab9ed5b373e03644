// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mimu/eval.hpp"
#include "mimu/sim.hpp"

namespace mimu {

/// All emitted floats carry 9 significant digits.
inline std::string g9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

namespace detail {

class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path) : out_(path) {
    if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
  }

  void field(const std::string& s) {
    if (!first_) out_ << ", ";
    out_ << s;
    first_ = false;
  }
  void field(double v) { field(g9(v)); }
  void field(int v) { field(std::to_string(v)); }
  void fields(const Vec3& v) {
    for (int k = 0; k < 3; ++k) field(v[k]);
  }
  void endrow() {
    out_ << "\n";
    first_ = true;
  }

 private:
  std::ofstream out_;
  bool first_{true};
};

}  // namespace detail

/// Per-run artifacts: states.csv, calibration.csv, residuals.csv inside dir.
inline void write_run_record(const RunRecord& rec, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const ErrorLayout lay = layout_for(rec.mode, static_cast<int>(rec.true_imus.size()));

  {
    detail::CsvWriter w(dir / "states.csv");
    for (const char* f : {"t"}) w.field(std::string(f));
    for (const char* who : {"true", "est"}) {
      for (const char* f : {"_px", "_py", "_pz", "_vx", "_vy", "_vz", "_qw", "_qx", "_qy", "_qz"}) {
        w.field(std::string(who) + f);
      }
    }
    for (const char* f : {"sig_px", "sig_py", "sig_pz", "sig_vx", "sig_vy", "sig_vz",
                          "sig_thx", "sig_thy", "sig_thz"}) {
      w.field(std::string(f));
    }
    w.endrow();
    for (const Epoch& e : rec.epochs) {
      w.field(e.t);
      for (const BodyState* b : {&e.truth, &e.est}) {
        w.fields(b->p);
        w.fields(b->v);
        w.field(b->q_GB.w);
        w.fields(b->q_GB.vec());
      }
      w.fields(e.sigma.segment<3>(lay.pos));
      w.fields(e.sigma.segment<3>(lay.pos + 3));
      w.fields(e.sigma.segment<3>(lay.theta));
      w.endrow();
    }
  }

  {
    detail::CsvWriter w(dir / "calibration.csv");
    w.field(std::string("t"));
    w.field(std::string("imu"));
    for (const char* grp : {"est", "err", "sig"}) {
      for (const char* f : {"_px", "_py", "_pz", "_rx", "_ry", "_rz", "_bax", "_bay", "_baz",
                            "_bwx", "_bwy", "_bwz"}) {
        w.field(std::string(grp) + f);
      }
    }
    w.endrow();
    for (const Epoch& e : rec.epochs) {
      for (int i = 0; i < static_cast<int>(e.est_imus.size()); ++i) {
        const ImuCalibration& c = e.est_imus[static_cast<std::size_t>(i)];
        w.field(e.t);
        w.field(i);
        w.fields(c.p_BI);
        w.fields(rotvec_from_quat(c.q_BI));
        w.fields(c.b_a);
        w.fields(c.b_w);
        const auto err = calibration_error_vec(c, rec.true_imus[static_cast<std::size_t>(i)]);
        for (int k = 0; k < 12; ++k) w.field(err[k]);
        const auto sig = calibration_sigma_vec(e, rec.mode, i);
        for (int k = 0; k < 12; ++k) w.field(sig[k]);
        w.endrow();
      }
    }
  }

  {
    detail::CsvWriter w(dir / "residuals.csv");
    for (const char* f : {"t", "sensor", "dim", "norm"}) w.field(std::string(f));
    w.endrow();
    for (const ResidualRecord& r : rec.residuals) {
      w.field(r.t);
      w.field(r.sensor);
      w.field(r.dim);
      w.field(r.norm);
      w.endrow();
    }
  }
}

inline const char* kSummaryHeader =
    "run_id, mode, n_imus, rmse_pos_m, rpe_1s_m, rpe_5s_m, nees_mean, cal_pos_err_mm, "
    "cal_ori_err_mrad, cal_ba_err_mm_s2, cal_bw_err_mrad_s, sigma3_coverage, diverged";

/// One row per run, exactly the pinned column set.
inline void write_summary_csv(const std::vector<RunSummary>& rows,
                              const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << kSummaryHeader << "\n";
  for (const RunSummary& s : rows) {
    out << s.run_id << ", " << to_string(s.mode) << ", " << s.n_imus << ", "
        << g9(s.rmse_pos_m) << ", " << g9(s.rpe_1s_m) << ", " << g9(s.rpe_5s_m) << ", "
        << g9(s.nees_mean) << ", " << g9(s.cal_pos_err_mm) << ", " << g9(s.cal_ori_err_mrad)
        << ", " << g9(s.cal_ba_err_mm_s2) << ", " << g9(s.cal_bw_err_mrad_s) << ", "
        << g9(s.sigma3_coverage) << ", " << (s.diverged ? 1 : 0) << "\n";
  }
}

/// Campaign-mean error and 3-sigma envelope curves per parameter class.
inline void write_convergence_csv(const ConvergenceTable& conv,
                                  const std::filesystem::path& path) {
  detail::CsvWriter w(path);
  for (const char* f : {"t", "pos_err_mm", "pos_sig3_mm", "ori_err_mrad", "ori_sig3_mrad",
                        "ba_err_mm_s2", "ba_sig3_mm_s2", "bw_err_mrad_s", "bw_sig3_mrad_s"}) {
    w.field(std::string(f));
  }
  w.endrow();
  for (int k = 0; k < static_cast<int>(conv.t.size()); ++k) {
    w.field(conv.t[static_cast<std::size_t>(k)]);
    for (int c = 0; c < 4; ++c) {
      w.field(conv.err_rms(k, c));
      w.field(conv.sig3_mean(k, c));
    }
    w.endrow();
  }
}

/// Generic comma-separated table with a header row; cells keep their text.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  CsvTable table;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t");
      const auto e = cell.find_last_not_of(" \t\r");
      cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    return cells;
  };
  if (std::getline(in, line)) table.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    table.rows.push_back(split(line));
  }
  return table;
}

}  // namespace mimu
