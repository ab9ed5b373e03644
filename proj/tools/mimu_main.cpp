// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mimu/config.hpp"
#include "mimu/csv.hpp"
#include "mimu/eval.hpp"
#include "mimu/observability.hpp"
#include "mimu/sim.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitDiverged = 2;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> runs;
  std::optional<std::string> out;
};

mimu::SimConfig load_config(const std::string& path, const Overrides& ov) {
  mimu::SimConfig cfg = mimu::parse_config(path);
  if (ov.seed) cfg.seed = *ov.seed;
  if (ov.runs) cfg.runs = *ov.runs;
  if (ov.out) cfg.output_dir = *ov.out;
  if (cfg.output_dir.empty()) cfg.output_dir = "out";
  return cfg;
}

int cmd_run(const std::string& config_path, const Overrides& ov, int run_id) {
  const mimu::SimConfig cfg = load_config(config_path, ov);
  const mimu::RunRecord rec = mimu::run_single(cfg, run_id);
  const std::filesystem::path dir =
      std::filesystem::path(cfg.output_dir) / ("run_" + std::to_string(run_id));
  mimu::write_run_record(rec, dir);
  const mimu::RunSummary s = mimu::summarize_run(rec);
  std::cout << "run " << run_id << ": " << rec.epochs.size() << " epochs, rmse_pos_m "
            << mimu::g9(s.rmse_pos_m) << ", nees_mean " << mimu::g9(s.nees_mean)
            << (rec.diverged ? ", DIVERGED (" + rec.divergence_reason + ")" : "") << "\n";
  std::cout << "wrote " << dir.string() << "\n";
  return rec.diverged ? kExitDiverged : kExitOk;
}

int cmd_montecarlo(const std::string& config_path, const Overrides& ov, int max_divergences) {
  const mimu::SimConfig cfg = load_config(config_path, ov);
  const mimu::CampaignResult res = mimu::run_monte_carlo(cfg, cfg.runs);
  std::filesystem::create_directories(cfg.output_dir);
  const std::filesystem::path dir(cfg.output_dir);
  std::vector<mimu::RunSummary> rows = res.runs;
  mimu::write_summary_csv(rows, dir / "summary.csv");
  mimu::write_convergence_csv(res.convergence, dir / "convergence.csv");
  std::cout << "campaign: " << cfg.runs << " runs, " << res.divergences << " diverged\n";
  std::cout << "wrote " << (dir / "summary.csv").string() << "\n";
  std::cout << "wrote " << (dir / "convergence.csv").string() << "\n";
  return res.divergences > max_divergences ? kExitDiverged : kExitOk;
}

int cmd_observability(int n_imus, bool no_camera) {
  if (n_imus < 1) {
    std::cerr << "observability: --imus must be >= 1\n";
    return kExitConfig;
  }
  std::vector<mimu::ImuCalibration> imus(static_cast<std::size_t>(n_imus));
  for (int i = 1; i < n_imus; ++i) {
    auto& c = imus[static_cast<std::size_t>(i)];
    c.p_BI = mimu::Vec3(0.10 * i, -0.06 * i, 0.03 * i);
    c.q_BI = mimu::quat_from_rotvec(mimu::Vec3(0.05 * i, 0.02 * i, -0.04 * i));
  }
  const mimu::FilterState x0 = mimu::make_filter_state(mimu::BodyState{}, imus);

  mimu::ObservabilityOptions opts;
  opts.use_camera = !no_camera;
  const mimu::ObservabilityReport rep = mimu::analyze_observability(x0, opts);

  std::cout << "imus: " << rep.n_imus << "\n"
            << "camera: " << (rep.used_camera ? "yes" : "no") << "\n"
            << "state_dim: " << rep.rank.state_dim << "\n"
            << "stacked_rows: " << rep.rank.rows << "\n"
            << "rank: " << rep.rank.rank << "\n"
            << "deficiency_raw: " << rep.rank.deficiency << "\n"
            << "pinned_dims: " << rep.pinned_dims << "\n"
            << "deficiency: " << rep.adjusted_deficiency << "\n";
  return kExitOk;
}

double cell_as_double(const std::string& s) {
  try {
    return std::stod(s);
  } catch (...) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

void print_aligned(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& row : rows) {
    if (width.size() < row.size()) width.resize(row.size(), 0);
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c > 0) line += "  ";
      line += std::string(width[c] - row[c].size(), ' ') + row[c];
    }
    std::cout << line << "\n";
  }
}

int cmd_report(const std::string& summary_path) {
  mimu::CsvTable table;
  try {
    table = mimu::read_csv(summary_path);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  }
  if (table.header.empty()) {
    std::cerr << "report: '" << summary_path << "' has no header\n";
    return kExitConfig;
  }
  auto col = [&](const std::string& name) -> int {
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      if (table.header[c] == name) return static_cast<int>(c);
    }
    return -1;
  };
  const int c_div = col("diverged");
  int n_diverged = 0;
  std::vector<const std::vector<std::string>*> good;
  for (const auto& row : table.rows) {
    const bool d = c_div >= 0 && c_div < static_cast<int>(row.size()) && row[static_cast<std::size_t>(c_div)] == "1";
    if (d) {
      ++n_diverged;
    } else {
      good.push_back(&row);
    }
  }

  std::cout << "runs: " << table.rows.size() << "  diverged: " << n_diverged << "\n\n";

  const char* classes[4][2] = {{"cal_pos_err_mm", "position [mm]"},
                               {"cal_ori_err_mrad", "orientation [mrad]"},
                               {"cal_ba_err_mm_s2", "accel bias [mm/s^2]"},
                               {"cal_bw_err_mrad_s", "gyro bias [mrad/s]"}};
  std::vector<std::vector<std::string>> agg;
  agg.push_back({"parameter", "mean", "std"});
  for (const auto& cls : classes) {
    const int c = col(cls[0]);
    std::vector<double> v;
    if (c >= 0) {
      for (const auto* row : good) {
        if (c < static_cast<int>(row->size())) {
          const double x = cell_as_double((*row)[static_cast<std::size_t>(c)]);
          if (!std::isnan(x)) v.push_back(x);
        }
      }
    }
    double mean = 0.0, sd = 0.0;
    if (!v.empty()) {
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      for (double x : v) sd += (x - mean) * (x - mean);
      sd = v.size() > 1 ? std::sqrt(sd / static_cast<double>(v.size() - 1)) : 0.0;
    }
    agg.push_back({cls[1], mimu::g9(mean), mimu::g9(sd)});
  }
  print_aligned(agg);
  std::cout << "\n";

  std::vector<std::vector<std::string>> full;
  full.push_back(table.header);
  for (const auto& row : table.rows) full.push_back(row);
  print_aligned(full);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-IMU fusion filter: simulation, calibration and analysis"};
  app.require_subcommand(1);

  Overrides ov;
  std::string config_path;
  std::string summary_path;
  int run_id = 0;
  int n_imus = 2;
  bool no_camera = false;
  int max_divergences = 0;
  std::uint64_t seed_flag = 0;
  int runs_flag = 0;
  std::string out_flag;

  CLI::App* c_run = app.add_subcommand("run", "simulate one run and write its CSVs");
  c_run->add_option("config", config_path, "YAML config file")->required();
  c_run->add_option("--seed", seed_flag, "override master seed");
  c_run->add_option("--out", out_flag, "override output directory");
  c_run->add_option("--run-id", run_id, "run index within the campaign's seed stream");

  CLI::App* c_mc = app.add_subcommand("montecarlo", "run a campaign, write summary CSVs");
  c_mc->add_option("config", config_path, "YAML config file")->required();
  c_mc->add_option("--seed", seed_flag, "override master seed");
  c_mc->add_option("--runs", runs_flag, "override number of runs");
  c_mc->add_option("--out", out_flag, "override output directory");
  c_mc->add_option("--max-divergences", max_divergences,
                   "largest diverged-run count that still exits 0");

  CLI::App* c_obs = app.add_subcommand("observability", "rank analysis of the filter model");
  c_obs->add_option("--imus", n_imus, "number of IMUs including the primary");
  c_obs->add_flag("--no-camera", no_camera, "exclude camera rows");

  CLI::App* c_rep = app.add_subcommand("report", "render a summary CSV as aligned tables");
  c_rep->add_option("summary", summary_path, "summary.csv from montecarlo")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (c_run->parsed()) {
      if (c_run->count("--seed")) ov.seed = seed_flag;
      if (c_run->count("--out")) ov.out = out_flag;
      return cmd_run(config_path, ov, run_id);
    }
    if (c_mc->parsed()) {
      if (c_mc->count("--seed")) ov.seed = seed_flag;
      if (c_mc->count("--runs")) ov.runs = runs_flag;
      if (c_mc->count("--out")) ov.out = out_flag;
      return cmd_montecarlo(config_path, ov, max_divergences);
    }
    if (c_obs->parsed()) return cmd_observability(n_imus, no_camera);
    if (c_rep->parsed()) return cmd_report(summary_path);
  } catch (const mimu::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
