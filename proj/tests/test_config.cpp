// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "mimu/config.hpp"

using namespace mimu;

TEST_CASE("minimal config parses with defaults", "[config]") {
  const SimConfig cfg = parse_config_string("imus:\n  - preset: VN300\n");
  REQUIRE(cfg.imus.size() == 1);
  REQUIRE(cfg.imus[0].noise.accel_density == Catch::Approx(0.14 * kMilliG).epsilon(1e-12));
  REQUIRE(cfg.imus[0].noise.gyro_density == Catch::Approx(0.061e-3).epsilon(1e-12));
  REQUIRE(cfg.imus[0].noise.rate_hz == 400.0);
  REQUIRE(cfg.seed == 1);
  REQUIRE(cfg.duration_s == 60.0);
  REQUIRE(cfg.runs == 1);
  REQUIRE(cfg.mode == FilterMode::kMultiUpdate);
  REQUIRE(cfg.calibrating);
  REQUIRE(!cfg.use_camera);
}

TEST_CASE("full config round trips every field", "[config]") {
  const std::string text = R"(
seed: 99
duration_s: 12.5
runs: 4
mode: single_predictor
calibrating: false
output_dir: results
trajectory:
  max_pos_amp_m: 1.0
  min_freq_hz: 0.1
  max_freq_hz: 0.4
  max_eul_amp_rad: 0.2
imus:
  - preset: VN300
    bias: {accel: [0.05, -0.02, 0.03], gyro: [0.004, 0.002, -0.003]}
  - densities: {accel: 1.4e-3, gyro: 6.0e-5, accel_bias_rw: 2.0e-4}
    rate_hz: 200
    extrinsic: {pos_m: [0.1, -0.05, 0.08], rotvec_rad: [0.05, 0.0, -0.03]}
    init_error_std: {pos_m: 0.03, ang_rad: 0.1, ba: 0.2, bw: 0.02}
camera:
  rate_hz: 10
  focal_px: 500
  resolution: [800, 600]
  pixel_noise_std: 0.8
  landmarks: {nx: 6, ny: 4, spacing_m: 0.5, offset_m: 4.0}
)";
  const SimConfig cfg = parse_config_string(text);
  REQUIRE(cfg.seed == 99);
  REQUIRE(cfg.duration_s == 12.5);
  REQUIRE(cfg.runs == 4);
  REQUIRE(cfg.mode == FilterMode::kSinglePredictor);
  REQUIRE(!cfg.calibrating);
  REQUIRE(cfg.output_dir == "results");
  REQUIRE(cfg.bounds.max_pos_amp_m == 1.0);
  REQUIRE(cfg.bounds.max_freq_hz == 0.4);
  REQUIRE(cfg.imus.size() == 2);
  REQUIRE(cfg.imus[0].true_b_a.x() == 0.05);
  REQUIRE(cfg.imus[1].noise.accel_density == 1.4e-3);
  REQUIRE(cfg.imus[1].noise.accel_bias_rw == 2.0e-4);
  REQUIRE(cfg.imus[1].noise.gyro_bias_rw == 1e-5);  // default kept
  REQUIRE(cfg.imus[1].noise.rate_hz == 200.0);
  REQUIRE(cfg.imus[1].true_p_BI == Vec3(0.1, -0.05, 0.08));
  REQUIRE(cfg.imus[1].init_pos_std == 0.03);
  REQUIRE(cfg.use_camera);
  REQUIRE(cfg.camera.rate_hz == 10.0);
  REQUIRE(cfg.camera.model.focal_px == 500.0);
  REQUIRE(cfg.camera.model.width == 800.0);
  REQUIRE(cfg.camera.model.principal == Vec2(400.0, 300.0));
  REQUIRE(cfg.camera.grid_nx == 6);
  REQUIRE(cfg.camera.grid_offset_m == 4.0);
}

TEST_CASE("filter section tunes process noise and iterations", "[config]") {
  const SimConfig cfg = parse_config_string(
      "imus:\n  - preset: VN300\n"
      "filter: {q_a: 2.5, q_w: 0.05, q_alpha: 400, update_iterations: 2}\n");
  REQUIRE(cfg.q_a == 2.5);
  REQUIRE(cfg.q_w == 0.05);
  REQUIRE(cfg.q_alpha == 400.0);
  REQUIRE(cfg.update_iterations == 2);

  // Defaults when the section is absent.
  const SimConfig d = parse_config_string("imus:\n  - preset: VN300\n");
  REQUIRE(d.q_a == 1.0);
  REQUIRE(d.q_w == 0.1);
  REQUIRE(d.update_iterations >= 1);

  try {
    parse_config_string("imus:\n  - preset: VN300\nfilter: {q_b: 1}\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    REQUIRE(std::string(e.what()).find("'filter.q_b'") != std::string::npos);
  }
}

TEST_CASE("unknown keys are rejected with their path", "[config]") {
  try {
    parse_config_string("imus:\n  - preset: VN300\nbogus: 1\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    REQUIRE(std::string(e.what()).find("'bogus'") != std::string::npos);
  }

  try {
    parse_config_string(
        "imus:\n  - preset: VN300\ncamera:\n  landmarks: {nx: 3, depth: 2}\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    REQUIRE(std::string(e.what()).find("'camera.landmarks.depth'") != std::string::npos);
  }

  try {
    parse_config_string("imus:\n  - preset: VN300\n    mount: [0, 0, 0]\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    REQUIRE(std::string(e.what()).find("'imus[0].mount'") != std::string::npos);
  }
}

TEST_CASE("validation failures name the key", "[config]") {
  try {
    parse_config_string("duration_s: -3\nimus:\n  - preset: VN300\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    REQUIRE(std::string(e.what()).find("duration_s") != std::string::npos);
  }

  REQUIRE_THROWS_AS(parse_config_string("imus: []\n"), ConfigError);
  REQUIRE_THROWS_AS(parse_config_string("runs: 1\n"), ConfigError);  // imus missing
  REQUIRE_THROWS_AS(parse_config_string("imus:\n  - preset: NOPE\n"), ConfigError);
  REQUIRE_THROWS_AS(
      parse_config_string("imus:\n  - preset: VN300\n    densities: {accel: 1e-3, gyro: 1e-5}\n"),
      ConfigError);
  REQUIRE_THROWS_AS(parse_config_string("imus:\n  - rate_hz: 100\n"), ConfigError);
  REQUIRE_THROWS_AS(parse_config_string("mode: nonsense\nimus:\n  - preset: VN300\n"),
                    ConfigError);
  // densities without rate_hz
  REQUIRE_THROWS_AS(
      parse_config_string("imus:\n  - densities: {accel: 1e-3, gyro: 1e-5}\n"), ConfigError);
  // non-reference IMU0 extrinsics
  REQUIRE_THROWS_AS(parse_config_string(
                        "imus:\n  - preset: VN300\n    extrinsic: {pos_m: [0.1, 0, 0]}\n"),
                    ConfigError);
  REQUIRE_THROWS_AS(parse_config("/nonexistent/path.yaml"), ConfigError);
}
