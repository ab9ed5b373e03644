// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <yaml-cpp/yaml.h>

#include <initializer_list>
#include <stdexcept>
#include <string>

#include "mimu/sim.hpp"

namespace mimu {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string join_path(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

/// Reject any key outside the schema, naming the offending path.
inline void check_keys(const YAML::Node& node, const std::string& path,
                       std::initializer_list<const char*> allowed) {
  if (!node.IsMap()) throw ConfigError("config: '" + path + "' must be a map");
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    bool known = false;
    for (const char* a : allowed) {
      if (key == a) {
        known = true;
        break;
      }
    }
    if (!known) throw ConfigError("config: unknown key '" + join_path(path, key) + "'");
  }
}

template <class T>
T as_or_throw(const YAML::Node& n, const std::string& path) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("config: bad value for '" + path + "'");
  }
}

template <class T>
T scalar(const YAML::Node& parent, const std::string& prefix, const char* key, T fallback) {
  const YAML::Node n = parent[key];
  return n ? as_or_throw<T>(n, join_path(prefix, key)) : fallback;
}

template <class T>
T required_scalar(const YAML::Node& parent, const std::string& prefix, const char* key) {
  const YAML::Node n = parent[key];
  if (!n) throw ConfigError("config: missing key '" + join_path(prefix, key) + "'");
  return as_or_throw<T>(n, join_path(prefix, key));
}

inline Vec3 vec3_or(const YAML::Node& parent, const std::string& prefix, const char* key,
                    const Vec3& fallback) {
  const YAML::Node n = parent[key];
  if (!n) return fallback;
  const std::string path = join_path(prefix, key);
  if (!n.IsSequence() || n.size() != 3) {
    throw ConfigError("config: '" + path + "' must be a 3-element sequence");
  }
  Vec3 v;
  for (int k = 0; k < 3; ++k) v[k] = as_or_throw<double>(n[k], path);
  return v;
}

inline ImuSpec parse_imu(const YAML::Node& node, const std::string& prefix) {
  check_keys(node, prefix, {"preset", "densities", "rate_hz", "extrinsic", "bias",
                            "init_error_std"});
  ImuSpec spec;
  const bool has_preset = static_cast<bool>(node["preset"]);
  const bool has_densities = static_cast<bool>(node["densities"]);
  if (has_preset == has_densities) {
    throw ConfigError("config: '" + prefix + "' needs exactly one of preset, densities");
  }
  if (has_preset) {
    const std::string name = as_or_throw<std::string>(node["preset"], prefix + ".preset");
    try {
      spec.noise = preset_noise(name);
    } catch (const std::invalid_argument&) {
      throw ConfigError("config: '" + prefix + ".preset' has no preset named '" + name + "'");
    }
    spec.noise.rate_hz = scalar<double>(node, prefix, "rate_hz", spec.noise.rate_hz);
  } else {
    const YAML::Node d = node["densities"];
    const std::string dp = prefix + ".densities";
    check_keys(d, dp, {"accel", "gyro", "accel_bias_rw", "gyro_bias_rw"});
    spec.noise.accel_density = required_scalar<double>(d, dp, "accel");
    spec.noise.gyro_density = required_scalar<double>(d, dp, "gyro");
    spec.noise.accel_bias_rw = scalar<double>(d, dp, "accel_bias_rw", spec.noise.accel_bias_rw);
    spec.noise.gyro_bias_rw = scalar<double>(d, dp, "gyro_bias_rw", spec.noise.gyro_bias_rw);
    spec.noise.rate_hz = required_scalar<double>(node, prefix, "rate_hz");
  }
  if (const YAML::Node e = node["extrinsic"]) {
    const std::string ep = prefix + ".extrinsic";
    check_keys(e, ep, {"pos_m", "rotvec_rad"});
    spec.true_p_BI = vec3_or(e, ep, "pos_m", Vec3::Zero());
    spec.true_rotvec_BI = vec3_or(e, ep, "rotvec_rad", Vec3::Zero());
  }
  if (const YAML::Node b = node["bias"]) {
    const std::string bp = prefix + ".bias";
    check_keys(b, bp, {"accel", "gyro"});
    spec.true_b_a = vec3_or(b, bp, "accel", Vec3::Zero());
    spec.true_b_w = vec3_or(b, bp, "gyro", Vec3::Zero());
  }
  if (const YAML::Node s = node["init_error_std"]) {
    const std::string sp = prefix + ".init_error_std";
    check_keys(s, sp, {"pos_m", "ang_rad", "ba", "bw"});
    spec.init_pos_std = scalar<double>(s, sp, "pos_m", spec.init_pos_std);
    spec.init_ang_std = scalar<double>(s, sp, "ang_rad", spec.init_ang_std);
    spec.init_ba_std = scalar<double>(s, sp, "ba", spec.init_ba_std);
    spec.init_bw_std = scalar<double>(s, sp, "bw", spec.init_bw_std);
  }
  return spec;
}

}  // namespace detail

/// Parse and validate a simulation config. Unknown keys and out-of-range
/// values are rejected with the offending path named.
inline SimConfig parse_config_node(const YAML::Node& root) {
  using namespace detail;
  check_keys(root, "", {"seed", "duration_s", "runs", "mode", "calibrating", "trajectory",
                        "filter", "imus", "camera", "output_dir"});
  SimConfig cfg;
  cfg.seed = scalar<unsigned long long>(root, "", "seed", cfg.seed);
  cfg.duration_s = scalar<double>(root, "", "duration_s", cfg.duration_s);
  cfg.runs = scalar<int>(root, "", "runs", cfg.runs);
  cfg.calibrating = scalar<bool>(root, "", "calibrating", cfg.calibrating);
  if (root["mode"]) {
    try {
      cfg.mode = filter_mode_from_string(as_or_throw<std::string>(root["mode"], "mode"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  }
  cfg.output_dir = scalar<std::string>(root, "", "output_dir", cfg.output_dir);

  if (const YAML::Node t = root["trajectory"]) {
    check_keys(t, "trajectory", {"max_pos_amp_m", "min_freq_hz", "max_freq_hz",
                                 "max_eul_amp_rad", "max_accel_per_term",
                                 "max_eul_accel_per_term"});
    TrajectoryBounds& b = cfg.bounds;
    b.max_pos_amp_m = scalar<double>(t, "trajectory", "max_pos_amp_m", b.max_pos_amp_m);
    b.min_freq_hz = scalar<double>(t, "trajectory", "min_freq_hz", b.min_freq_hz);
    b.max_freq_hz = scalar<double>(t, "trajectory", "max_freq_hz", b.max_freq_hz);
    b.max_eul_amp_rad = scalar<double>(t, "trajectory", "max_eul_amp_rad", b.max_eul_amp_rad);
    b.max_accel_per_term =
        scalar<double>(t, "trajectory", "max_accel_per_term", b.max_accel_per_term);
    b.max_eul_accel_per_term =
        scalar<double>(t, "trajectory", "max_eul_accel_per_term", b.max_eul_accel_per_term);
  }

  if (const YAML::Node f = root["filter"]) {
    check_keys(f, "filter", {"q_a", "q_w", "q_alpha", "update_iterations"});
    cfg.q_a = scalar<double>(f, "filter", "q_a", cfg.q_a);
    cfg.q_w = scalar<double>(f, "filter", "q_w", cfg.q_w);
    cfg.q_alpha = scalar<double>(f, "filter", "q_alpha", cfg.q_alpha);
    cfg.update_iterations =
        scalar<int>(f, "filter", "update_iterations", cfg.update_iterations);
  }

  const YAML::Node imus = root["imus"];
  if (!imus) throw ConfigError("config: missing key 'imus'");
  if (!imus.IsSequence() || imus.size() == 0) {
    throw ConfigError("config: 'imus' must be a non-empty sequence");
  }
  for (std::size_t i = 0; i < imus.size(); ++i) {
    cfg.imus.push_back(parse_imu(imus[i], "imus[" + std::to_string(i) + "]"));
  }

  if (const YAML::Node c = root["camera"]) {
    cfg.use_camera = true;
    check_keys(c, "camera", {"rate_hz", "focal_px", "resolution", "pixel_noise_std",
                             "landmarks"});
    cfg.camera.rate_hz = scalar<double>(c, "camera", "rate_hz", cfg.camera.rate_hz);
    cfg.camera.model.focal_px = scalar<double>(c, "camera", "focal_px", cfg.camera.model.focal_px);
    cfg.camera.model.pixel_noise_std =
        scalar<double>(c, "camera", "pixel_noise_std", cfg.camera.model.pixel_noise_std);
    if (const YAML::Node r = c["resolution"]) {
      if (!r.IsSequence() || r.size() != 2) {
        throw ConfigError("config: 'camera.resolution' must be [width, height]");
      }
      cfg.camera.model.width = as_or_throw<double>(r[0], "camera.resolution");
      cfg.camera.model.height = as_or_throw<double>(r[1], "camera.resolution");
      cfg.camera.model.principal =
          Vec2(0.5 * cfg.camera.model.width, 0.5 * cfg.camera.model.height);
    }
    if (const YAML::Node l = c["landmarks"]) {
      check_keys(l, "camera.landmarks", {"nx", "ny", "spacing_m", "offset_m"});
      cfg.camera.grid_nx = scalar<int>(l, "camera.landmarks", "nx", cfg.camera.grid_nx);
      cfg.camera.grid_ny = scalar<int>(l, "camera.landmarks", "ny", cfg.camera.grid_ny);
      cfg.camera.grid_spacing_m =
          scalar<double>(l, "camera.landmarks", "spacing_m", cfg.camera.grid_spacing_m);
      cfg.camera.grid_offset_m =
          scalar<double>(l, "camera.landmarks", "offset_m", cfg.camera.grid_offset_m);
    }
  } else {
    cfg.use_camera = false;
  }

  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

inline SimConfig parse_config_string(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config: parse failure: ") + e.what());
  }
  return parse_config_node(root);
}

inline SimConfig parse_config(const std::string& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::BadFile&) {
    throw ConfigError("config: cannot read '" + path + "'");
  } catch (const YAML::Exception& e) {
    throw ConfigError("config: parse failure in '" + path + "': " + e.what());
  }
  return parse_config_node(root);
}

}  // namespace mimu
