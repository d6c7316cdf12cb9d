// Copyright (c) 2026 The pvgen Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "pvg/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <type_traits>

namespace pvg {
namespace {

template <typename S, typename V>
void visit_fields(S& s, V&& v) {
  v("run.name", s.run_name);
  v("run.runs_dir", s.runs_dir);
  v("run.seed", s.seed);

  v("data.source", s.data_source);
  v("data.path", s.data_path);
  v("data.image_size", s.image_size);
  v("data.synthetic_count", s.synthetic_count);
  v("data.seed", s.data_seed);

  v("depth.backend", s.depth.backend);
  v("depth.constant_disparity", s.depth.constant_disparity);
  v("depth.normalize_min", s.depth.normalize_min);
  v("depth.normalize_max", s.depth.normalize_max);

  v("model.base_channels", s.base_channels);
  v("model.latent_dim", s.latent_dim);

  auto& t = s.train;
  v("training.pretrain_steps", t.schedule.pretrain_steps);
  v("training.grow_interval", t.schedule.grow_interval);
  v("training.t_max", t.schedule.t_max);
  v("training.batch_size", t.schedule.batch_size);
  v("training.total_steps", t.schedule.total_steps);
  v("training.clip_norm", t.schedule.clip_norm);
  v("training.ema_decay", t.schedule.ema_decay);
  v("training.checkpoint_every", s.checkpoint_every);

  v("losses.lambda1_start", t.weights.lambda1_start);
  v("losses.lambda1_traj", t.weights.lambda1_traj);
  v("losses.lambda2", t.weights.lambda2);
  v("losses.lazy_interval", t.weights.lazy_interval);

  v("optimizer.lr", t.optimizer.lr);
  v("optimizer.beta1", t.optimizer.beta1);
  v("optimizer.beta2", t.optimizer.beta2);
  v("optimizer.eps", t.optimizer.eps);

  v("pose_sampler.max_translation_x", t.pose_sampler.max_translation.x());
  v("pose_sampler.max_translation_y", t.pose_sampler.max_translation.y());
  v("pose_sampler.max_translation_z", t.pose_sampler.max_translation.z());
  v("pose_sampler.max_pitch_deg", t.pose_sampler.max_rotation_deg.x());
  v("pose_sampler.max_yaw_deg", t.pose_sampler.max_rotation_deg.y());
  v("pose_sampler.max_roll_deg", t.pose_sampler.max_rotation_deg.z());

  v("autopilot.forward_speed", t.autopilot.forward_speed);
  v("autopilot.sky_fraction_target", t.autopilot.sky_fraction_target);
  v("autopilot.near_threshold", t.autopilot.near_threshold);
  v("autopilot.turn_gain", t.autopilot.turn_gain);
  v("autopilot.pitch_gain", t.autopilot.pitch_gain);
  v("autopilot.horizon_row_target", t.autopilot.horizon_row_target);
  v("autopilot.max_step_deg", t.autopilot.max_step_deg);

  v("sky.disparity_knee", t.sky.disparity_knee);
  v("sky.softness", t.sky.softness);
  v("sky.row_prior_weight", t.sky.row_prior_weight);

  v("splat.beta", t.splat.beta);
  v("splat.weight_floor", t.splat.weight_floor);

  v("camera.hfov_deg", t.hfov_deg);

  v("generation.sky_correction", s.sky_correction);
  v("generation.canvas_widen", s.canvas_widen);
  v("generation.steps", s.generate_steps);

  v("evaluation.scenes", s.evaluation.scenes);
  v("evaluation.short_length", s.evaluation.short_length);
  v("evaluation.style_length", s.evaluation.style_length);
  v("evaluation.fid_length", s.evaluation.fid_length);
  v("evaluation.window", s.evaluation.window);
  v("evaluation.embedder", s.evaluation.embedder);
  v("evaluation.embedder_path", s.evaluation.embedder_path);
  v("evaluation.embedder_seed", s.evaluation.embedder_seed);
  v("evaluation.seed", s.evaluation.seed);
  v("evaluation.real_count", s.evaluation.real_count);

  v("service.host", s.service.host);
  v("service.port", s.service.port);
  v("service.max_sessions", s.service.max_sessions);
  v("service.gallery", s.service.gallery);
  v("service.max_forward", s.service.bounds.forward);
  v("service.max_lateral", s.service.bounds.lateral);
  v("service.max_yaw_deg", s.service.bounds.yaw_deg);
  v("service.max_pitch_deg", s.service.bounds.pitch_deg);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string unquote(const std::string& key, const std::string& raw) {
  if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') {
    try {
      return nlohmann::json::parse(raw).get<std::string>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(key, "invalid string for key '" + key + "': " + raw);
    }
  }
  return raw;
}

template <typename T>
void parse_into(const std::string& key, const std::string& raw, T& field) {
  const auto bad = [&](const char* what) {
    return ConfigError(key, "invalid value for key '" + key + "': expected " + what + ", got '" + raw + "'");
  };
  if constexpr (std::is_same_v<T, bool>) {
    if (raw == "true") field = true;
    else if (raw == "false") field = false;
    else throw bad("true or false");
  } else if constexpr (std::is_same_v<T, std::string>) {
    field = unquote(key, raw);
  } else if constexpr (std::is_same_v<T, DepthBackend>) {
    try {
      field = depth_backend_from_string(unquote(key, raw));
    } catch (const std::exception&) {
      throw bad("synthetic, constant-plane or external-file");
    }
  } else if constexpr (std::is_integral_v<T>) {
    T v{};
    const auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
    if (ec != std::errc() || p != raw.data() + raw.size()) throw bad("an integer");
    field = v;
  } else {
    static_assert(std::is_same_v<T, double>);
    char* end = nullptr;
    const double v = std::strtod(raw.c_str(), &end);
    if (raw.empty() || end != raw.c_str() + raw.size()) throw bad("a number");
    field = v;
  }
}

template <typename T>
std::string format_value(const T& field) {
  if constexpr (std::is_same_v<T, bool>) {
    return field ? "true" : "false";
  } else if constexpr (std::is_same_v<T, std::string>) {
    return nlohmann::json(field).dump();
  } else if constexpr (std::is_same_v<T, DepthBackend>) {
    return nlohmann::json(to_string(field)).dump();
  } else if constexpr (std::is_integral_v<T>) {
    return std::to_string(field);
  } else {
    std::ostringstream os;
    os << std::setprecision(17) << field;
    return os.str();
  }
}

void assign(Settings& s, const std::string& key, const std::string& raw) {
  bool found = false;
  visit_fields(s, [&](const char* name, auto& field) {
    if (key == name) {
      parse_into(key, raw, field);
      found = true;
    }
  });
  if (!found) throw ConfigError(key, "unknown config key '" + key + "'");
}

}  // namespace

RefinerConfig Settings::refiner() const { return RefinerConfig::ForImageSize(image_size, base_channels, latent_dim); }

TrainConfig Settings::train_config() const {
  TrainConfig t = train;
  t.seed = seed;
  return t;
}

GenerationConfig Settings::generation() const {
  GenerationConfig g;
  g.sky_correction = sky_correction;
  g.hfov_deg = train.hfov_deg;
  g.canvas_widen = canvas_widen;
  g.sky = train.sky;
  g.autopilot = train.autopilot;
  g.splat = train.splat;
  return g;
}

ServiceConfig Settings::service_config() const {
  ServiceConfig c;
  c.bounds = service.bounds;
  c.generation = generation();
  c.max_sessions = static_cast<size_t>(service.max_sessions);
  c.seed = seed;
  c.upload_depth = depth;
  c.upload_depth.backend = DepthBackend::kConstantPlane;
  return c;
}

void Settings::validate() const {
  const auto wrap = [](const std::string& key, const std::function<void()>& f) {
    try {
      f();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(key, std::string("invalid configuration (") + key + "): " + e.what());
    }
  };
  if (run_name.empty() || run_name.find('/') != std::string::npos) {
    throw ConfigError("run.name", "run.name must be a non-empty name without '/'");
  }
  if (data_source != "synthetic" && data_source != "folder") {
    throw ConfigError("data.source", "data.source must be 'synthetic' or 'folder', got '" + data_source + "'");
  }
  if (data_source == "folder" && data_path.empty()) {
    throw ConfigError("data.path", "data.path is required when data.source = folder");
  }
  if (synthetic_count < 1) throw ConfigError("data.synthetic_count", "data.synthetic_count must be >= 1");
  wrap("model", [&] { refiner().validate(); });
  wrap("training", [&] { train.validate(); });
  if (checkpoint_every < 1) throw ConfigError("training.checkpoint_every", "training.checkpoint_every must be >= 1");
  wrap("generation", [&] { generation().validate(); });
  if (generate_steps < 0) throw ConfigError("generation.steps", "generation.steps must be >= 0");
  const auto& e = evaluation;
  if (e.scenes < 2) throw ConfigError("evaluation.scenes", "evaluation.scenes must be >= 2");
  if (e.real_count < 2) throw ConfigError("evaluation.real_count", "evaluation.real_count must be >= 2");
  if (e.short_length < 1) throw ConfigError("evaluation.short_length", "evaluation.short_length must be >= 1");
  if (e.style_length < 1) throw ConfigError("evaluation.style_length", "evaluation.style_length must be >= 1");
  if (e.window < 1 || e.window > e.fid_length) {
    throw ConfigError("evaluation.window", "evaluation.window must lie in [1, evaluation.fid_length]");
  }
  if (e.embedder != "fixed-random-conv" && e.embedder != "external") {
    throw ConfigError("evaluation.embedder", "evaluation.embedder must be 'fixed-random-conv' or 'external'");
  }
  if (e.embedder == "external" && e.embedder_path.empty()) {
    throw ConfigError("evaluation.embedder_path", "evaluation.embedder_path is required for the external embedder");
  }
  if (service.port < 0 || service.port > 65535) throw ConfigError("service.port", "service.port must lie in [0, 65535]");
  if (service.max_sessions < 1) throw ConfigError("service.max_sessions", "service.max_sessions must be >= 1");
  wrap("service", [&] { service.bounds.validate(); });
}

void apply_config_text(Settings& s, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::string section;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    // '#' inside a quoted string is kept.
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("", origin + ":" + std::to_string(number) + ": expected 'key = value', got '" + line + "'");
    }
    std::string key = trim(line.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    assign(s, key, trim(line.substr(eq + 1)));
  }
}

void apply_config_file(Settings& s, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  apply_config_text(s, buf.str(), path.string());
}

void apply_override(Settings& s, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError(trim(assignment), "override '" + assignment + "' is not of the form key=value");
  }
  assign(s, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void apply_env_seed(Settings& s) {
  const char* env = std::getenv("NZ_SEED");
  if (!env || !*env) return;
  try {
    parse_into("run.seed", env, s.seed);
  } catch (const ConfigError&) {
    throw ConfigError("NZ_SEED", std::string("NZ_SEED must be a non-negative integer, got '") + env + "'");
  }
}

Settings load_settings(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides,
                       bool use_env_seed) {
  Settings s;
  if (file) apply_config_file(s, *file);
  for (const auto& o : overrides) apply_override(s, o);
  if (use_env_seed) apply_env_seed(s);
  s.validate();
  return s;
}

std::string to_config_text(const Settings& s) {
  std::map<std::string, std::string> lines;
  auto& mutable_s = const_cast<Settings&>(s);
  visit_fields(mutable_s, [&](const char* name, auto& field) { lines[name] = format_value(field); });
  std::string out;
  for (const auto& [k, v] : lines) out += k + " = " + v + "\n";
  return out;
}

nlohmann::json to_config_json(const Settings& s) {
  nlohmann::json j = nlohmann::json::object();
  auto& mutable_s = const_cast<Settings&>(s);
  visit_fields(mutable_s, [&](const char* name, auto& field) {
    using T = std::decay_t<decltype(field)>;
    if constexpr (std::is_same_v<T, DepthBackend>) {
      j[name] = to_string(field);
    } else {
      j[name] = field;
    }
  });
  return j;
}

std::vector<std::string> config_keys() {
  Settings s;
  std::vector<std::string> keys;
  visit_fields(s, [&](const char* name, auto&) { keys.emplace_back(name); });
  std::sort(keys.begin(), keys.end());
  return keys;
}

}  // namespace pvg
