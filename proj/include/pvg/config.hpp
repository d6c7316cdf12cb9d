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

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pvg/data.hpp"
#include "pvg/generation.hpp"
#include "pvg/metrics.hpp"
#include "pvg/model.hpp"
#include "pvg/service.hpp"
#include "pvg/training.hpp"

namespace pvg {

// Invalid key, unparsable value or failed validation; key() names the culprit
// (empty when the problem is not tied to one key).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::runtime_error(message), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct EvaluationSettings {
  int64_t scenes = 8;
  int64_t short_length = 5;
  int64_t style_length = 50;
  int64_t fid_length = 50;
  int64_t window = kDefaultFidWindow;
  std::string embedder = "fixed-random-conv";  // or "external"
  std::string embedder_path;
  uint64_t embedder_seed = 0;
  uint64_t seed = 1;  // scenes for evaluation, disjoint from data.seed by default
  int64_t real_count = 64;
};

struct ServiceSettings {
  std::string host = "127.0.0.1";
  int64_t port = 8080;
  int64_t max_sessions = 64;
  int64_t gallery = 8;
  ControlBounds bounds;
};

// Every tunable of a run. Sky, splat, auto-pilot and field of view are shared
// by training and generation.
struct Settings {
  std::string run_name = "desk";
  std::string runs_dir = "runs";
  uint64_t seed = 0;

  std::string data_source = "synthetic";  // or "folder"
  std::string data_path;
  int64_t image_size = 64;
  int64_t synthetic_count = 64;
  uint64_t data_seed = 0;
  DepthProvider depth;

  int64_t base_channels = 32;
  int64_t latent_dim = 64;

  TrainConfig train;
  int64_t checkpoint_every = 500;

  bool sky_correction = true;
  double canvas_widen = 1.5;
  int64_t generate_steps = 100;

  EvaluationSettings evaluation;
  ServiceSettings service;

  RefinerConfig refiner() const;
  TrainConfig train_config() const;  // seed filled in
  GenerationConfig generation() const;
  ServiceConfig service_config() const;
  void validate() const;
};

// Flat text format, one `key = value` per line with dotted keys; `#` starts a
// comment, strings may be double-quoted, `[section]` lines prefix later keys.
void apply_config_text(Settings& s, const std::string& text, const std::string& origin = "<text>");
void apply_config_file(Settings& s, const std::filesystem::path& path);
// "key=value"
void apply_override(Settings& s, const std::string& assignment);

// Replaces run.seed with NZ_SEED when that variable is set and non-empty.
void apply_env_seed(Settings& s);

// defaults <- file <- overrides <- NZ_SEED (when set); validated.
Settings load_settings(const std::optional<std::filesystem::path>& file,
                       const std::vector<std::string>& overrides, bool use_env_seed = true);

// Every key, sorted, with its resolved value; reloads to the same settings.
std::string to_config_text(const Settings& s);
nlohmann::json to_config_json(const Settings& s);
std::vector<std::string> config_keys();

}  // namespace pvg
