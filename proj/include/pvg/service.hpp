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
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pvg/data.hpp"
#include "pvg/generation.hpp"

namespace pvg {

// Error surfaced to clients as {code, message} with an HTTP status.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, std::string code, const std::string& message)
      : std::runtime_error(message), status_(status), code_(std::move(code)) {}
  int status() const { return status_; }
  const std::string& code() const { return code_; }
  nlohmann::json to_json() const { return {{"code", code_}, {"message", what()}}; }

 private:
  int status_;
  std::string code_;
};

// Per-step limits on user deltas; angles in degrees.
struct ControlBounds {
  double forward = 0.2;
  double lateral = 0.1;
  double yaw_deg = 10.0;
  double pitch_deg = 10.0;

  void validate() const;
  nlohmann::json to_json() const;
};

struct Control {
  double forward = 0;
  double lateral = 0;
  double yaw_deg = 0;
  double pitch_deg = 0;
  bool autopilot = false;

  // Keys: forward, lateral, yaw, pitch, autopilot. Unknown keys are rejected.
  static Control FromJson(const nlohmann::json& j);
  void check(const ControlBounds& b) const;
};

struct ServiceConfig {
  ControlBounds bounds;
  GenerationConfig generation;
  size_t max_sessions = 64;
  uint64_t seed = 0;
  // Depth for uploads that arrive without a disparity image.
  DepthProvider upload_depth{DepthBackend::kConstantPlane};
};

struct StepResult {
  int64_t step_index = 0;
  CameraPose relative;
  CameraPose pose;  // cumulative
  std::vector<uint8_t> png;
};

struct CreatedSession {
  std::string id;
  int64_t step_index = 0;
  std::vector<uint8_t> png;
};

// Session table for interactive generation. Calls on different sessions may
// run concurrently; calls on one session are serialised.
class SessionManager {
 public:
  // Invoked after every step (and once on subscribe) with the new frame;
  // step == -1 signals that the session was closed.
  using FrameListener = std::function<void(int64_t step, const std::vector<uint8_t>& png)>;

  SessionManager(std::shared_ptr<const RefinerState> model, ServiceConfig cfg,
                 std::vector<RGBDImage> gallery = {});
  ~SessionManager();

  CreatedSession create_from_image(const std::vector<uint8_t>& image_bytes,
                                   const std::vector<uint8_t>* disparity_png = nullptr,
                                   std::optional<uint64_t> seed = std::nullopt);
  CreatedSession create_from_gallery(int64_t index, std::optional<uint64_t> seed = std::nullopt);
  CreatedSession create(const RGBDImage& start, std::optional<uint64_t> seed = std::nullopt);

  StepResult step(const std::string& id, const Control& control);
  void close(const std::string& id);
  std::vector<uint8_t> frame_png(const std::string& id, int64_t* step_index = nullptr) const;
  // Pose the auto-pilot would take next for this session.
  CameraPose autopilot_pose(const std::string& id) const;

  uint64_t subscribe(const std::string& id, FrameListener listener);
  void unsubscribe(const std::string& id, uint64_t token);

  size_t session_count() const;
  size_t gallery_size() const { return gallery_.size(); }
  int64_t image_size() const { return model_->config.image_size; }
  const ServiceConfig& config() const { return cfg_; }

 private:
  struct Session;
  std::shared_ptr<Session> find(const std::string& id) const;
  std::string new_id();

  std::shared_ptr<const RefinerState> model_;
  ServiceConfig cfg_;
  std::vector<RGBDImage> gallery_;
  mutable std::shared_mutex table_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::mutex id_mutex_;
  Rng id_rng_;
  uint64_t created_ = 0;
};

}  // namespace pvg
