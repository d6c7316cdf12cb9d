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

#include "pvg/service.hpp"

#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "pvg/image_io.hpp"

namespace pvg {

struct SessionManager::Session {
  std::mutex mutex;
  std::unique_ptr<ViewGenerator> generator;
  std::vector<uint8_t> png;
  std::map<uint64_t, FrameListener> listeners;
  uint64_t next_token = 1;
  bool closed = false;
};

void ControlBounds::validate() const {
  if (!(forward >= 0 && lateral >= 0 && yaw_deg >= 0 && pitch_deg >= 0)) {
    throw std::invalid_argument("control bounds must be >= 0");
  }
}

nlohmann::json ControlBounds::to_json() const {
  return {{"forward", forward}, {"lateral", lateral}, {"yaw", yaw_deg}, {"pitch", pitch_deg}};
}

Control Control::FromJson(const nlohmann::json& j) {
  if (!j.is_object()) throw ServiceError(400, "bad_request", "step body must be a JSON object");
  Control c;
  for (const auto& [key, value] : j.items()) {
    if (key == "autopilot") {
      if (!value.is_boolean()) throw ServiceError(400, "bad_request", "'autopilot' must be a boolean");
      c.autopilot = value.get<bool>();
      continue;
    }
    double* target = key == "forward"   ? &c.forward
                     : key == "lateral" ? &c.lateral
                     : key == "yaw"     ? &c.yaw_deg
                     : key == "pitch"   ? &c.pitch_deg
                                        : nullptr;
    if (!target) throw ServiceError(400, "bad_request", "unknown control key '" + key + "'");
    if (!value.is_number()) throw ServiceError(400, "bad_request", "'" + key + "' must be a number");
    *target = value.get<double>();
    if (!std::isfinite(*target)) throw ServiceError(400, "bad_request", "'" + key + "' must be finite");
  }
  return c;
}

void Control::check(const ControlBounds& b) const {
  auto require = [](const char* name, double v, double bound) {
    if (std::abs(v) > bound) {
      std::ostringstream msg;
      msg << name << " delta " << v << " exceeds the bound |" << name << "| <= " << bound;
      throw ServiceError(422, "out_of_bounds", msg.str());
    }
  };
  require("forward", forward, b.forward);
  require("lateral", lateral, b.lateral);
  require("yaw", yaw_deg, b.yaw_deg);
  require("pitch", pitch_deg, b.pitch_deg);
}

SessionManager::SessionManager(std::shared_ptr<const RefinerState> model, ServiceConfig cfg,
                               std::vector<RGBDImage> gallery)
    : model_(std::move(model)), cfg_(std::move(cfg)), gallery_(std::move(gallery)), id_rng_(std::random_device{}()) {
  if (!model_) throw std::invalid_argument("SessionManager: no model");
  cfg_.bounds.validate();
  cfg_.generation.validate();
}

SessionManager::~SessionManager() {
  std::unique_lock lock(table_mutex_);
  for (auto& [id, s] : sessions_) {
    std::lock_guard guard(s->mutex);
    s->closed = true;
    for (auto& [token, listener] : s->listeners) listener(-1, {});
    s->listeners.clear();
  }
}

std::string SessionManager::new_id() {
  std::lock_guard lock(id_mutex_);
  std::ostringstream out;
  out << std::hex << std::setfill('0') << std::setw(16) << id_rng_() << std::setw(4) << (created_++ & 0xffff);
  return out.str();
}

CreatedSession SessionManager::create(const RGBDImage& start, std::optional<uint64_t> seed) {
  auto session = std::make_shared<Session>();
  try {
    session->generator = std::make_unique<ViewGenerator>(model_, start, cfg_.generation, seed.value_or(cfg_.seed));
  } catch (const std::invalid_argument& e) {
    throw ServiceError(400, "bad_request", e.what());
  }
  session->png = encode_png(session->generator->current().rgb);
  CreatedSession out;
  out.png = session->png;
  std::unique_lock lock(table_mutex_);
  if (sessions_.size() >= cfg_.max_sessions) {
    throw ServiceError(429, "too_many_sessions",
                       "session limit " + std::to_string(cfg_.max_sessions) + " reached");
  }
  do {
    out.id = new_id();
  } while (sessions_.count(out.id));
  sessions_[out.id] = session;
  return out;
}

namespace {

// Empty Mat on any failure; OpenCV asserts on some malformed buffers.
cv::Mat try_decode(const std::vector<uint8_t>& bytes, int flags) {
  if (bytes.empty()) return {};
  try {
    return cv::imdecode(bytes, flags);
  } catch (const cv::Exception&) {
    return {};
  }
}

}  // namespace

CreatedSession SessionManager::create_from_image(const std::vector<uint8_t>& image_bytes,
                                                 const std::vector<uint8_t>* disparity_png,
                                                 std::optional<uint64_t> seed) {
  const int size = static_cast<int>(image_size());
  cv::Mat raw = try_decode(image_bytes, cv::IMREAD_COLOR);
  if (raw.empty()) throw ServiceError(400, "decode_error", "could not decode the uploaded image");
  const auto rgb = rgb_from_mat(center_crop_resize(raw, size));
  torch::Tensor disparity;
  if (disparity_png) {
    cv::Mat d = try_decode(*disparity_png, cv::IMREAD_UNCHANGED);
    if (d.empty()) throw ServiceError(400, "decode_error", "could not decode the uploaded disparity image");
    if (d.channels() != 1) cv::cvtColor(d, d, cv::COLOR_BGR2GRAY);
    d = center_crop_resize(d, size);
    cv::Mat f;
    d.convertTo(f, CV_32F, d.depth() == CV_16U ? 1.0 / 65535.0 : 1.0 / 255.0);
    disparity = cfg_.upload_depth.normalize(
        torch::from_blob(f.data, {1, size, size}, torch::kFloat32).clone());
  } else {
    disparity = cfg_.upload_depth.normalize(torch::full({1, size, size}, cfg_.upload_depth.constant_disparity));
  }
  return create(RGBDImage::Create(rgb, disparity), seed);
}

CreatedSession SessionManager::create_from_gallery(int64_t index, std::optional<uint64_t> seed) {
  if (index < 0 || index >= static_cast<int64_t>(gallery_.size())) {
    throw ServiceError(404, "not_found", "dataset index " + std::to_string(index) + " is outside [0, " +
                                             std::to_string(gallery_.size()) + ")");
  }
  return create(gallery_[index], seed);
}

std::shared_ptr<SessionManager::Session> SessionManager::find(const std::string& id) const {
  std::shared_lock lock(table_mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ServiceError(404, "not_found", "unknown session '" + id + "'");
  return it->second;
}

StepResult SessionManager::step(const std::string& id, const Control& control) {
  const auto s = find(id);
  if (!control.autopilot) control.check(cfg_.bounds);
  std::lock_guard lock(s->mutex);
  if (s->closed) throw ServiceError(404, "not_found", "unknown session '" + id + "'");
  StepResult r;
  if (control.autopilot) {
    r.relative = s->generator->autopilot_pose();
    s->generator->step(r.relative, Provenance::kAutopilot);
  } else {
    r.relative = pose_from_controls(control.forward, control.lateral, control.yaw_deg, control.pitch_deg);
    s->generator->step(r.relative, Provenance::kUser);
  }
  r.pose = s->generator->cumulative_pose();
  r.step_index = s->generator->step_index();
  s->png = encode_png(s->generator->current().rgb);
  r.png = s->png;
  for (auto& [token, listener] : s->listeners) listener(r.step_index, r.png);
  return r;
}

void SessionManager::close(const std::string& id) {
  std::shared_ptr<Session> s;
  {
    std::unique_lock lock(table_mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw ServiceError(404, "not_found", "unknown session '" + id + "'");
    s = it->second;
    sessions_.erase(it);
  }
  std::lock_guard lock(s->mutex);
  s->closed = true;
  for (auto& [token, listener] : s->listeners) listener(-1, {});
  s->listeners.clear();
  s->generator.reset();
}

std::vector<uint8_t> SessionManager::frame_png(const std::string& id, int64_t* step_index) const {
  const auto s = find(id);
  std::lock_guard lock(s->mutex);
  if (s->closed) throw ServiceError(404, "not_found", "unknown session '" + id + "'");
  if (step_index) *step_index = s->generator->step_index();
  return s->png;
}

CameraPose SessionManager::autopilot_pose(const std::string& id) const {
  const auto s = find(id);
  std::lock_guard lock(s->mutex);
  if (s->closed) throw ServiceError(404, "not_found", "unknown session '" + id + "'");
  return s->generator->autopilot_pose();
}

uint64_t SessionManager::subscribe(const std::string& id, FrameListener listener) {
  const auto s = find(id);
  std::lock_guard lock(s->mutex);
  if (s->closed) throw ServiceError(404, "not_found", "unknown session '" + id + "'");
  listener(s->generator->step_index(), s->png);
  const uint64_t token = s->next_token++;
  s->listeners[token] = std::move(listener);
  return token;
}

void SessionManager::unsubscribe(const std::string& id, uint64_t token) {
  std::shared_ptr<Session> s;
  try {
    s = find(id);
  } catch (const ServiceError&) {
    return;
  }
  std::lock_guard lock(s->mutex);
  s->listeners.erase(token);
}

size_t SessionManager::session_count() const {
  std::shared_lock lock(table_mutex_);
  return sessions_.size();
}

}  // namespace pvg
