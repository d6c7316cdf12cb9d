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

#include "pvg/trajectory.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace pvg {

void PoseSamplerConfig::validate() const {
  if ((max_translation.array() < 0).any() || (max_rotation_deg.array() < 0).any()) {
    throw std::invalid_argument("PoseSamplerConfig: bounds must be >= 0");
  }
}

void AutoPilotConfig::validate() const {
  if (!(forward_speed > 0)) throw std::invalid_argument("AutoPilotConfig: forward_speed must be > 0");
  if (!(near_threshold > 0 && near_threshold < 1)) {
    throw std::invalid_argument("AutoPilotConfig: near_threshold must lie in (0,1)");
  }
  if (!(sky_fraction_target > 0 && sky_fraction_target < 1)) {
    throw std::invalid_argument("AutoPilotConfig: sky_fraction_target must lie in (0,1)");
  }
}

CameraPose sample_virtual_pose(const PoseSamplerConfig& cfg, Rng& rng) {
  cfg.validate();
  Eigen::Vector3d t;
  for (int i = 0; i < 3; ++i) t[i] = uniform(rng, -cfg.max_translation[i], cfg.max_translation[i]);
  Eigen::Vector3d r;
  for (int i = 0; i < 3; ++i) {
    r[i] = deg_to_rad(uniform(rng, -cfg.max_rotation_deg[i], cfg.max_rotation_deg[i]));
  }
  return euler_pose(r.y(), r.x(), r.z(), t);
}

AutoPilotReading autopilot_reading(const torch::Tensor& disparity,
                                   const torch::Tensor& sky_mask,
                                   const AutoPilotConfig& cfg) {
  cfg.validate();
  torch::NoGradGuard guard;
  const auto d = disparity.detach().to(torch::kFloat64).reshape({disparity.size(-2), disparity.size(-1)});
  const auto m = sky_mask.detach().to(torch::kFloat64).reshape({d.size(0), d.size(1)});
  const int64_t H = d.size(0);
  const int64_t W = d.size(1);
  const int64_t half = W / 2;

  AutoPilotReading r;
  const auto near = (d > cfg.near_threshold).to(torch::kFloat64);
  r.left_near_fraction = near.narrow(1, 0, half).mean().item<double>();
  r.right_near_fraction = near.narrow(1, W - half, half).mean().item<double>();

  const double mass = m.sum().item<double>();
  r.sky_fraction = mass / static_cast<double>(H * W);
  if (mass > 0) {
    const auto rows = torch::arange(H, torch::kFloat64).view({H, 1}) /
                      std::max<int64_t>(H - 1, 1);
    r.sky_centroid_row = (m * rows).sum().item<double>() / mass;
  }
  const double effective_row =
      r.sky_centroid_row * std::min(1.0, r.sky_fraction / cfg.sky_fraction_target);

  const double clamp = cfg.max_step_deg;
  r.yaw_deg = std::clamp(cfg.turn_gain * (r.left_near_fraction - r.right_near_fraction),
                         -clamp, clamp);
  r.pitch_deg = std::clamp(cfg.pitch_gain * (cfg.horizon_row_target - effective_row),
                           -clamp, clamp);
  return r;
}

std::vector<CameraPose> autopilot_step(const RGBDImage& current,
                                       const torch::Tensor& sky_mask,
                                       const AutoPilotConfig& cfg) {
  std::vector<CameraPose> poses;
  poses.reserve(current.batch());
  for (int64_t b = 0; b < current.batch(); ++b) {
    const auto r = autopilot_reading(current.disparity[b], sky_mask[b], cfg);
    poses.push_back(euler_pose(deg_to_rad(r.yaw_deg), deg_to_rad(r.pitch_deg), 0.0,
                               Eigen::Vector3d(0, 0, cfg.forward_speed)));
  }
  return poses;
}

TrajectoryPlan sample_training_trajectory(int t_max_current, Rng& rng, int t_max) {
  if (t_max_current < 1 || t_max_current > t_max) {
    throw std::invalid_argument("sample_training_trajectory: t_max_current must lie in [1, " +
                                std::to_string(t_max) + "]");
  }
  const auto length = uniform_int(rng, 1, t_max_current);
  TrajectoryPlan plan;
  for (int64_t i = 0; i < length; ++i) plan.push_back(CameraPose::Identity(), Provenance::kAutopilot);
  return plan;
}

CameraPose pose_from_controls(double forward, double lateral, double yaw_deg,
                              double pitch_deg) {
  return euler_pose(deg_to_rad(yaw_deg), deg_to_rad(pitch_deg), 0.0,
                    Eigen::Vector3d(lateral, 0, forward));
}

std::string trajectory_to_json(const TrajectoryPlan& plan) {
  nlohmann::json doc;
  doc["poses"] = nlohmann::json::array();
  doc["provenance"] = nlohmann::json::array();
  for (size_t i = 0; i < plan.size(); ++i) {
    const Eigen::Matrix4d m = plan.steps[i].matrix();
    std::vector<double> flat;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) flat.push_back(m(r, c));
    doc["poses"].push_back(flat);
    doc["provenance"].push_back(std::string(to_string(plan.provenance[i])));
  }
  return doc.dump(2);
}

TrajectoryPlan trajectory_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("trajectory: malformed JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("poses") || !doc["poses"].is_array()) {
    throw std::invalid_argument("trajectory: missing \"poses\" array");
  }
  const auto& poses = doc["poses"];
  const bool tagged = doc.contains("provenance");
  if (tagged && (!doc["provenance"].is_array() || doc["provenance"].size() != poses.size())) {
    throw std::invalid_argument("trajectory: \"provenance\" must match \"poses\" in length");
  }
  TrajectoryPlan plan;
  for (size_t i = 0; i < poses.size(); ++i) {
    const auto& row = poses[i];
    if (!row.is_array() || row.size() != 16) {
      throw std::invalid_argument("trajectory: pose " + std::to_string(i) + " must have 16 numbers");
    }
    Eigen::Matrix4d m;
    for (int k = 0; k < 16; ++k) {
      if (!row[k].is_number()) throw std::invalid_argument("trajectory: non-numeric matrix entry");
      m(k / 4, k % 4) = row[k].get<double>();
    }
    Provenance tag = Provenance::kUser;
    if (tagged) {
      const auto& p = doc["provenance"][i];
      if (!p.is_string()) throw std::invalid_argument("trajectory: provenance tags must be strings");
      tag = provenance_from_string(p.get<std::string>());
    }
    plan.push_back(CameraPose::FromMatrix(m), tag);
  }
  plan.validate();
  return plan;
}

void write_trajectory(const std::filesystem::path& path, const TrajectoryPlan& plan) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << trajectory_to_json(plan) << "\n";
}

TrajectoryPlan read_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read trajectory file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return trajectory_from_json(ss.str());
}

}  // namespace pvg
