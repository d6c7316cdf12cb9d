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

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <torch/torch.h>

#include "pvg/core.hpp"
#include "pvg/rng.hpp"

namespace pvg {

// Upper bound on rollout length during training.
inline constexpr int kMaxTrajectoryLength = 10;

struct PoseSamplerConfig {
  // Per-axis bounds; the sampled component is uniform in [-bound, +bound].
  Eigen::Vector3d max_translation{0.05, 0.05, 0.1};
  // Euler bounds in degrees about x (pitch), y (yaw) and z (roll).
  Eigen::Vector3d max_rotation_deg{2.0, 2.0, 1.0};

  void validate() const;
};

struct AutoPilotConfig {
  double forward_speed = 0.05;
  // Sky fraction below which the sky centroid is pulled toward the top row.
  double sky_fraction_target = 0.2;
  double near_threshold = 0.5;
  // Degrees of yaw per unit difference in left/right obstacle fraction.
  double turn_gain = 20.0;
  // Degrees of pitch per unit of normalised row error.
  double pitch_gain = 20.0;
  double horizon_row_target = 0.3;
  double max_step_deg = 5.0;

  void validate() const;
};

CameraPose sample_virtual_pose(const PoseSamplerConfig& cfg, Rng& rng);

// Steering quantities the auto-pilot derives from one frame.
struct AutoPilotReading {
  double left_near_fraction = 0;
  double right_near_fraction = 0;
  double sky_fraction = 0;
  double sky_centroid_row = 0;  // normalised to [0,1], 0 = top row
  double yaw_deg = 0;
  double pitch_deg = 0;
};

AutoPilotReading autopilot_reading(const torch::Tensor& disparity,
                                   const torch::Tensor& sky_mask,
                                   const AutoPilotConfig& cfg);

// Next relative pose: forward by forward_speed, yawing away from the half of
// the image with more near obstacles and pitching so the sky centroid moves
// toward horizon_row_target. One pose per batch item.
std::vector<CameraPose> autopilot_step(const RGBDImage& current,
                                       const torch::Tensor& sky_mask,
                                       const AutoPilotConfig& cfg);

// Length uniform in {1..t_max_current}; steps are identity placeholders tagged
// autopilot, filled in with realised poses during the rollout.
TrajectoryPlan sample_training_trajectory(int t_max_current, Rng& rng,
                                          int t_max = kMaxTrajectoryLength);

// Relative pose for user control deltas (angles in degrees).
CameraPose pose_from_controls(double forward, double lateral, double yaw_deg,
                              double pitch_deg);

// JSON document: {"poses": [[16 row-major numbers], ...],
//                 "provenance": ["cyclic"|"autopilot"|"user", ...]}
std::string trajectory_to_json(const TrajectoryPlan& plan);
TrajectoryPlan trajectory_from_json(const std::string& text);
void write_trajectory(const std::filesystem::path& path, const TrajectoryPlan& plan);
TrajectoryPlan read_trajectory(const std::filesystem::path& path);

}  // namespace pvg
