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
#include <memory>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "pvg/core.hpp"
#include "pvg/model.hpp"
#include "pvg/renderer.hpp"
#include "pvg/rng.hpp"
#include "pvg/sky.hpp"
#include "pvg/trajectory.hpp"

namespace pvg {

struct GenerationConfig {
  bool sky_correction = true;
  double hfov_deg = 60.0;
  double canvas_widen = 1.5;
  SkyMaskConfig sky;
  AutoPilotConfig autopilot;
  SplatConfig splat;

  void validate() const;
};

// Render-refine-repeat from one starting image with the EMA refiner. The model
// is shared and never modified; each generator owns its frame, pose, sky
// canvas and noise stream.
class ViewGenerator {
 public:
  ViewGenerator(std::shared_ptr<const RefinerState> model, const RGBDImage& start,
                GenerationConfig cfg, uint64_t seed);

  const RGBDImage& current() const { return current_; }
  const CameraPose& cumulative_pose() const { return pose_; }
  int64_t step_index() const { return static_cast<int64_t>(history_.size()); }
  const TrajectoryPlan& history() const { return history_; }
  const SkyCanvas& canvas() const { return canvas_; }
  const CameraIntrinsics& intrinsics() const { return k_; }

  // Pose the auto-pilot would choose from the current frame.
  CameraPose autopilot_pose() const;

  const RGBDImage& step(const CameraPose& relative, Provenance tag = Provenance::kUser);
  const RGBDImage& step_autopilot();

 private:
  std::shared_ptr<const RefinerState> model_;
  GenerationConfig cfg_;
  CameraIntrinsics k_;
  Rng rng_;
  RGBDImage current_;
  CameraPose pose_ = CameraPose::Identity();
  SkyCanvas canvas_;
  TrajectoryPlan history_;
};

struct GeneratedSequence {
  std::vector<RGBDImage> frames;  // frames[i] after i + 1 steps
  TrajectoryPlan plan;
};

GeneratedSequence generate_autopilot(std::shared_ptr<const RefinerState> model, const RGBDImage& start,
                                     int steps, const GenerationConfig& cfg, uint64_t seed);
GeneratedSequence generate_along(std::shared_ptr<const RefinerState> model, const RGBDImage& start,
                                 const TrajectoryPlan& plan, const GenerationConfig& cfg, uint64_t seed);

}  // namespace pvg
