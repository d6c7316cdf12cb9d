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

#include "pvg/generation.hpp"

#include <stdexcept>

namespace pvg {

void GenerationConfig::validate() const {
  if (!(hfov_deg > 0 && hfov_deg < 180)) throw std::invalid_argument("generation: hfov_deg must lie in (0,180)");
  if (canvas_widen < 1) throw std::invalid_argument("generation: canvas_widen must be >= 1");
  sky.validate();
  autopilot.validate();
  splat.validate();
}

ViewGenerator::ViewGenerator(std::shared_ptr<const RefinerState> model, const RGBDImage& start,
                             GenerationConfig cfg, uint64_t seed)
    : model_(std::move(model)), cfg_(std::move(cfg)), rng_(seed) {
  if (!model_) throw std::invalid_argument("ViewGenerator: no model");
  cfg_.validate();
  start.validate();
  if (start.batch() != 1) throw std::invalid_argument("ViewGenerator: expects a single starting image");
  if (start.height() != model_->config.image_size || start.width() != model_->config.image_size) {
    throw std::invalid_argument("ViewGenerator: starting image must be " + std::to_string(model_->config.image_size) +
                                "x" + std::to_string(model_->config.image_size));
  }
  const auto dtype = model_->refiner->parameters().front().scalar_type();
  current_ = start.to(dtype).detach();
  k_ = CameraIntrinsics::FromFov(static_cast<int>(start.width()), static_cast<int>(start.height()), cfg_.hfov_deg);
  if (cfg_.sky_correction) {
    canvas_ = SkyCanvas::Create(current_, sky_mask(current_, cfg_.sky), k_, cfg_.canvas_widen);
  }
}

CameraPose ViewGenerator::autopilot_pose() const {
  torch::NoGradGuard guard;
  return autopilot_step(current_, sky_mask(current_, cfg_.sky), cfg_.autopilot).front();
}

const RGBDImage& ViewGenerator::step(const CameraPose& relative, Provenance tag) {
  if (!is_valid_pose(relative)) throw std::invalid_argument("ViewGenerator: invalid relative pose");
  torch::NoGradGuard guard;
  const auto dtype = current_.rgb.scalar_type();
  const auto warped = warp(current_, relative, k_, cfg_.splat);
  auto refined = refine(*model_, warped, randn(rng_, {1, model_->config.latent_dim}, dtype), true);
  pose_ = compose(pose_, relative);
  if (cfg_.sky_correction) {
    auto corrected = correct_sky(refined, pose_.rotation, canvas_, k_, cfg_.sky);
    refined = std::move(corrected.image);
    canvas_ = std::move(corrected.canvas);
  }
  current_ = refined;
  history_.push_back(relative, tag);
  return current_;
}

const RGBDImage& ViewGenerator::step_autopilot() { return step(autopilot_pose(), Provenance::kAutopilot); }

GeneratedSequence generate_autopilot(std::shared_ptr<const RefinerState> model, const RGBDImage& start,
                                     int steps, const GenerationConfig& cfg, uint64_t seed) {
  if (steps < 0) throw std::invalid_argument("generate: steps must be >= 0");
  ViewGenerator gen(std::move(model), start, cfg, seed);
  GeneratedSequence out;
  for (int i = 0; i < steps; ++i) out.frames.push_back(gen.step_autopilot());
  out.plan = gen.history();
  return out;
}

GeneratedSequence generate_along(std::shared_ptr<const RefinerState> model, const RGBDImage& start,
                                 const TrajectoryPlan& plan, const GenerationConfig& cfg, uint64_t seed) {
  plan.validate();
  ViewGenerator gen(std::move(model), start, cfg, seed);
  GeneratedSequence out;
  for (size_t i = 0; i < plan.size(); ++i) {
    out.frames.push_back(gen.step(plan.steps[i], plan.provenance[i]));
  }
  out.plan = gen.history();
  return out;
}

}  // namespace pvg
