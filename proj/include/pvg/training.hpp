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
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "pvg/checkpoint.hpp"
#include "pvg/data.hpp"
#include "pvg/losses.hpp"
#include "pvg/model.hpp"
#include "pvg/renderer.hpp"
#include "pvg/sky.hpp"
#include "pvg/trajectory.hpp"

namespace pvg {

struct Schedule {
  int64_t pretrain_steps = 2000;
  int64_t grow_interval = 250;
  int t_max = kMaxTrajectoryLength;
  int64_t batch_size = 4;
  int64_t total_steps = 4000;
  double clip_norm = 10.0;
  double ema_decay = 0.999;

  void validate() const;
};

// 0 while pretraining, then 1 + (step - pretrain) / grow_interval, capped at t_max.
int current_t_max(int64_t step, const Schedule& s);

struct OptimizerConfig {
  double lr = 2e-3;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double eps = 1e-8;

  void validate() const;
};

struct TrainConfig {
  Schedule schedule;
  LossWeights weights;
  OptimizerConfig optimizer;
  PoseSamplerConfig pose_sampler;
  AutoPilotConfig autopilot;
  SkyMaskConfig sky;
  SplatConfig splat;
  double hfov_deg = 60.0;
  uint64_t seed = 0;

  void validate() const;
};

struct TrainStepReport {
  int64_t step = 0;
  int t_max_current = 0;
  int sampled_T = 0;
  std::map<std::string, double> losses;
  std::map<std::string, double> grad_norms;
  bool r1_applied = false;
  std::string error;

  bool ok() const { return error.empty(); }
  nlohmann::json to_json() const;
};

// What the discriminator saw in one update; rows of `real` and `fake_source`
// are index-aligned.
struct DiscriminatorBatch {
  int64_t step = 0;
  std::string phase;          // "cyclic" or "trajectory"
  torch::Tensor real;         // [B,4,H,W]
  torch::Tensor fake_source;  // [B,4,H,W] image each fake was generated from
  int64_t num_fakes = 0;
  std::vector<int> lengths;   // render-refine applications behind each fake
  bool r1_applied = false;
};
using DiscriminatorObserver = std::function<void(const DiscriminatorBatch&)>;

struct TrainingRollout {
  std::vector<RGBDImage> frames;                 // frames[t] after t+1 steps
  std::vector<std::vector<CameraPose>> poses;    // relative pose per step and item
};

// Differentiable render-refine-repeat along auto-pilot poses with the live refiner.
TrainingRollout training_rollout(const RefinerState& state, const RGBDImage& start, int steps,
                                 const TrainConfig& cfg, Rng& rng);

class Trainer {
 public:
  Trainer(RefinerState state, TrainConfig cfg);

  // Both read the step index from state().step_counter and leave it unchanged.
  TrainStepReport cyclic_step(const RGBDImage& batch);
  TrainStepReport trajectory_step(const RGBDImage& batch, int t_max_current);

  // One schedule iteration on the dataset batch for the current step; the
  // returned report merges the cyclic and trajectory phases. Increments the
  // step counter.
  TrainStepReport iterate(const Dataset& data);

  void set_observer(DiscriminatorObserver observer) { observer_ = std::move(observer); }

  RefinerState& state() { return state_; }
  const RefinerState& state() const { return state_; }
  const TrainConfig& config() const { return cfg_; }
  int64_t step() const { return state_.step_counter; }
  CameraIntrinsics intrinsics(int64_t size) const;

  // Model, EMA, discriminator and optimizer moments.
  Checkpoint to_checkpoint() const;
  static Trainer FromCheckpoint(const Checkpoint& ckpt, TrainConfig cfg);

 private:
  struct Update {
    torch::Tensor g_loss;
    torch::Tensor d_loss;
  };
  Rng step_rng(uint32_t phase) const;
  void apply(Update& u, TrainStepReport& report);
  torch::Tensor generator_adv(const RGBDImage& fake);
  torch::Tensor discriminator_terms(const RGBDImage& real, const RGBDImage& fake, TrainStepReport& report,
                                    bool with_r1, const std::string& prefix);

  RefinerState state_;
  TrainConfig cfg_;
  std::unique_ptr<torch::optim::Adam> opt_g_;
  std::unique_ptr<torch::optim::Adam> opt_d_;
  std::shared_ptr<const FeatureExtractor> features_;
  DiscriminatorObserver observer_;
};

struct TrainRunOptions {
  int64_t until_step = 0;
  int64_t checkpoint_every = 0;
  std::filesystem::path checkpoint_dir;
  nlohmann::json checkpoint_metadata = nlohmann::json::object();
  std::function<void(const TrainStepReport&)> on_report;
};

// Iterates until state().step_counter == until_step. A report with an error
// does not stop the run; the update is skipped and the next step proceeds.
std::vector<TrainStepReport> train(Trainer& trainer, const Dataset& data, const TrainRunOptions& opts);

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, int64_t step);
std::filesystem::path latest_checkpoint(const std::filesystem::path& dir);

}  // namespace pvg
