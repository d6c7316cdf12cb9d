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

#include "pvg/training.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>
#include <stdexcept>

namespace pvg {
namespace {

constexpr uint32_t kCyclicPhase = 1;
constexpr uint32_t kTrajectoryPhase = 2;

double global_norm(const std::vector<torch::Tensor>& params) {
  double sq = 0;
  for (const auto& p : params) {
    if (p.grad().defined()) sq += p.grad().pow(2).sum().item<double>();
  }
  return std::sqrt(sq);
}

std::unique_ptr<torch::optim::Adam> make_adam(const std::vector<torch::Tensor>& params,
                                              const OptimizerConfig& c) {
  return std::make_unique<torch::optim::Adam>(
      params, torch::optim::AdamOptions(c.lr).betas({c.beta1, c.beta2}).eps(c.eps));
}

void export_adam(const torch::optim::Adam& opt, const std::string& prefix, TensorMap& out) {
  const auto& params = opt.param_groups().at(0).params();
  for (size_t i = 0; i < params.size(); ++i) {
    const auto it = opt.state().find(params[i].unsafeGetTensorImpl());
    if (it == opt.state().end()) continue;
    const auto& s = static_cast<const torch::optim::AdamParamState&>(*it->second);
    const std::string key = prefix + std::to_string(i);
    out[key + ".step"] = torch::tensor({s.step()}, torch::kInt64);
    out[key + ".exp_avg"] = s.exp_avg().detach().clone();
    out[key + ".exp_avg_sq"] = s.exp_avg_sq().detach().clone();
  }
}

void import_adam(torch::optim::Adam& opt, const std::string& prefix, const TensorMap& in) {
  const auto& params = opt.param_groups().at(0).params();
  for (size_t i = 0; i < params.size(); ++i) {
    const std::string key = prefix + std::to_string(i);
    const auto step = in.find(key + ".step");
    if (step == in.end()) continue;
    const auto avg = in.find(key + ".exp_avg");
    const auto sq = in.find(key + ".exp_avg_sq");
    if (avg == in.end() || sq == in.end()) throw CheckpointError("checkpoint: incomplete optimizer state " + key);
    if (avg->second.sizes() != params[i].sizes()) throw CheckpointError("checkpoint: optimizer shape mismatch " + key);
    auto s = std::make_unique<torch::optim::AdamParamState>();
    s->step(step->second.item<int64_t>());
    s->exp_avg(avg->second.to(params[i].scalar_type()).clone());
    s->exp_avg_sq(sq->second.to(params[i].scalar_type()).clone());
    opt.state()[params[i].unsafeGetTensorImpl()] = std::move(s);
  }
}

bool finite(double v) { return std::isfinite(v); }

}  // namespace

void Schedule::validate() const {
  if (pretrain_steps < 0) throw std::invalid_argument("schedule: pretrain_steps must be >= 0");
  if (grow_interval < 1) throw std::invalid_argument("schedule: grow_interval must be >= 1");
  if (t_max < 1) throw std::invalid_argument("schedule: t_max must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("schedule: batch_size must be >= 1");
  if (total_steps < 0) throw std::invalid_argument("schedule: total_steps must be >= 0");
  if (!(clip_norm > 0)) throw std::invalid_argument("schedule: clip_norm must be > 0");
  if (!(ema_decay >= 0 && ema_decay < 1)) throw std::invalid_argument("schedule: ema_decay must lie in [0,1)");
}

int current_t_max(int64_t step, const Schedule& s) {
  if (step < 0) throw std::invalid_argument("current_t_max: step must be >= 0");
  if (step < s.pretrain_steps) return 0;
  const int64_t grown = 1 + (step - s.pretrain_steps) / s.grow_interval;
  return static_cast<int>(std::min<int64_t>(grown, s.t_max));
}

void OptimizerConfig::validate() const {
  if (!(lr > 0)) throw std::invalid_argument("optimizer: lr must be > 0");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) {
    throw std::invalid_argument("optimizer: betas must lie in [0,1)");
  }
  if (!(eps > 0)) throw std::invalid_argument("optimizer: eps must be > 0");
}

void TrainConfig::validate() const {
  schedule.validate();
  weights.validate();
  optimizer.validate();
  pose_sampler.validate();
  autopilot.validate();
  sky.validate();
  splat.validate();
  if (!(hfov_deg > 0 && hfov_deg < 180)) throw std::invalid_argument("train: hfov_deg must lie in (0,180)");
  if (schedule.t_max > kMaxTrajectoryLength) {
    throw std::invalid_argument("schedule: t_max must be <= " + std::to_string(kMaxTrajectoryLength));
  }
}

nlohmann::json TrainStepReport::to_json() const {
  nlohmann::json j = {{"step", step},
                      {"t_max_current", t_max_current},
                      {"sampled_T", sampled_T},
                      {"losses", losses},
                      {"grad_norms", grad_norms},
                      {"r1_applied", r1_applied}};
  if (!error.empty()) j["error"] = error;
  return j;
}

TrainingRollout training_rollout(const RefinerState& state, const RGBDImage& start, int steps,
                                 const TrainConfig& cfg, Rng& rng) {
  const auto k = CameraIntrinsics::FromFov(start.width(), start.height(), cfg.hfov_deg);
  const auto dtype = start.rgb.scalar_type();
  TrainingRollout out;
  RGBDImage cur = start;
  for (int t = 0; t < steps; ++t) {
    std::vector<CameraPose> poses;
    {
      torch::NoGradGuard guard;
      const auto frozen = cur.detach();
      poses = autopilot_step(frozen, sky_mask(frozen, cfg.sky), cfg.autopilot);
    }
    const auto w = warp(cur, poses, k, cfg.splat);
    cur = refine(state, w, randn(rng, {start.batch(), state.config.latent_dim}, dtype), false);
    out.frames.push_back(cur);
    out.poses.push_back(std::move(poses));
  }
  return out;
}

Trainer::Trainer(RefinerState state, TrainConfig cfg)
    : state_(std::move(state)), cfg_(std::move(cfg)), features_(default_features()) {
  cfg_.validate();
  opt_g_ = make_adam(state_.refiner_parameters(), cfg_.optimizer);
  opt_d_ = make_adam(state_.discriminator_parameters(), cfg_.optimizer);
}

CameraIntrinsics Trainer::intrinsics(int64_t size) const {
  return CameraIntrinsics::FromFov(static_cast<int>(size), static_cast<int>(size), cfg_.hfov_deg);
}

Rng Trainer::step_rng(uint32_t phase) const {
  const auto s = static_cast<uint64_t>(state_.step_counter);
  std::seed_seq seq{static_cast<uint32_t>(cfg_.seed), static_cast<uint32_t>(cfg_.seed >> 32),
                    static_cast<uint32_t>(s), static_cast<uint32_t>(s >> 32), phase};
  return Rng(seq);
}

torch::Tensor Trainer::generator_adv(const RGBDImage& fake) {
  auto params = state_.discriminator_parameters();
  for (auto& p : params) p.set_requires_grad(false);
  auto logits = discriminate(state_, fake);
  for (auto& p : params) p.set_requires_grad(true);
  return generator_adv_loss(logits);
}

torch::Tensor Trainer::discriminator_terms(const RGBDImage& real, const RGBDImage& fake,
                                           TrainStepReport& report, bool with_r1,
                                           const std::string& prefix) {
  auto d_loss = discriminator_adv_loss(discriminate(state_, real), discriminate(state_, fake.detach()));
  report.losses[prefix + "d_adv"] = d_loss.item<double>();
  if (with_r1) {
    const auto r1 = r1_penalty(state_, real.detach());
    report.losses[prefix + "r1"] = r1.item<double>();
    d_loss = d_loss + cfg_.weights.lambda2 * static_cast<double>(cfg_.weights.lazy_interval) * r1;
    report.r1_applied = true;
  }
  return d_loss;
}

void Trainer::apply(Update& u, TrainStepReport& report) {
  for (const auto& [name, value] : report.losses) {
    if (!finite(value)) {
      report.error = "non-finite loss '" + name + "' at step " + std::to_string(report.step) + "; update skipped";
      return;
    }
  }
  const double clip = cfg_.schedule.clip_norm;
  const auto g_params = state_.refiner_parameters();
  opt_g_->zero_grad();
  u.g_loss.backward();
  report.grad_norms["refiner"] = global_norm(g_params);
  torch::nn::utils::clip_grad_norm_(g_params, clip);
  report.grad_norms["refiner_clipped"] = global_norm(g_params);

  const auto d_params = state_.discriminator_parameters();
  opt_d_->zero_grad();
  u.d_loss.backward();
  report.grad_norms["discriminator"] = global_norm(d_params);
  torch::nn::utils::clip_grad_norm_(d_params, clip);
  report.grad_norms["discriminator_clipped"] = global_norm(d_params);

  if (!finite(report.grad_norms["refiner"]) || !finite(report.grad_norms["discriminator"])) {
    opt_g_->zero_grad();
    opt_d_->zero_grad();
    report.error = "non-finite gradient at step " + std::to_string(report.step) + "; update skipped";
    return;
  }
  opt_g_->step();
  opt_d_->step();
  ema_update(state_, cfg_.schedule.ema_decay);
}

TrainStepReport Trainer::cyclic_step(const RGBDImage& batch_in) {
  batch_in.validate();
  const auto dtype = state_.refiner_parameters().front().scalar_type();
  const auto real = batch_in.to(dtype).detach();
  const int64_t B = real.batch();

  TrainStepReport report;
  report.step = state_.step_counter;
  report.t_max_current = current_t_max(report.step, cfg_.schedule);
  report.sampled_T = 0;

  Rng rng = step_rng(kCyclicPhase);
  std::vector<CameraPose> poses;
  for (int64_t i = 0; i < B; ++i) poses.push_back(sample_virtual_pose(cfg_.pose_sampler, rng));
  const auto cycled = cycle_warp(real, poses, intrinsics(real.height()), cfg_.splat);
  const auto pred = refine(state_, cycled, randn(rng, {B, state_.config.latent_dim}, dtype), false);

  const auto rec = reconstruction_loss(pred, real, *features_);
  const auto g_adv = generator_adv(pred);
  report.losses["rec"] = rec.item<double>();
  report.losses["g_adv"] = g_adv.item<double>();

  Update u;
  u.g_loss = cfg_.weights.lambda1_start * rec + g_adv;
  u.d_loss = discriminator_terms(real, pred, report, r1_due(report.step, cfg_.weights.lazy_interval), "");
  apply(u, report);

  if (report.ok() && observer_) {
    DiscriminatorBatch b;
    b.step = report.step;
    b.phase = "cyclic";
    b.real = real.rgbd();
    b.fake_source = real.rgbd();
    b.num_fakes = B;
    b.lengths.assign(static_cast<size_t>(B), 0);
    b.r1_applied = report.r1_applied;
    observer_(b);
  }
  return report;
}

TrainStepReport Trainer::trajectory_step(const RGBDImage& batch_in, int t_max_current) {
  if (t_max_current < 1 || t_max_current > cfg_.schedule.t_max) {
    throw std::invalid_argument("trajectory_step: t_max_current must lie in [1, " +
                                std::to_string(cfg_.schedule.t_max) + "]");
  }
  batch_in.validate();
  const auto dtype = state_.refiner_parameters().front().scalar_type();
  const auto real = batch_in.to(dtype).detach();
  const int64_t B = real.batch();

  TrainStepReport report;
  report.step = state_.step_counter;
  report.t_max_current = t_max_current;

  Rng rng = step_rng(kTrajectoryPhase);
  std::vector<int> lengths;
  for (int64_t i = 0; i < B; ++i) {
    lengths.push_back(static_cast<int>(sample_training_trajectory(t_max_current, rng, cfg_.schedule.t_max).size()));
  }
  const int longest = *std::max_element(lengths.begin(), lengths.end());
  report.sampled_T = longest;

  const auto roll = training_rollout(state_, real, longest, cfg_, rng);
  std::vector<RGBDImage> finals;
  for (int64_t i = 0; i < B; ++i) finals.push_back(roll.frames[lengths[i] - 1].item(i));
  const auto fake = RGBDImage::Stack(finals);
  const auto g_adv = generator_adv(fake);

  // Predicted frames act as their own ground truth under a fresh cycle.
  const auto k = intrinsics(real.height());
  torch::Tensor pseudo = torch::zeros({}, real.rgb.options());
  for (const auto& frame : roll.frames) {
    const auto target = frame.detach();
    std::vector<CameraPose> poses;
    for (int64_t i = 0; i < B; ++i) poses.push_back(sample_virtual_pose(cfg_.pose_sampler, rng));
    const auto cycled = cycle_warp(target, poses, k, cfg_.splat);
    const auto pred = refine(state_, cycled, randn(rng, {B, state_.config.latent_dim}, dtype), false);
    pseudo = pseudo + reconstruction_loss(pred, target, *features_);
  }
  pseudo = pseudo / static_cast<double>(roll.frames.size());
  report.losses["traj_g_adv"] = g_adv.item<double>();
  report.losses["traj_rec"] = pseudo.item<double>();

  Update u;
  u.g_loss = g_adv + cfg_.weights.lambda1_traj * pseudo;
  u.d_loss = discriminator_terms(real, fake, report, false, "traj_");
  apply(u, report);

  if (report.ok() && observer_) {
    DiscriminatorBatch b;
    b.step = report.step;
    b.phase = "trajectory";
    b.real = real.rgbd();
    b.fake_source = real.rgbd();
    b.num_fakes = fake.batch();
    b.lengths = lengths;
    b.r1_applied = false;
    observer_(b);
  }
  return report;
}

TrainStepReport Trainer::iterate(const Dataset& data) {
  const int64_t step = state_.step_counter;
  const auto batch = data.batch(step, cfg_.schedule.batch_size);
  TrainStepReport merged = cyclic_step(batch);
  const int t = current_t_max(step, cfg_.schedule);
  if (t > 0) {
    const auto traj = trajectory_step(batch, t);
    merged.sampled_T = traj.sampled_T;
    for (const auto& [k, v] : traj.losses) merged.losses[k] = v;
    for (const auto& [k, v] : traj.grad_norms) merged.grad_norms["traj_" + k] = v;
    if (merged.error.empty()) merged.error = traj.error;
  }
  merged.t_max_current = t;
  ++state_.step_counter;
  return merged;
}

Checkpoint Trainer::to_checkpoint() const {
  auto c = checkpoint_from_state(state_);
  export_adam(*opt_g_, "optim.refiner.", c.tensors);
  export_adam(*opt_d_, "optim.discriminator.", c.tensors);
  c.metadata["t_max_current"] = current_t_max(state_.step_counter, cfg_.schedule);
  c.metadata["seed"] = cfg_.seed;
  return c;
}

Trainer Trainer::FromCheckpoint(const Checkpoint& ckpt, TrainConfig cfg) {
  Trainer t(state_from_checkpoint(ckpt), std::move(cfg));
  import_adam(*t.opt_g_, "optim.refiner.", ckpt.tensors);
  import_adam(*t.opt_d_, "optim.discriminator.", ckpt.tensors);
  return t;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, int64_t step) {
  std::ostringstream name;
  name << "step_" << std::setw(8) << std::setfill('0') << step << ".ckpt";
  return dir / name.str();
}

std::filesystem::path latest_checkpoint(const std::filesystem::path& dir) {
  std::filesystem::path best;
  if (!std::filesystem::is_directory(dir)) return best;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("step_", 0) == 0 && e.path().extension() == ".ckpt" && (best.empty() || e.path() > best)) {
      best = e.path();
    }
  }
  return best;
}

std::vector<TrainStepReport> train(Trainer& trainer, const Dataset& data, const TrainRunOptions& opts) {
  if (data.size() == 0) throw std::invalid_argument("train: dataset is empty");
  std::vector<TrainStepReport> log;
  auto save = [&] {
    auto ckpt = trainer.to_checkpoint();
    for (const auto& [k, v] : opts.checkpoint_metadata.items()) ckpt.metadata[k] = v;
    write_checkpoint(checkpoint_path(opts.checkpoint_dir, trainer.step()), ckpt);
  };
  while (trainer.step() < opts.until_step) {
    auto report = trainer.iterate(data);
    if (opts.on_report) opts.on_report(report);
    log.push_back(std::move(report));
    if (opts.checkpoint_every > 0 && !opts.checkpoint_dir.empty() && trainer.step() % opts.checkpoint_every == 0) {
      save();
    }
  }
  if (!opts.checkpoint_dir.empty()) save();
  return log;
}

}  // namespace pvg
