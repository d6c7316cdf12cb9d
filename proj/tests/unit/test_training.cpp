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

#include "pvg_doctest.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "pvg/training.hpp"
#include "test_util.hpp"

using namespace pvg;

namespace {

constexpr int64_t kSize = 32;

RefinerState small_state(uint64_t seed = 1) {
  return RefinerState::Create(RefinerConfig::ForImageSize(kSize, 8, 16), seed);
}

TrainConfig small_config() {
  TrainConfig c;
  c.schedule.batch_size = 2;
  c.schedule.pretrain_steps = 4;
  c.schedule.grow_interval = 4;
  c.schedule.t_max = 3;
  c.seed = 5;
  return c;
}

const Dataset& small_dataset() {
  static const Dataset data = [] {
    std::vector<RGBDImage> items;
    for (auto& it : synthetic_collection(6, kSize, 3)) items.push_back(it.image);
    return Dataset(items, 0);
  }();
  return data;
}

bool same_parameters(const torch::nn::Module& a, const torch::nn::Module& b) {
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  for (size_t i = 0; i < pa.size(); ++i) {
    if (!torch::equal(pa[i], pb[i])) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("trajectory length schedule") {
  Schedule full;
  full.pretrain_steps = 200000;
  full.grow_interval = 25000;
  full.t_max = 10;
  CHECK(current_t_max(199999, full) == 0);
  CHECK(current_t_max(200000, full) == 1);
  CHECK(current_t_max(250000, full) == 3);
  CHECK(current_t_max(full.pretrain_steps + full.grow_interval * (full.t_max + 5), full) == full.t_max);

  Schedule desk;
  desk.pretrain_steps = 2000;
  desk.grow_interval = 250;
  desk.t_max = 6;
  CHECK(current_t_max(2600, desk) == 3);
  CHECK(current_t_max(desk.pretrain_steps + desk.grow_interval * (desk.t_max + 5), desk) == 6);

  int previous = 0;
  for (int64_t s = 0; s < 5000; s += 7) {
    const int t = current_t_max(s, desk);
    CHECK(t >= previous);
    CHECK(t <= desk.t_max);
    previous = t;
  }
  CHECK_THROWS_AS(current_t_max(-1, desk), std::invalid_argument);
  desk.grow_interval = 0;
  CHECK_THROWS_AS(desk.validate(), std::invalid_argument);
}

TEST_CASE("defaults") {
  const TrainConfig c;
  CHECK(c.optimizer.lr == 2e-3);
  CHECK(c.optimizer.beta1 == 0.0);
  CHECK(c.optimizer.beta2 == 0.99);
  CHECK(c.schedule.clip_norm == 10.0);
  CHECK(c.schedule.ema_decay == 0.999);
  CHECK(c.schedule.t_max == 10);
}

TEST_CASE("cyclic step with identity poses starts at the reconstruction floor") {
  auto cfg = small_config();
  cfg.pose_sampler.max_translation.setZero();
  cfg.pose_sampler.max_rotation_deg.setZero();
  Trainer trainer(small_state(), cfg);
  const auto batch = small_dataset().batch(0, 2);
  const auto report = trainer.cyclic_step(batch);
  CHECK(report.ok());
  CHECK(report.sampled_T == 0);
  // Only the refiner's disparity floor separates output from input.
  const double floor = (batch.disparity.clamp_min(1e-3) - batch.disparity).mean().item<double>();
  CHECK(floor > 0);
  CHECK(std::abs(report.losses.at("rec") - floor) < 1e-5);
  CHECK(report.r1_applied);
  CHECK(trainer.step() == 0);
}

TEST_CASE("identical seeds give identical loss sequences") {
  auto run = [] {
    Trainer trainer(small_state(), small_config());
    std::vector<double> losses;
    for (int i = 0; i < 10; ++i) {
      const auto r = trainer.iterate(small_dataset());
      for (const auto& [k, v] : r.losses) losses.push_back(v);
    }
    return losses;
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.size() > 20);
  CHECK(a == b);
}

TEST_CASE("balanced sampling, lazy R1 and progressive growing over 50 steps") {
  auto cfg = small_config();
  cfg.schedule.pretrain_steps = 10;
  cfg.schedule.grow_interval = 10;
  Trainer trainer(small_state(), cfg);
  const auto& data = small_dataset();
  std::set<int64_t> r1_steps;
  int trajectory_updates = 0;
  bool balanced = true;
  trainer.set_observer([&](const DiscriminatorBatch& b) {
    balanced = balanced && b.num_fakes == b.real.size(0) && torch::equal(b.real, b.fake_source);
    const auto expected = data.batch(b.step, cfg.schedule.batch_size).rgbd().to(b.real.scalar_type());
    balanced = balanced && torch::equal(b.real, expected);
    if (b.r1_applied) r1_steps.insert(b.step);
    if (b.phase == "trajectory") {
      ++trajectory_updates;
      for (int len : b.lengths) balanced = balanced && len >= 1 && len <= current_t_max(b.step, cfg.schedule);
    }
  });
  int previous_t = 0;
  for (int i = 0; i < 50; ++i) {
    const auto r = trainer.iterate(data);
    REQUIRE(r.ok());
    CHECK(r.sampled_T <= r.t_max_current);
    CHECK(r.t_max_current >= previous_t);
    previous_t = r.t_max_current;
    CHECK(r.grad_norms.at("refiner_clipped") <= cfg.schedule.clip_norm + 1e-6);
  }
  CHECK(balanced);
  CHECK(trajectory_updates == 40);
  CHECK(r1_steps == std::set<int64_t>{0, 16, 32, 48});
  CHECK(trainer.step() == 50);
}

TEST_CASE("trajectory step of length one") {
  Trainer trainer(small_state(), small_config());
  std::vector<int> lengths;
  trainer.set_observer([&](const DiscriminatorBatch& b) { lengths = b.lengths; });
  const auto r = trainer.trajectory_step(small_dataset().batch(0, 2), 1);
  CHECK(r.ok());
  CHECK(r.sampled_T == 1);
  CHECK(lengths == std::vector<int>{1, 1});
  CHECK_THROWS_AS(trainer.trajectory_step(small_dataset().batch(0, 2), 0), std::invalid_argument);
  CHECK_THROWS_AS(trainer.trajectory_step(small_dataset().batch(0, 2), 4), std::invalid_argument);
}

TEST_CASE("final adversarial loss reaches the first rollout step") {
  auto state = small_state();
  const auto cfg = small_config();
  Rng rng(3);
  const auto start = small_dataset().batch(0, 2);
  const auto roll = training_rollout(state, start, 3, cfg, rng);
  REQUIRE(roll.frames.size() == 3);
  roll.frames[0].rgb.retain_grad();
  generator_adv_loss(discriminate(state, roll.frames[2])).backward();
  REQUIRE(roll.frames[0].rgb.grad().defined());
  CHECK(roll.frames[0].rgb.grad().abs().sum().item<double>() > 0);
  // The first application of F receives gradient from the final comparison.
  double total = 0;
  for (const auto& p : state.refiner_parameters()) {
    if (p.grad().defined()) total += p.grad().abs().sum().item<double>();
  }
  CHECK(total > 0);
}

TEST_CASE("clipping bounds the applied gradient") {
  auto cfg = small_config();
  cfg.schedule.clip_norm = 1e-3;
  Trainer trainer(small_state(), cfg);
  const auto r = trainer.cyclic_step(small_dataset().batch(0, 2));
  REQUIRE(r.ok());
  CHECK(r.grad_norms.at("refiner") > 1e-3);
  CHECK(r.grad_norms.at("refiner_clipped") <= 1e-3 + 1e-6);
  CHECK(r.grad_norms.at("discriminator_clipped") <= 1e-3 + 1e-6);
}

TEST_CASE("non-finite losses skip the update") {
  auto state = small_state();
  {
    torch::NoGradGuard g;
    state.refiner->synthesis->head->weight.fill_(std::nan(""));
  }
  Trainer trainer(std::move(state), small_config());
  const auto before = trainer.state().discriminator_parameters().front().clone();
  const auto r = trainer.cyclic_step(small_dataset().batch(0, 2));
  CHECK_FALSE(r.ok());
  CHECK(r.error.find("non-finite") != std::string::npos);
  CHECK(torch::equal(before, trainer.state().discriminator_parameters().front()));
}

TEST_CASE("checkpoint resume is bit identical") {
  const auto& data = small_dataset();
  Trainer straight(small_state(), small_config());
  for (int i = 0; i < 6; ++i) straight.iterate(data);

  test::TempDir dir("ckpt");
  Trainer first(small_state(), small_config());
  for (int i = 0; i < 3; ++i) first.iterate(data);
  write_checkpoint(dir.path() / "a.ckpt", first.to_checkpoint());
  const auto ckpt = read_checkpoint(dir.path() / "a.ckpt");
  CHECK(ckpt.step_counter == 3);
  CHECK(ckpt.metadata.at("t_max_current").get<int>() == current_t_max(3, small_config().schedule));
  auto resumed = Trainer::FromCheckpoint(ckpt, small_config());
  CHECK(resumed.step() == 3);
  for (int i = 0; i < 3; ++i) resumed.iterate(data);
  CHECK(same_parameters(*resumed.state().refiner, *straight.state().refiner));
  CHECK(same_parameters(*resumed.state().ema, *straight.state().ema));
  CHECK(same_parameters(*resumed.state().discriminator, *straight.state().discriminator));
}

TEST_CASE("checkpoint format errors") {
  test::TempDir dir("ckpt_bad");
  const auto good = dir.path() / "good.ckpt";
  write_checkpoint(good, checkpoint_from_state(small_state()));
  const auto state = state_from_checkpoint(read_checkpoint(good));
  CHECK(same_parameters(*state.refiner, *small_state().refiner));

  std::ofstream(dir.path() / "junk.ckpt") << "definitely not a checkpoint";
  CHECK_THROWS_AS(read_checkpoint(dir.path() / "junk.ckpt"), CheckpointError);
  CHECK_THROWS_AS(read_checkpoint(dir.path() / "missing.ckpt"), CheckpointError);

  // Bump the version field.
  std::fstream f(good, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(8);
  const uint32_t v = 99;
  f.write(reinterpret_cast<const char*>(&v), sizeof(v));
  f.close();
  try {
    read_checkpoint(good);
    FAIL("expected a version error");
  } catch (const CheckpointError& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }
}

TEST_CASE("train loop writes checkpoints and one report per step") {
  test::TempDir dir("train");
  Trainer trainer(small_state(), small_config());
  TrainRunOptions opts;
  opts.until_step = 6;
  opts.checkpoint_every = 3;
  opts.checkpoint_dir = dir.path();
  int seen = 0;
  opts.on_report = [&](const TrainStepReport& r) { CHECK(r.step == seen++); };
  const auto log = train(trainer, small_dataset(), opts);
  CHECK(log.size() == 6);
  CHECK(std::filesystem::exists(checkpoint_path(dir.path(), 3)));
  CHECK(latest_checkpoint(dir.path()) == checkpoint_path(dir.path(), 6));
  CHECK(log.back().to_json().at("step") == 5);
}
