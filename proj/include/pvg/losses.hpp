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
#include <memory>
#include <vector>

#include <torch/torch.h>

#include "pvg/image.hpp"
#include "pvg/model.hpp"

namespace pvg {

// phi^l: per-scale feature maps of an rgb batch.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<torch::Tensor> operator()(const torch::Tensor& rgb) const = 0;
};

// Level 0 is the image itself; each further level is a binomial blur followed
// by 2x decimation of the previous one.
class PyramidFeatures final : public FeatureExtractor {
 public:
  explicit PyramidFeatures(int levels = 3);
  std::vector<torch::Tensor> operator()(const torch::Tensor& rgb) const override;
  int levels() const { return levels_; }

 private:
  int levels_;
};

std::shared_ptr<const FeatureExtractor> default_features();

// Blur-and-decimate step used by the pyramid.
torch::Tensor blur_downsample(const torch::Tensor& x);

struct LossWeights {
  double lambda1_start = 1.0;   // reconstruction at the starting view
  double lambda1_traj = 0.05;   // reconstruction on trajectory frames
  double lambda2 = 0.15;        // R1
  int64_t lazy_interval = 16;

  void validate() const;
};

// sum_l mean|phi^l(pred) - phi^l(target)| + mean|pred.d - target.d|
torch::Tensor reconstruction_loss(const RGBDImage& pred, const RGBDImage& target,
                                  const FeatureExtractor& features);

// Non-saturating GAN terms, averaged over the batch.
torch::Tensor generator_adv_loss(const torch::Tensor& fake_logit);
torch::Tensor discriminator_adv_loss(const torch::Tensor& real_logit,
                                     const torch::Tensor& fake_logit);
double generator_adv_loss(double fake_logit);
double discriminator_adv_loss(double real_logit, double fake_logit);
double softplus(double x);

// Mean over the batch of |d logit / d input|^2 at `real`.
torch::Tensor r1_penalty(const std::function<torch::Tensor(const torch::Tensor&)>& logits,
                         const torch::Tensor& real, bool create_graph = true);
torch::Tensor r1_penalty(const RefinerState& state, const RGBDImage& real_batch,
                         bool create_graph = true);

// Lazy regularisation schedule: R1 is applied when step % interval == 0.
inline bool r1_due(int64_t step, int64_t interval) { return step % interval == 0; }

}  // namespace pvg
