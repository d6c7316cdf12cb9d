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

#include "pvg/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace pvg {

PyramidFeatures::PyramidFeatures(int levels) : levels_(levels) {
  if (levels < 1) throw std::invalid_argument("PyramidFeatures: need at least one level");
}

torch::Tensor blur_downsample(const torch::Tensor& x) {
  namespace F = torch::nn::functional;
  const int64_t C = x.size(1);
  const auto taps = torch::tensor({1.0, 4.0, 6.0, 4.0, 1.0}, x.options()) / 16.0;
  const auto kh = taps.view({1, 1, 1, 5}).expand({C, 1, 1, 5});
  const auto kv = taps.view({1, 1, 5, 1}).expand({C, 1, 5, 1});
  // Reflect padding needs more than two pixels per side.
  const F::PadFuncOptions::mode_t mode =
      (x.size(2) > 2 && x.size(3) > 2) ? F::PadFuncOptions::mode_t(torch::kReflect)
                                       : F::PadFuncOptions::mode_t(torch::kReplicate);
  auto h = F::pad(x, F::PadFuncOptions({2, 2, 2, 2}).mode(mode));
  h = F::conv2d(h, kh, F::Conv2dFuncOptions().groups(C));
  h = F::conv2d(h, kv, F::Conv2dFuncOptions().groups(C));
  using torch::indexing::None;
  using torch::indexing::Slice;
  return h.index({Slice(), Slice(), Slice(0, None, 2), Slice(0, None, 2)});
}

std::vector<torch::Tensor> PyramidFeatures::operator()(const torch::Tensor& rgb) const {
  std::vector<torch::Tensor> out{rgb};
  for (int l = 1; l < levels_; ++l) out.push_back(blur_downsample(out.back()));
  return out;
}

std::shared_ptr<const FeatureExtractor> default_features() {
  static const auto features = std::make_shared<const PyramidFeatures>(3);
  return features;
}

void LossWeights::validate() const {
  if (lambda1_start < 0 || lambda1_traj < 0 || lambda2 < 0) {
    throw std::invalid_argument("LossWeights: weights must be >= 0");
  }
  if (lazy_interval < 1) throw std::invalid_argument("LossWeights: lazy_interval must be >= 1");
}

torch::Tensor reconstruction_loss(const RGBDImage& pred, const RGBDImage& target,
                                  const FeatureExtractor& features) {
  if (pred.rgb.sizes() != target.rgb.sizes() ||
      pred.disparity.sizes() != target.disparity.sizes()) {
    throw std::invalid_argument("reconstruction_loss: shape mismatch");
  }
  const auto fp = features(pred.rgb);
  const auto ft = features(target.rgb);
  auto loss = (pred.disparity - target.disparity).abs().mean();
  for (size_t l = 0; l < fp.size(); ++l) loss = loss + (fp[l] - ft[l]).abs().mean();
  return loss;
}

torch::Tensor generator_adv_loss(const torch::Tensor& fake_logit) {
  return torch::softplus(-fake_logit).mean();
}

torch::Tensor discriminator_adv_loss(const torch::Tensor& real_logit,
                                     const torch::Tensor& fake_logit) {
  return torch::softplus(-real_logit).mean() + torch::softplus(fake_logit).mean();
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double generator_adv_loss(double fake_logit) { return softplus(-fake_logit); }

double discriminator_adv_loss(double real_logit, double fake_logit) {
  return softplus(-real_logit) + softplus(fake_logit);
}

torch::Tensor r1_penalty(const std::function<torch::Tensor(const torch::Tensor&)>& logits,
                         const torch::Tensor& real, bool create_graph) {
  auto x = real.detach().requires_grad_(true);
  const auto out = logits(x);
  if (!out.requires_grad()) {
    // Logits independent of the input: the gradient is identically zero.
    return torch::zeros({}, real.options());
  }
  const auto grad = torch::autograd::grad({out.sum()}, {x}, {}, /*retain_graph=*/true,
                                          create_graph, /*allow_unused=*/true)[0];
  if (!grad.defined()) return torch::zeros({}, real.options());
  return grad.pow(2).flatten(1).sum(1).mean();
}

torch::Tensor r1_penalty(const RefinerState& state, const RGBDImage& real_batch,
                         bool create_graph) {
  return r1_penalty([&](const torch::Tensor& x) { return discriminate(state, x); },
                    real_batch.rgbd(), create_graph);
}

}  // namespace pvg
