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
#include <vector>

#include <torch/torch.h>

#include "pvg/image.hpp"
#include "pvg/renderer.hpp"
#include "pvg/rng.hpp"

namespace pvg {

struct RefinerConfig {
  int64_t base_channels = 32;
  int64_t num_scales = 4;  // image_size == 4 << num_scales
  int64_t latent_dim = 64;
  int64_t image_size = 64;

  static RefinerConfig ForImageSize(int64_t image_size, int64_t base_channels = 32,
                                    int64_t latent_dim = 64);
  // Feature width at pyramid level `level` (0 = full resolution).
  int64_t channels_at(int64_t level) const;
  void validate() const;
};

// StyleGAN2-style convolution whose input channels are scaled per sample by
// an affine map of the style vector, followed by weight demodulation.
class ModulatedConv2dImpl : public torch::nn::Module {
 public:
  ModulatedConv2dImpl(int64_t in_channels, int64_t out_channels, int64_t kernel,
                      int64_t style_dim);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& style);

  torch::Tensor weight;
  torch::Tensor bias;
  torch::nn::Linear affine{nullptr};

 private:
  int64_t in_channels_;
  int64_t out_channels_;
  int64_t kernel_;
};
TORCH_MODULE(ModulatedConv2d);

struct EncoderOutput {
  torch::Tensor code;        // [B,latent_dim] global image code
  torch::Tensor bottleneck;  // [B,C,4,4]
  std::vector<torch::Tensor> skips;  // skips[l] at resolution image_size >> l
};

class RefinerEncoderImpl : public torch::nn::Module {
 public:
  explicit RefinerEncoderImpl(const RefinerConfig& cfg);
  EncoderOutput forward(const torch::Tensor& x);

 private:
  RefinerConfig cfg_;
  torch::nn::Conv2d stem_{nullptr};
  torch::nn::ModuleList convs_;
  torch::nn::ModuleList downs_;
  torch::nn::Linear to_code_{nullptr};
};
TORCH_MODULE(RefinerEncoder);

class MappingNetworkImpl : public torch::nn::Module {
 public:
  explicit MappingNetworkImpl(int64_t latent_dim);
  torch::Tensor forward(const torch::Tensor& noise);

 private:
  torch::nn::Linear fc1_{nullptr};
  torch::nn::Linear fc2_{nullptr};
};
TORCH_MODULE(MappingNetwork);

// Number of raw output channels: generated rgb(3), generated disparity(1),
// residual rgb(3), residual disparity(1).
inline constexpr int64_t kSynthesisOutputs = 8;

class SynthesisNetworkImpl : public torch::nn::Module {
 public:
  explicit SynthesisNetworkImpl(const RefinerConfig& cfg);
  torch::Tensor forward(const EncoderOutput& enc, const torch::Tensor& style);

  torch::nn::Conv2d head{nullptr};

 private:
  RefinerConfig cfg_;
  ModulatedConv2d input_conv_{nullptr};
  std::vector<ModulatedConv2d> up_convs_;
  std::vector<ModulatedConv2d> convs_;
};
TORCH_MODULE(SynthesisNetwork);

// F_theta: global encoder + co-modulated generator with a mask-gated skip of
// the warped input.
class RefinerImpl : public torch::nn::Module {
 public:
  explicit RefinerImpl(const RefinerConfig& cfg);
  RGBDImage forward(const WarpResult& warped, const torch::Tensor& noise);
  const RefinerConfig& config() const { return cfg_; }

  RefinerEncoder encoder{nullptr};
  MappingNetwork mapping{nullptr};
  SynthesisNetwork synthesis{nullptr};

 private:
  RefinerConfig cfg_;
};
TORCH_MODULE(Refiner);

class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(const RefinerConfig& cfg);
  // [B,4,H,W] RGBD -> [B] logits.
  torch::Tensor forward(const torch::Tensor& rgbd);

 private:
  RefinerConfig cfg_;
  torch::nn::Conv2d stem_{nullptr};
  torch::nn::ModuleList convs_;
  torch::nn::ModuleList downs_;
  torch::nn::Linear fc1_{nullptr};
  torch::nn::Linear fc2_{nullptr};
};
TORCH_MODULE(Discriminator);

// Live refiner, its EMA shadow, the discriminator and the step counter.
struct RefinerState {
  RefinerConfig config;
  Refiner refiner{nullptr};
  Refiner ema{nullptr};
  Discriminator discriminator{nullptr};
  int64_t step_counter = 0;

  static RefinerState Create(const RefinerConfig& config, uint64_t seed);
  RefinerState clone() const;
  void to(torch::Dtype dtype);

  std::vector<torch::Tensor> refiner_parameters() const;
  std::vector<torch::Tensor> discriminator_parameters() const;
};

// Deterministic re-initialisation of every parameter from `rng`.
void initialize_parameters(torch::nn::Module& module, Rng& rng);

// Copies parameter values from `src` into `dst` (same architecture).
void copy_parameters(torch::nn::Module& dst, const torch::nn::Module& src);

RGBDImage refine(const RefinerState& state, const WarpResult& warped,
                 const torch::Tensor& noise, bool use_ema);

torch::Tensor discriminate(const RefinerState& state, const RGBDImage& candidate);
torch::Tensor discriminate(const RefinerState& state, const torch::Tensor& rgbd);

// shadow <- decay * shadow + (1 - decay) * live, for the refiner only.
void ema_update(RefinerState& state, double decay);

}  // namespace pvg
