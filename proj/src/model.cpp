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

#include "pvg/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace pvg {
namespace {

constexpr double kSlope = 0.2;
constexpr double kDisparityFloor = 1e-3;

torch::Tensor lrelu(const torch::Tensor& x) { return torch::leaky_relu(x, kSlope); }

torch::nn::Conv2d conv(int64_t in, int64_t out, int64_t kernel, int64_t stride = 1) {
  return torch::nn::Conv2d(
      torch::nn::Conv2dOptions(in, out, kernel).stride(stride).padding(kernel / 2));
}

void check_image_size(int64_t expected, const torch::Tensor& x, const char* who) {
  if (x.dim() != 4 || x.size(2) != expected || x.size(3) != expected) {
    throw std::invalid_argument(std::string(who) + ": expected " +
                                std::to_string(expected) + "x" +
                                std::to_string(expected) + " input");
  }
}

}  // namespace

RefinerConfig RefinerConfig::ForImageSize(int64_t image_size, int64_t base_channels,
                                          int64_t latent_dim) {
  RefinerConfig c;
  c.image_size = image_size;
  c.base_channels = base_channels;
  c.latent_dim = latent_dim;
  c.num_scales = 0;
  while ((int64_t{4} << c.num_scales) < image_size) ++c.num_scales;
  c.validate();
  return c;
}

int64_t RefinerConfig::channels_at(int64_t level) const {
  const int64_t widest = 2 * base_channels;
  const int64_t c = std::max<int64_t>(base_channels / 2, 4) << level;
  return std::min(c, widest);
}

void RefinerConfig::validate() const {
  if (base_channels < 1 || latent_dim < 1 || num_scales < 1) {
    throw std::invalid_argument("RefinerConfig: channels, latent_dim and num_scales must be positive");
  }
  if ((int64_t{4} << num_scales) != image_size) {
    throw std::invalid_argument("RefinerConfig: image_size must equal 4 * 2^num_scales");
  }
}

ModulatedConv2dImpl::ModulatedConv2dImpl(int64_t in_channels, int64_t out_channels,
                                         int64_t kernel, int64_t style_dim)
    : in_channels_(in_channels), out_channels_(out_channels), kernel_(kernel) {
  weight = register_parameter("weight",
                              torch::randn({out_channels, in_channels, kernel, kernel}));
  bias = register_parameter("bias", torch::zeros({out_channels}));
  affine = register_module("affine", torch::nn::Linear(style_dim, in_channels));
}

torch::Tensor ModulatedConv2dImpl::forward(const torch::Tensor& x, const torch::Tensor& style) {
  const int64_t B = x.size(0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(in_channels_ * kernel_ * kernel_));
  const auto s = affine->forward(style);  // [B,in]
  auto w = weight.unsqueeze(0) * scale * s.view({B, 1, in_channels_, 1, 1});
  const auto demod = torch::rsqrt(w.pow(2).sum({2, 3, 4}) + 1e-8);
  w = w * demod.view({B, out_channels_, 1, 1, 1});
  const auto grouped = x.reshape({1, B * in_channels_, x.size(2), x.size(3)});
  auto y = torch::conv2d(grouped, w.reshape({B * out_channels_, in_channels_, kernel_, kernel_}),
                         {}, 1, kernel_ / 2, 1, B);
  y = y.view({B, out_channels_, x.size(2), x.size(3)});
  return y + bias.view({1, out_channels_, 1, 1});
}

RefinerEncoderImpl::RefinerEncoderImpl(const RefinerConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  stem_ = register_module("stem", conv(5, cfg.channels_at(0), 3));
  for (int64_t l = 0; l < cfg.num_scales; ++l) {
    convs_->push_back(conv(cfg.channels_at(l), cfg.channels_at(l), 3));
    downs_->push_back(conv(cfg.channels_at(l), cfg.channels_at(l + 1), 3, 2));
  }
  register_module("convs", convs_);
  register_module("downs", downs_);
  to_code_ = register_module(
      "to_code", torch::nn::Linear(cfg.channels_at(cfg.num_scales) * 16, cfg.latent_dim));
}

EncoderOutput RefinerEncoderImpl::forward(const torch::Tensor& x) {
  EncoderOutput out;
  auto h = lrelu(stem_->forward(x));
  for (int64_t l = 0; l < cfg_.num_scales; ++l) {
    h = lrelu(convs_[l]->as<torch::nn::Conv2d>()->forward(h));
    out.skips.push_back(h);
    h = lrelu(downs_[l]->as<torch::nn::Conv2d>()->forward(h));
  }
  out.bottleneck = h;
  out.code = to_code_->forward(h.flatten(1));
  return out;
}

MappingNetworkImpl::MappingNetworkImpl(int64_t latent_dim) {
  fc1_ = register_module("fc1", torch::nn::Linear(latent_dim, latent_dim));
  fc2_ = register_module("fc2", torch::nn::Linear(latent_dim, latent_dim));
}

torch::Tensor MappingNetworkImpl::forward(const torch::Tensor& noise) {
  const auto normed = noise * torch::rsqrt(noise.pow(2).mean(1, true) + 1e-8);
  return fc2_->forward(lrelu(fc1_->forward(normed)));
}

SynthesisNetworkImpl::SynthesisNetworkImpl(const RefinerConfig& cfg) : cfg_(cfg) {
  const int64_t style_dim = 2 * cfg.latent_dim;
  const int64_t deepest = cfg.channels_at(cfg.num_scales);
  input_conv_ = register_module("input", ModulatedConv2d(deepest, deepest, 3, style_dim));
  up_convs_.resize(cfg.num_scales, nullptr);
  convs_.resize(cfg.num_scales, nullptr);
  for (int64_t l = cfg.num_scales - 1; l >= 0; --l) {
    up_convs_[l] = register_module(
        "up" + std::to_string(l),
        ModulatedConv2d(cfg.channels_at(l + 1), cfg.channels_at(l), 3, style_dim));
    convs_[l] = register_module(
        "conv" + std::to_string(l),
        ModulatedConv2d(cfg.channels_at(l), cfg.channels_at(l), 3, style_dim));
  }
  head = register_module("head", conv(cfg.channels_at(0), kSynthesisOutputs, 1));
}

torch::Tensor SynthesisNetworkImpl::forward(const EncoderOutput& enc, const torch::Tensor& style) {
  auto h = lrelu(input_conv_->forward(enc.bottleneck, style));
  for (int64_t l = cfg_.num_scales - 1; l >= 0; --l) {
    h = torch::upsample_nearest2d(h, std::vector<int64_t>{h.size(2) * 2, h.size(3) * 2});
    h = lrelu(up_convs_[l]->forward(h, style));
    h = h + enc.skips[l];
    h = lrelu(convs_[l]->forward(h, style));
  }
  return head->forward(h);
}

RefinerImpl::RefinerImpl(const RefinerConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  encoder = register_module("encoder", RefinerEncoder(cfg));
  mapping = register_module("mapping", MappingNetwork(cfg.latent_dim));
  synthesis = register_module("synthesis", SynthesisNetwork(cfg));
}

RGBDImage RefinerImpl::forward(const WarpResult& warped, const torch::Tensor& noise) {
  const auto& img = warped.image;
  check_image_size(cfg_.image_size, img.rgb, "refine");
  if (noise.dim() != 2 || noise.size(1) != cfg_.latent_dim ||
      (noise.size(0) != img.batch() && noise.size(0) != 1)) {
    throw std::invalid_argument("refine: noise must be [B," + std::to_string(cfg_.latent_dim) + "]");
  }
  const auto mask = warped.mask;
  const auto x = torch::cat({img.rgb, img.disparity, mask}, 1);
  const auto enc = encoder->forward(x);
  const auto z = mapping->forward(noise.expand({img.batch(), cfg_.latent_dim}));
  const auto style = torch::cat({enc.code, z}, 1);
  const auto raw = synthesis->forward(enc, style);

  const auto gen_rgb = torch::sigmoid(raw.narrow(1, 0, 3));
  const auto gen_disp =
      kDisparityFloor + (1.0 - kDisparityFloor) * torch::sigmoid(raw.narrow(1, 3, 1));
  const auto vis_rgb = img.rgb + raw.narrow(1, 4, 3);
  const auto vis_disp = img.disparity + raw.narrow(1, 7, 1);

  RGBDImage out;
  out.rgb = (mask * vis_rgb + (1.0 - mask) * gen_rgb).clamp(0.0, 1.0);
  out.disparity = (mask * vis_disp + (1.0 - mask) * gen_disp).clamp(kDisparityFloor, 1.0);
  out.validity = torch::ones_like(out.disparity);
  return out;
}

DiscriminatorImpl::DiscriminatorImpl(const RefinerConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  stem_ = register_module("stem", conv(4, cfg.channels_at(0), 3));
  for (int64_t l = 0; l < cfg.num_scales; ++l) {
    convs_->push_back(conv(cfg.channels_at(l), cfg.channels_at(l), 3));
    downs_->push_back(conv(cfg.channels_at(l), cfg.channels_at(l + 1), 3, 2));
  }
  register_module("convs", convs_);
  register_module("downs", downs_);
  const int64_t deepest = cfg.channels_at(cfg.num_scales);
  fc1_ = register_module("fc1", torch::nn::Linear(deepest * 16, deepest));
  fc2_ = register_module("fc2", torch::nn::Linear(deepest, 1));
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& rgbd) {
  check_image_size(cfg_.image_size, rgbd, "discriminate");
  if (rgbd.size(1) != 4) throw std::invalid_argument("discriminate: expected 4-channel RGBD");
  auto h = lrelu(stem_->forward(rgbd));
  for (int64_t l = 0; l < cfg_.num_scales; ++l) {
    h = lrelu(convs_[l]->as<torch::nn::Conv2d>()->forward(h));
    h = lrelu(downs_[l]->as<torch::nn::Conv2d>()->forward(h));
  }
  return fc2_->forward(lrelu(fc1_->forward(h.flatten(1)))).squeeze(1);
}

void initialize_parameters(torch::nn::Module& module, Rng& rng) {
  torch::NoGradGuard guard;
  for (auto& item : module.named_parameters(/*recurse=*/true)) {
    auto& p = item.value();
    const std::string& name = item.key();
    const bool is_bias = name.size() >= 4 && name.compare(name.size() - 4, 4, "bias") == 0;
    const bool is_affine = name.find("affine") != std::string::npos;
    if (is_bias) {
      p.fill_(is_affine ? 1.0 : 0.0);
      continue;
    }
    const bool modulated = !is_affine && p.dim() == 4 &&
                           name.find("synthesis") != std::string::npos &&
                           name.find("head") == std::string::npos;
    double stddev = 1.0;
    if (!modulated) {
      const double fan_in = static_cast<double>(p.numel() / p.size(0));
      stddev = std::sqrt(2.0 / ((1.0 + kSlope * kSlope) * fan_in));
    }
    p.copy_(randn(rng, p.sizes(), torch::kFloat64).to(p.scalar_type()) * stddev);
  }
  // The residual channels start at zero so an untrained refiner passes
  // visible content straight through.
  for (auto& item : module.named_parameters(true)) {
    if (item.key().find("synthesis.head.") != std::string::npos) {
      item.value().narrow(0, 4, 4).zero_();
    }
  }
}

void copy_parameters(torch::nn::Module& dst, const torch::nn::Module& src) {
  torch::NoGradGuard guard;
  auto dst_params = dst.named_parameters(true);
  const auto src_params = src.named_parameters(true);
  for (const auto& item : src_params) {
    auto* target = dst_params.find(item.key());
    if (target == nullptr || target->sizes() != item.value().sizes()) {
      throw std::invalid_argument("copy_parameters: architecture mismatch at " + item.key());
    }
    target->copy_(item.value());
  }
}

RefinerState RefinerState::Create(const RefinerConfig& config, uint64_t seed) {
  config.validate();
  RefinerState s;
  s.config = config;
  Rng rng(seed);
  s.refiner = Refiner(config);
  initialize_parameters(*s.refiner, rng);
  s.discriminator = Discriminator(config);
  initialize_parameters(*s.discriminator, rng);
  s.ema = Refiner(config);
  copy_parameters(*s.ema, *s.refiner);
  for (auto& p : s.ema->parameters()) p.set_requires_grad(false);
  return s;
}

RefinerState RefinerState::clone() const {
  RefinerState s;
  s.config = config;
  s.step_counter = step_counter;
  s.refiner = Refiner(config);
  s.ema = Refiner(config);
  s.discriminator = Discriminator(config);
  const auto dtype = refiner->parameters().front().scalar_type();
  s.to(dtype);
  copy_parameters(*s.refiner, *refiner);
  copy_parameters(*s.ema, *ema);
  copy_parameters(*s.discriminator, *discriminator);
  for (auto& p : s.ema->parameters()) p.set_requires_grad(false);
  return s;
}

void RefinerState::to(torch::Dtype dtype) {
  refiner->to(dtype);
  ema->to(dtype);
  discriminator->to(dtype);
}

std::vector<torch::Tensor> RefinerState::refiner_parameters() const {
  return refiner->parameters();
}

std::vector<torch::Tensor> RefinerState::discriminator_parameters() const {
  return discriminator->parameters();
}

RGBDImage refine(const RefinerState& state, const WarpResult& warped,
                 const torch::Tensor& noise, bool use_ema) {
  if (use_ema) {
    torch::NoGradGuard guard;
    return state.ema.ptr()->forward(warped, noise);
  }
  return state.refiner.ptr()->forward(warped, noise);
}

torch::Tensor discriminate(const RefinerState& state, const RGBDImage& candidate) {
  return state.discriminator.ptr()->forward(candidate.rgbd());
}

torch::Tensor discriminate(const RefinerState& state, const torch::Tensor& rgbd) {
  return state.discriminator.ptr()->forward(rgbd);
}

void ema_update(RefinerState& state, double decay) {
  if (!(decay >= 0.0 && decay < 1.0)) {
    throw std::invalid_argument("ema_update: decay must lie in [0,1)");
  }
  torch::NoGradGuard guard;
  auto shadow = state.ema->named_parameters(true);
  for (const auto& item : state.refiner->named_parameters(true)) {
    auto& s = shadow[item.key()];
    s.mul_(decay).add_(item.value().detach(), 1.0 - decay);
  }
}

}  // namespace pvg
