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

#include "pvg/image.hpp"

#include <stdexcept>
#include <string>

namespace pvg {
namespace {

torch::Tensor as_batched(torch::Tensor t, int64_t channels, const char* what) {
  if (t.dim() == 3) t = t.unsqueeze(0);
  if (t.dim() != 4 || t.size(1) != channels) {
    throw std::invalid_argument(std::string("RGBDImage: ") + what +
                                " must be [B," + std::to_string(channels) +
                                ",H,W]");
  }
  return t;
}

}  // namespace

RGBDImage RGBDImage::Create(torch::Tensor rgb, torch::Tensor disparity,
                            torch::Tensor validity) {
  RGBDImage img;
  img.rgb = as_batched(std::move(rgb), 3, "rgb");
  img.disparity = as_batched(std::move(disparity), 1, "disparity");
  if (validity.defined()) {
    img.validity = as_batched(std::move(validity), 1, "validity");
  } else {
    img.validity = torch::ones_like(img.disparity);
  }
  if (img.rgb.size(0) != img.disparity.size(0) ||
      img.rgb.sizes().slice(2) != img.disparity.sizes().slice(2) ||
      img.validity.sizes() != img.disparity.sizes()) {
    throw std::invalid_argument("RGBDImage: rgb, disparity and validity shapes disagree");
  }
  return img;
}

RGBDImage RGBDImage::Stack(const std::vector<RGBDImage>& items) {
  if (items.empty()) throw std::invalid_argument("RGBDImage::Stack: empty list");
  std::vector<torch::Tensor> rgb, disp, valid;
  for (const auto& it : items) {
    rgb.push_back(it.rgb);
    disp.push_back(it.disparity);
    valid.push_back(it.validity);
  }
  return {torch::cat(rgb, 0), torch::cat(disp, 0), torch::cat(valid, 0)};
}

RGBDImage RGBDImage::item(int64_t index) const {
  return {rgb.narrow(0, index, 1), disparity.narrow(0, index, 1),
          validity.narrow(0, index, 1)};
}

std::vector<RGBDImage> RGBDImage::unbind() const {
  std::vector<RGBDImage> out;
  out.reserve(batch());
  for (int64_t i = 0; i < batch(); ++i) out.push_back(item(i));
  return out;
}

torch::Tensor RGBDImage::rgbd() const { return torch::cat({rgb, disparity}, 1); }

RGBDImage RGBDImage::detach() const {
  return {rgb.detach(), disparity.detach(), validity.detach()};
}

RGBDImage RGBDImage::clone() const {
  return {rgb.clone(), disparity.clone(), validity.clone()};
}

RGBDImage RGBDImage::to(torch::Dtype dtype) const {
  return {rgb.to(dtype), disparity.to(dtype), validity.to(dtype)};
}

void RGBDImage::validate() const {
  if (!rgb.defined() || !disparity.defined() || !validity.defined()) {
    throw std::invalid_argument("RGBDImage: undefined tensor");
  }
  if (rgb.dim() != 4 || rgb.size(1) != 3 || disparity.dim() != 4 ||
      disparity.size(1) != 1 || rgb.size(0) != disparity.size(0) ||
      rgb.size(2) != disparity.size(2) || rgb.size(3) != disparity.size(3) ||
      validity.sizes() != disparity.sizes()) {
    throw std::invalid_argument("RGBDImage: inconsistent shapes");
  }
  torch::NoGradGuard guard;
  if (!torch::isfinite(rgb).all().item<bool>() ||
      !torch::isfinite(disparity).all().item<bool>() ||
      !torch::isfinite(validity).all().item<bool>()) {
    throw std::invalid_argument("RGBDImage: non-finite values");
  }
  if (rgb.min().item<double>() < 0.0 || rgb.max().item<double>() > 1.0) {
    throw std::invalid_argument("RGBDImage: rgb outside [0,1]");
  }
  if (validity.min().item<double>() < 0.0 || validity.max().item<double>() > 1.0) {
    throw std::invalid_argument("RGBDImage: validity outside [0,1]");
  }
  const auto trusted = validity > 0;
  if ((disparity.le(0) & trusted).any().item<bool>()) {
    throw std::invalid_argument("RGBDImage: nonpositive disparity in valid region");
  }
  if (disparity.max().item<double>() > 1.0) {
    throw std::invalid_argument("RGBDImage: disparity above 1");
  }
}

}  // namespace pvg
