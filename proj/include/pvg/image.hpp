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

namespace pvg {

// A batch of RGBD images in NCHW layout. A single image is a batch of one.
//   rgb       [B,3,H,W] in [0,1]
//   disparity [B,1,H,W] inverse depth, (0,1] wherever validity > 0
//   validity  [B,1,H,W] in [0,1], 1 = trusted content
struct RGBDImage {
  torch::Tensor rgb;
  torch::Tensor disparity;
  torch::Tensor validity;

  // Accepts CHW or NCHW tensors; validity defaults to ones.
  static RGBDImage Create(torch::Tensor rgb, torch::Tensor disparity,
                          torch::Tensor validity = {});
  static RGBDImage Stack(const std::vector<RGBDImage>& items);

  int64_t batch() const { return rgb.size(0); }
  int64_t height() const { return rgb.size(2); }
  int64_t width() const { return rgb.size(3); }
  bool defined() const { return rgb.defined(); }

  RGBDImage item(int64_t index) const;
  std::vector<RGBDImage> unbind() const;

  // Channel concatenation of rgb and disparity, [B,4,H,W].
  torch::Tensor rgbd() const;

  RGBDImage detach() const;
  RGBDImage clone() const;
  RGBDImage to(torch::Dtype dtype) const;

  // Throws std::invalid_argument naming the violated invariant.
  void validate() const;
};

}  // namespace pvg
