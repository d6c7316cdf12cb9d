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

#include <filesystem>

#include <Eigen/Dense>
#include <torch/torch.h>

#include "pvg/geometry.hpp"
#include "pvg/image.hpp"

namespace pvg {

// Disparity ceiling for anything treated as sky after correction.
inline constexpr double kSkyDisparityCap = 1e-3;

struct SkyMaskConfig {
  double disparity_knee = 0.05;
  double softness = 0.01;
  // Weight of the top-of-frame prior, clamped to [0,1] when applied.
  double row_prior_weight = 0.3;

  void validate() const;
};

// mask = sigmoid((knee - d) / softness) * (1 - w + w * prior(row)), with
// prior falling linearly from 1 at the top row to 0 at the bottom.
torch::Tensor sky_mask(const RGBDImage& img, const SkyMaskConfig& cfg);

// Persistent plane-at-infinity buffer, wider than the frame and anchored to
// the starting view. Tensors are [1,C,H',W'].
struct SkyCanvas {
  torch::Tensor rgb;
  torch::Tensor disparity;
  torch::Tensor coverage;
  Eigen::Matrix3d anchor_rotation = Eigen::Matrix3d::Identity();
  CameraIntrinsics intrinsics;
  double disparity_cap = kSkyDisparityCap;

  // Seeds the canvas from the starting view's sky (mask > 0.5 gets full
  // coverage, the rest keeps its soft mask); pixels outside the frame start
  // with zero coverage.
  static SkyCanvas Create(const RGBDImage& start, const torch::Tensor& start_mask,
                          const CameraIntrinsics& k, double widen = 1.5,
                          double disparity_cap = kSkyDisparityCap);

  SkyCanvas clone() const;
  void validate() const;
};

struct SkyCorrection {
  RGBDImage image;
  SkyCanvas canvas;
  torch::Tensor alpha;  // [1,1,H,W] blend weight actually used
};

// Blends homography-warped canvas sky into `current` and writes newly seen
// sky back into the canvas. `rotation` is the current camera's orientation in
// the starting frame. Single-image batches only.
SkyCorrection correct_sky(const RGBDImage& current, const Eigen::Matrix3d& rotation,
                          const SkyCanvas& canvas, const CameraIntrinsics& k,
                          const torch::Tensor& mask);
SkyCorrection correct_sky(const RGBDImage& current, const Eigen::Matrix3d& rotation,
                          const SkyCanvas& canvas, const CameraIntrinsics& k,
                          const SkyMaskConfig& cfg);

// Writes <stem>_rgb.png and <stem>_coverage.png.
void export_canvas(const SkyCanvas& canvas, const std::filesystem::path& stem);

}  // namespace pvg
