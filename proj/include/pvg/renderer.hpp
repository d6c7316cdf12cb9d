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

#include <span>
#include <vector>

#include <Eigen/Dense>
#include <torch/torch.h>

#include "pvg/geometry.hpp"
#include "pvg/image.hpp"

namespace pvg {

// Source pixels with disparity at or below this never emit a splat.
inline constexpr double kMinSplatDisparity = 1e-8;
// Points closer than this to the target camera plane are culled.
inline constexpr double kNearPlane = 1e-3;

struct SplatConfig {
  // Softmax importance temperature on source disparity; larger values let the
  // nearer of two colliding splats dominate.
  double beta = 10.0;
  // Target pixels whose accumulated bilinear weight falls below this are holes.
  double weight_floor = 0.05;

  void validate() const;
};

struct WarpResult {
  RGBDImage image;
  // [B,1,H,W] soft coverage: 0 for holes, else accumulated weight clamped to 1.
  torch::Tensor mask;
};

// Raw output of one forward splat pass, before masking is applied.
struct SplatOutput {
  torch::Tensor values;     // [B,C,H,W] importance-normalised channels
  torch::Tensor disparity;  // [B,1,H,W] importance-normalised target disparity
  torch::Tensor coverage;   // [B,1,H,W] accumulated bilinear weight
};

// Forward-splats `values` (any channel count) using per-pixel `disparity` for
// geometry. `relative` holds one pose for the whole batch or one per item.
SplatOutput splat(const torch::Tensor& disparity, const torch::Tensor& values,
                  std::span<const CameraPose> relative,
                  const CameraIntrinsics& k, const SplatConfig& cfg);

// Renders `src` from a camera whose pose in the source frame is `relative`.
WarpResult warp(const RGBDImage& src, std::span<const CameraPose> relative,
                const CameraIntrinsics& k, const SplatConfig& cfg = {});
WarpResult warp(const RGBDImage& src, const CameraPose& relative,
                const CameraIntrinsics& k, const SplatConfig& cfg = {});

// Warp to a virtual view and back again. The disocclusion mask computed at
// the virtual view travels with the content, and the returned image is
// multiplied by the round-trip mask.
WarpResult cycle_warp(const RGBDImage& src, std::span<const CameraPose> virtual_pose,
                      const CameraIntrinsics& k, const SplatConfig& cfg = {});
WarpResult cycle_warp(const RGBDImage& src, const CameraPose& virtual_pose,
                      const CameraIntrinsics& k, const SplatConfig& cfg = {});

// K * R^T * K^-1: maps starting-view pixels to current-view pixels for content
// at infinite depth, where `rotation` is the current camera's orientation in
// the starting frame.
Eigen::Matrix3d infinity_homography(const Eigen::Matrix3d& rotation,
                                    const CameraIntrinsics& k);
// Same mapping between two cameras with different intrinsics.
Eigen::Matrix3d infinity_homography(const Eigen::Matrix3d& rotation,
                                    const CameraIntrinsics& from,
                                    const CameraIntrinsics& to);

struct Resampled {
  torch::Tensor image;   // [B,C,out_h,out_w]
  torch::Tensor inside;  // [B,1,out_h,out_w] 1 where the sample fell inside the source
};

// Backward bilinear resampling of `image` under the pixel mapping
// `target_from_source` (homogeneous 3x3).
Resampled resample_homography(const torch::Tensor& image,
                              const Eigen::Matrix3d& target_from_source,
                              int64_t out_height, int64_t out_width);

// Hard 0/1 version of a soft mask, for display only.
torch::Tensor binarize_mask(const torch::Tensor& mask, double threshold = 0.5);

}  // namespace pvg
