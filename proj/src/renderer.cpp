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

#include "pvg/renderer.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace pvg {
namespace {

// Rotation [B,3,3] and translation [B,3,1] tensors for a pose list.
std::pair<torch::Tensor, torch::Tensor> pose_tensors(
    std::span<const CameraPose> poses, int64_t batch,
    const torch::TensorOptions& opts) {
  if (poses.size() != 1 && static_cast<int64_t>(poses.size()) != batch) {
    throw std::invalid_argument("warp: need one pose or one pose per batch item");
  }
  auto rot = torch::empty({batch, 3, 3}, torch::kFloat64);
  auto trans = torch::empty({batch, 3, 1}, torch::kFloat64);
  auto r = rot.accessor<double, 3>();
  auto t = trans.accessor<double, 3>();
  for (int64_t b = 0; b < batch; ++b) {
    const CameraPose& p = poses[poses.size() == 1 ? 0 : b];
    if (!is_valid_pose(p)) throw std::invalid_argument("warp: invalid pose");
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) r[b][i][j] = p.rotation(i, j);
      t[b][i][0] = p.translation(i);
    }
  }
  return {rot.to(opts.dtype()), trans.to(opts.dtype())};
}

}  // namespace

void SplatConfig::validate() const {
  if (!std::isfinite(beta) || beta < 0) {
    throw std::invalid_argument("SplatConfig: beta must be finite and >= 0");
  }
  if (!(weight_floor > 0 && weight_floor < 1)) {
    throw std::invalid_argument("SplatConfig: weight_floor must lie in (0,1)");
  }
}

SplatOutput splat(const torch::Tensor& disparity, const torch::Tensor& values,
                  std::span<const CameraPose> relative,
                  const CameraIntrinsics& k, const SplatConfig& cfg) {
  cfg.validate();
  if (disparity.dim() != 4 || disparity.size(1) != 1 || values.dim() != 4 ||
      values.size(0) != disparity.size(0) ||
      values.sizes().slice(2) != disparity.sizes().slice(2)) {
    throw std::invalid_argument("splat: disparity [B,1,H,W] and values [B,C,H,W] required");
  }
  const int64_t B = disparity.size(0);
  const int64_t C = values.size(1);
  const int64_t H = disparity.size(2);
  const int64_t W = disparity.size(3);
  if (H != k.height || W != k.width) {
    throw std::invalid_argument("splat: image size does not match intrinsics");
  }
  const auto opts = disparity.options();
  const int64_t N = H * W;

  auto [rot, trans] = pose_tensors(relative, B, opts);

  const auto u = torch::arange(W, opts).view({1, 1, 1, W}).expand({B, 1, H, W});
  const auto v = torch::arange(H, opts).view({1, 1, H, 1}).expand({B, 1, H, W});

  const auto emit = disparity > kMinSplatDisparity;
  const auto depth = 1.0 / torch::where(emit, disparity, torch::ones_like(disparity));
  const auto X = (u - k.cx) / k.fx * depth;
  const auto Y = (v - k.cy) / k.fy * depth;
  const auto points = torch::cat({X, Y, depth}, 1).view({B, 3, N});

  // x_target = R^T (x_source - t)
  const auto target = torch::bmm(rot.transpose(1, 2), points - trans);
  const auto Zt = target.select(1, 2);
  const auto in_front = Zt > kNearPlane;
  const auto Zs = torch::where(in_front, Zt, torch::ones_like(Zt));
  const auto xt = k.fx * target.select(1, 0) / Zs + k.cx;
  const auto yt = k.fy * target.select(1, 1) / Zs + k.cy;
  const auto target_disp = 1.0 / Zs;

  const auto emitting = emit.view({B, N}) & in_front;
  const auto flat_disp = disparity.view({B, N});
  const auto dmax = torch::where(emitting, flat_disp, torch::zeros_like(flat_disp))
                        .amax(1, true)
                        .detach();
  const auto importance = torch::exp(cfg.beta * (flat_disp - dmax));

  const auto x0 = torch::floor(xt).detach();
  const auto y0 = torch::floor(yt).detach();
  const auto ax = xt - x0;
  const auto ay = yt - y0;

  // Channels carried per splat: user values then target disparity.
  const auto carried =
      torch::cat({values.view({B, C, N}), target_disp.unsqueeze(1)}, 1)
          .permute({0, 2, 1})
          .reshape({B * N, C + 1});
  const auto batch_offset =
      (torch::arange(B, torch::TensorOptions().dtype(torch::kLong)) * N).view({B, 1});

  auto coverage = torch::zeros({B * N}, opts);
  auto denom = torch::zeros({B * N}, opts);
  auto numer = torch::zeros({B * N, C + 1}, opts);

  constexpr std::array<std::array<int, 2>, 4> kCorners = {{{0, 0}, {1, 0}, {0, 1}, {1, 1}}};
  for (const auto& [dx, dy] : kCorners) {
    const auto wx = dx ? ax : 1.0 - ax;
    const auto wy = dy ? ay : 1.0 - ay;
    const auto xi = (x0 + dx).to(torch::kLong);
    const auto yi = (y0 + dy).to(torch::kLong);
    const auto inside = emitting & (xi >= 0) & (xi < W) & (yi >= 0) & (yi < H);
    const auto bilinear = torch::where(inside, wx * wy, torch::zeros_like(ax)).reshape({B * N});
    const auto index =
        (torch::where(inside, yi * W + xi, torch::zeros_like(xi)) + batch_offset)
            .reshape({B * N});
    const auto weighted = bilinear * importance.reshape({B * N});
    coverage = coverage.index_add(0, index, bilinear);
    denom = denom.index_add(0, index, weighted);
    numer = numer.index_add(0, index, carried * weighted.unsqueeze(1));
  }

  const auto has_weight = denom > 0;
  const auto safe_denom = torch::where(has_weight, denom, torch::ones_like(denom));
  const auto normalized = (numer / safe_denom.unsqueeze(1)) *
                          has_weight.unsqueeze(1).to(opts.dtype());
  const auto channels = normalized.view({B, H, W, C + 1}).permute({0, 3, 1, 2});

  SplatOutput out;
  out.values = channels.narrow(1, 0, C);
  out.disparity = channels.narrow(1, C, 1);
  out.coverage = coverage.view({B, 1, H, W});
  return out;
}

namespace {

WarpResult finish(const SplatOutput& s, const SplatConfig& cfg) {
  const auto covered = (s.coverage >= cfg.weight_floor).to(s.coverage.dtype());
  WarpResult r;
  r.mask = s.coverage.clamp(0.0, 1.0) * covered;
  r.image.rgb = s.values.narrow(1, 0, 3) * covered;
  r.image.validity = s.values.narrow(1, 3, 1).clamp(0.0, 1.0) * covered;
  r.image.disparity = s.disparity.clamp(0.0, 1.0) * covered;
  return r;
}

}  // namespace

WarpResult warp(const RGBDImage& src, std::span<const CameraPose> relative,
                const CameraIntrinsics& k, const SplatConfig& cfg) {
  const auto values = torch::cat({src.rgb, src.validity}, 1);
  return finish(splat(src.disparity, values, relative, k, cfg), cfg);
}

WarpResult warp(const RGBDImage& src, const CameraPose& relative,
                const CameraIntrinsics& k, const SplatConfig& cfg) {
  return warp(src, std::span<const CameraPose>(&relative, 1), k, cfg);
}

WarpResult cycle_warp(const RGBDImage& src, std::span<const CameraPose> virtual_pose,
                      const CameraIntrinsics& k, const SplatConfig& cfg) {
  const WarpResult there = warp(src, virtual_pose, k, cfg);

  std::vector<CameraPose> back;
  back.reserve(virtual_pose.size());
  for (const auto& p : virtual_pose) back.push_back(invert(p));

  // Binary hole mask at the virtual view; it only softens where the return
  // splat mixes covered and uncovered neighbours.
  const auto virtual_mask = (there.mask > 0).to(there.mask.dtype());
  const auto values =
      torch::cat({there.image.rgb, there.image.validity, virtual_mask}, 1);
  const SplatOutput s = splat(there.image.disparity, values, back, k, cfg);
  const auto covered = (s.coverage >= cfg.weight_floor).to(s.coverage.dtype());

  WarpResult r;
  r.mask = s.values.narrow(1, 4, 1).clamp(0.0, 1.0) * covered;
  r.image.rgb = s.values.narrow(1, 0, 3) * r.mask;
  r.image.validity = s.values.narrow(1, 3, 1).clamp(0.0, 1.0) * r.mask;
  r.image.disparity = s.disparity.clamp(0.0, 1.0) * r.mask;
  return r;
}

WarpResult cycle_warp(const RGBDImage& src, const CameraPose& virtual_pose,
                      const CameraIntrinsics& k, const SplatConfig& cfg) {
  return cycle_warp(src, std::span<const CameraPose>(&virtual_pose, 1), k, cfg);
}

Eigen::Matrix3d infinity_homography(const Eigen::Matrix3d& rotation,
                                    const CameraIntrinsics& k) {
  return infinity_homography(rotation, k, k);
}

Eigen::Matrix3d infinity_homography(const Eigen::Matrix3d& rotation,
                                    const CameraIntrinsics& from,
                                    const CameraIntrinsics& to) {
  return to.matrix() * rotation.transpose() * from.inverse_matrix();
}

Resampled resample_homography(const torch::Tensor& image,
                              const Eigen::Matrix3d& target_from_source,
                              int64_t out_height, int64_t out_width) {
  if (image.dim() != 4) throw std::invalid_argument("resample_homography: expects NCHW");
  const int64_t B = image.size(0);
  const int64_t H = image.size(2);
  const int64_t W = image.size(3);
  const Eigen::Matrix3d source_from_target = target_from_source.inverse();

  // Sampling grid in grid_sample's normalised coordinates (align_corners).
  auto grid = torch::empty({1, out_height, out_width, 2}, torch::kFloat64);
  auto valid = torch::empty({1, 1, out_height, out_width}, torch::kFloat64);
  auto g = grid.accessor<double, 4>();
  auto vv = valid.accessor<double, 4>();
  for (int64_t y = 0; y < out_height; ++y) {
    for (int64_t x = 0; x < out_width; ++x) {
      const Eigen::Vector3d q = source_from_target * Eigen::Vector3d(x, y, 1.0);
      const bool ok = q.z() > 1e-12;
      const double sx = ok ? q.x() / q.z() : -1e6;
      const double sy = ok ? q.y() / q.z() : -1e6;
      g[0][y][x][0] = W > 1 ? 2.0 * sx / (W - 1) - 1.0 : 0.0;
      g[0][y][x][1] = H > 1 ? 2.0 * sy / (H - 1) - 1.0 : 0.0;
      vv[0][0][y][x] = ok ? 1.0 : 0.0;
    }
  }
  const auto dtype = image.scalar_type();
  grid = grid.to(dtype).expand({B, out_height, out_width, 2});
  valid = valid.to(dtype).expand({B, 1, out_height, out_width});

  namespace F = torch::nn::functional;
  const auto opts = F::GridSampleFuncOptions()
                        .mode(torch::kBilinear)
                        .padding_mode(torch::kZeros)
                        .align_corners(true);
  Resampled r;
  r.image = F::grid_sample(image, grid, opts);
  const auto ones = torch::ones({B, 1, H, W}, image.options());
  r.inside = (F::grid_sample(ones, grid, opts) > 1.0 - 1e-6).to(dtype) * valid;
  return r;
}

torch::Tensor binarize_mask(const torch::Tensor& mask, double threshold) {
  return (mask >= threshold).to(mask.scalar_type());
}

}  // namespace pvg
