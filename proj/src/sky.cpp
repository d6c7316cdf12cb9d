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

#include "pvg/sky.hpp"

#include <cmath>
#include <stdexcept>

#include "pvg/image_io.hpp"
#include "pvg/renderer.hpp"

namespace pvg {

void SkyMaskConfig::validate() const {
  if (!(disparity_knee > 0 && disparity_knee < 1)) {
    throw std::invalid_argument("SkyMaskConfig: disparity_knee must lie in (0,1)");
  }
  if (!(softness > 0)) throw std::invalid_argument("SkyMaskConfig: softness must be > 0");
  if (row_prior_weight < 0) throw std::invalid_argument("SkyMaskConfig: row_prior_weight must be >= 0");
}

torch::Tensor sky_mask(const RGBDImage& img, const SkyMaskConfig& cfg) {
  cfg.validate();
  const auto raw = torch::sigmoid((cfg.disparity_knee - img.disparity) / cfg.softness);
  const double w = std::min(cfg.row_prior_weight, 1.0);
  if (w == 0.0) return raw;
  const int64_t H = img.height();
  const auto rows = torch::arange(H, img.disparity.options()).view({1, 1, H, 1});
  const auto prior = 1.0 - rows / static_cast<double>(std::max<int64_t>(H - 1, 1));
  return raw * (1.0 - w + w * prior);
}

SkyCanvas SkyCanvas::Create(const RGBDImage& start, const torch::Tensor& start_mask,
                            const CameraIntrinsics& k, double widen, double disparity_cap) {
  if (start.batch() != 1) throw std::invalid_argument("SkyCanvas: expects a single image");
  if (widen < 1.0) throw std::invalid_argument("SkyCanvas: widen must be >= 1");
  torch::NoGradGuard guard;
  SkyCanvas c;
  c.disparity_cap = disparity_cap;
  const int cw = static_cast<int>(std::lround(widen * k.width));
  const int ch = static_cast<int>(std::lround(widen * k.height));
  c.intrinsics = k;
  c.intrinsics.width = cw;
  c.intrinsics.height = ch;
  c.intrinsics.cx = 0.5 * (cw - 1);
  c.intrinsics.cy = 0.5 * (ch - 1);

  const Eigen::Matrix3d canvas_from_start =
      infinity_homography(Eigen::Matrix3d::Identity(), k, c.intrinsics);
  const auto src = torch::cat({start.rgb, start_mask}, 1).detach();
  const auto r = resample_homography(src, canvas_from_start, ch, cw);
  // start-view sky is fully covered; softer pixels keep their mask as partial coverage
  const auto m = r.image.narrow(1, 3, 1).clamp(0.0, 1.0);
  c.coverage = torch::where(m > 0.5, torch::ones_like(m), m) * r.inside;
  c.rgb = r.image.narrow(1, 0, 3) * r.inside;
  c.disparity = torch::full_like(c.coverage, disparity_cap);
  return c;
}

SkyCanvas SkyCanvas::clone() const {
  SkyCanvas c = *this;
  c.rgb = rgb.clone();
  c.disparity = disparity.clone();
  c.coverage = coverage.clone();
  return c;
}

void SkyCanvas::validate() const {
  if ((disparity > disparity_cap).any().item<bool>()) {
    throw std::invalid_argument("SkyCanvas: disparity above cap");
  }
  if ((coverage < 0).any().item<bool>() || (coverage > 1).any().item<bool>()) {
    throw std::invalid_argument("SkyCanvas: coverage outside [0,1]");
  }
}

SkyCorrection correct_sky(const RGBDImage& current, const Eigen::Matrix3d& rotation,
                          const SkyCanvas& canvas, const CameraIntrinsics& k,
                          const torch::Tensor& mask) {
  if (current.batch() != 1) throw std::invalid_argument("correct_sky: expects a single image");
  torch::NoGradGuard guard;
  const int64_t H = current.height();
  const int64_t W = current.width();
  const Eigen::Matrix3d relative = canvas.anchor_rotation.transpose() * rotation;
  const Eigen::Matrix3d current_from_canvas =
      infinity_homography(relative, canvas.intrinsics, k);

  const auto dtype = current.rgb.scalar_type();
  const auto canvas_stack = torch::cat({canvas.rgb, canvas.coverage}, 1).to(dtype);
  const auto seen = resample_homography(canvas_stack, current_from_canvas, H, W);
  const auto sky_rgb = seen.image.narrow(1, 0, 3);
  const auto coverage = (seen.image.narrow(1, 3, 1) * seen.inside).clamp(0.0, 1.0);

  const auto s = mask.to(dtype).clamp(0.0, 1.0);
  const auto alpha = s * coverage;

  SkyCorrection out;
  out.alpha = alpha;
  out.image.rgb = alpha * sky_rgb + (1.0 - alpha) * current.rgb;
  const auto is_sky = (s > 0.5) | (alpha > 0.5);
  out.image.disparity =
      torch::where(is_sky, current.disparity.clamp_max(canvas.disparity_cap), current.disparity);
  out.image.validity = current.validity;

  // Write newly generated sky back so later views reuse it instead of
  // outpainting it again.
  const Eigen::Matrix3d canvas_from_current = current_from_canvas.inverse();
  const auto back = resample_homography(torch::cat({out.image.rgb, s}, 1), canvas_from_current,
                                        canvas.intrinsics.height, canvas.intrinsics.width);
  const auto s_canvas = (back.image.narrow(1, 3, 1) * back.inside).clamp(0.0, 1.0);
  const auto old_cov = canvas.coverage.to(dtype);
  const auto new_cov = torch::maximum(old_cov, s_canvas);
  const auto gain = new_cov - old_cov;
  const auto grows = gain > 0;
  const auto blended = (old_cov * canvas.rgb.to(dtype) + gain * back.image.narrow(1, 0, 3)) /
                       torch::where(grows, new_cov, torch::ones_like(new_cov));

  out.canvas = canvas;
  out.canvas.rgb = torch::where(grows, blended, canvas.rgb.to(dtype)).to(canvas.rgb.scalar_type());
  out.canvas.coverage = new_cov.to(canvas.coverage.scalar_type());
  out.canvas.disparity = canvas.disparity.clone();
  return out;
}

SkyCorrection correct_sky(const RGBDImage& current, const Eigen::Matrix3d& rotation,
                          const SkyCanvas& canvas, const CameraIntrinsics& k,
                          const SkyMaskConfig& cfg) {
  return correct_sky(current, rotation, canvas, k, sky_mask(current, cfg));
}

void export_canvas(const SkyCanvas& canvas, const std::filesystem::path& stem) {
  write_png(stem.string() + "_rgb.png", canvas.rgb);
  write_png(stem.string() + "_coverage.png", canvas.coverage.expand({1, 3, -1, -1}));
}

}  // namespace pvg
