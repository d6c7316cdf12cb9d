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

#include "pvg_doctest.hpp"

#include <cmath>
#include <vector>

#include "pvg/renderer.hpp"
#include "test_util.hpp"

using namespace pvg;

namespace {

// Scalar re-implementation of forward splatting: every source point spreads
// bilinear weight times exp(beta * d) over its four neighbours.
struct Oracle {
  int H, W, C;
  std::vector<double> numer, denom, coverage, disp_numer;

  double value(int c, int y, int x) const {
    const int i = y * W + x;
    return denom[i] > 0 ? numer[c * H * W + i] / denom[i] : 0.0;
  }
  double disparity(int y, int x) const {
    const int i = y * W + x;
    return denom[i] > 0 ? disp_numer[i] / denom[i] : 0.0;
  }
};

Oracle oracle_splat(const torch::Tensor& values, const torch::Tensor& disparity,
                    const CameraPose& pose, const CameraIntrinsics& k, double beta) {
  const auto v = values.to(torch::kFloat64).contiguous();
  const auto d = disparity.to(torch::kFloat64).contiguous();
  Oracle o{k.height, k.width, static_cast<int>(v.size(1)), {}, {}, {}, {}};
  const int N = o.H * o.W;
  o.numer.assign(o.C * N, 0.0);
  o.denom.assign(N, 0.0);
  o.coverage.assign(N, 0.0);
  o.disp_numer.assign(N, 0.0);
  auto va = v.accessor<double, 4>();
  auto da = d.accessor<double, 4>();
  for (int y = 0; y < o.H; ++y) {
    for (int x = 0; x < o.W; ++x) {
      const double dv = da[0][0][y][x];
      if (dv <= 1e-8) continue;
      const Eigen::Vector3d p = unproject(Eigen::Vector2d(x, y), dv, k);
      const Eigen::Vector3d q = pose.rotation.transpose() * (p - pose.translation);
      if (q.z() <= 1e-3) continue;
      const Eigen::Vector2d t = project(q, k);
      const double x0 = std::floor(t.x()), y0 = std::floor(t.y());
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          const int xi = static_cast<int>(x0) + dx, yi = static_cast<int>(y0) + dy;
          if (xi < 0 || xi >= o.W || yi < 0 || yi >= o.H) continue;
          const double wb = (dx ? t.x() - x0 : 1 - (t.x() - x0)) * (dy ? t.y() - y0 : 1 - (t.y() - y0));
          const double w = wb * std::exp(beta * dv);
          const int i = yi * o.W + xi;
          o.coverage[i] += wb;
          o.denom[i] += w;
          o.disp_numer[i] += w / q.z();
          for (int c = 0; c < o.C; ++c) o.numer[c * N + i] += w * va[0][c][y][x];
        }
      }
    }
  }
  return o;
}

// Low-frequency texture so that resampling blur stays small.
torch::Tensor smooth_rgb(int64_t h, int64_t w, double phase = 0.0) {
  const auto y = torch::arange(h, torch::kFloat64).view({1, 1, h, 1});
  const auto x = torch::arange(w, torch::kFloat64).view({1, 1, 1, w});
  return torch::cat({0.5 + 0.3 * torch::sin(0.21 * x + 0.13 * y + phase),
                     0.5 + 0.3 * torch::cos(0.17 * x - 0.11 * y + phase),
                     0.5 + 0.2 * torch::sin(0.07 * (x + y) + phase)},
                    1);
}

}  // namespace

TEST_CASE("identity warp reproduces the source") {
  Rng rng(10);
  const auto k = CameraIntrinsics::FromFov(8, 8, 60.0);
  for (auto dtype : {torch::kFloat32, torch::kFloat64}) {
    const auto src = test::random_rgbd(rng, 2, 8, 8, 0.05, 1.0, dtype);
    const auto out = warp(src, CameraPose::Identity(), k);
    CHECK(test::max_abs(out.image.rgb - src.rgb) < 1e-4);
    CHECK(test::max_abs(out.image.disparity - src.disparity) < 1e-4);
    CHECK(out.mask.min().item<double>() > 1.0 - 1e-4);
  }
}

TEST_CASE("2x2 forward motion matches the brute-force splat") {
  Rng rng(11);
  const auto k = CameraIntrinsics::FromFov(2, 2, 90.0);
  const auto src = test::random_rgbd(rng, 1, 2, 2, 0.3, 1.0);
  const auto pose = translate(0.0, 0.0, 0.2);
  const SplatConfig cfg;
  const auto s = splat(src.disparity, src.rgb, std::span<const CameraPose>(&pose, 1), k, cfg);
  const auto o = oracle_splat(src.rgb, src.disparity, pose, k, cfg.beta);
  auto sv = s.values.accessor<double, 4>();
  auto sd = s.disparity.accessor<double, 4>();
  auto sc = s.coverage.accessor<double, 4>();
  for (int y = 0; y < 2; ++y) {
    for (int x = 0; x < 2; ++x) {
      CHECK(sc[0][0][y][x] == doctest::Approx(o.coverage[y * 2 + x]).epsilon(1e-12));
      CHECK(sd[0][0][y][x] == doctest::Approx(o.disparity(y, x)).epsilon(1e-12));
      for (int c = 0; c < 3; ++c) {
        CHECK(sv[0][c][y][x] == doctest::Approx(o.value(c, y, x)).epsilon(1e-12));
      }
    }
  }
  // Coverage is split, so the result is more than a copy of the input.
  CHECK(s.coverage.sum().item<double>() < 4.0);
}

TEST_CASE("random scenes match the brute-force splat") {
  Rng rng(12);
  const auto k = CameraIntrinsics::FromFov(12, 10, 70.0);
  for (int trial = 0; trial < 5; ++trial) {
    const auto src = test::random_rgbd(rng, 1, 10, 12, 0.1, 1.0);
    const auto pose = test::random_pose(rng, 0.2, 5.0);
    const SplatConfig cfg{uniform(rng, 0.0, 20.0), 0.05};
    const auto s = splat(src.disparity, src.rgb, std::span<const CameraPose>(&pose, 1), k, cfg);
    const auto o = oracle_splat(src.rgb, src.disparity, pose, k, cfg.beta);
    auto sv = s.values.accessor<double, 4>();
    auto sc = s.coverage.accessor<double, 4>();
    double worst = 0;
    for (int y = 0; y < 10; ++y) {
      for (int x = 0; x < 12; ++x) {
        worst = std::max(worst, std::abs(sc[0][0][y][x] - o.coverage[y * 12 + x]));
        for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(sv[0][c][y][x] - o.value(c, y, x)));
      }
    }
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("fronto-parallel plane under x translation shifts the image") {
  const int64_t S = 16;
  const auto k = CameraIntrinsics::FromFov(S, S, 60.0);
  const double d = 0.5;
  const int shift = 2;
  const double tx = shift / (k.fx * d);
  Rng rng(13);
  const auto src = RGBDImage::Create(test::random_uniform(rng, {1, 3, S, S}, 0, 1),
                                     torch::full({1, 1, S, S}, d, torch::kFloat64));
  const auto out = warp(src, translate(tx, 0.0, 0.0), k);
  using torch::indexing::Slice;
  const auto kept = out.image.rgb.index({Slice(), Slice(), Slice(), Slice(0, S - shift)});
  const auto expected = src.rgb.index({Slice(), Slice(), Slice(), Slice(shift, S)});
  CHECK(test::max_abs(kept - expected) < 1e-4);
  CHECK(out.mask.index({Slice(), Slice(), Slice(), Slice(0, S - shift)}).min().item<double>() >
        1 - 1e-6);
  CHECK(test::max_abs(out.mask.index({Slice(), Slice(), Slice(), Slice(S - shift, S)})) == 0.0);
  CHECK(test::max_abs(out.image.rgb.index({Slice(), Slice(), Slice(), Slice(S - shift, S)})) == 0.0);
}

TEST_CASE("splat weight is conserved") {
  Rng rng(14);
  const auto k = CameraIntrinsics::FromFov(16, 16, 60.0);
  for (int trial = 0; trial < 10; ++trial) {
    const auto src = test::random_rgbd(rng, 1, 16, 16, 0.1, 1.0);
    const auto pose = test::random_pose(rng, 0.3, 10.0);
    const auto s = splat(src.disparity, src.rgb, std::span<const CameraPose>(&pose, 1), k, {});
    const auto o = oracle_splat(src.rgb, src.disparity, pose, k, 10.0);
    double emitted = 0;
    for (double c : o.coverage) emitted += c;
    const double total = s.coverage.sum().item<double>();
    CHECK(std::abs(total - emitted) <= 1e-4 * emitted);
  }
}

TEST_CASE("nearer splat wins as beta grows") {
  const auto k = CameraIntrinsics::FromFov(8, 1, 60.0);
  auto disp = torch::full({1, 1, 1, 8}, 1e-9, torch::kFloat64);
  disp.index_put_({0, 0, 0, 2}, 0.8);
  disp.index_put_({0, 0, 0, 4}, 0.2);
  // Chosen so both points land on the same sub-pixel position.
  const double tx = -2.0 / (0.6 * k.fx);
  const auto pose = translate(tx, 0.0, 0.0);
  const auto values = torch::zeros({1, 1, 1, 8}, torch::kFloat64);
  double previous = 0;
  for (double beta : {0.0, 2.0, 10.0, 50.0, 200.0}) {
    const auto s = splat(disp, values, std::span<const CameraPose>(&pose, 1), k, {beta, 0.05});
    const double got = s.disparity.index({0, 0, 0, 4}).item<double>();
    CHECK(got >= 0.2 - 1e-12);
    CHECK(got <= 0.8 + 1e-12);
    CHECK(got >= previous);
    previous = got;
  }
  CHECK(previous > 0.8 - 1e-6);
}

TEST_CASE("underflowing disparities give an empty mask") {
  const auto k = CameraIntrinsics::FromFov(8, 8, 60.0);
  const auto src = RGBDImage::Create(torch::rand({1, 3, 8, 8}), torch::full({1, 1, 8, 8}, 1e-12));
  const auto out = warp(src, translate(0.1, 0.0, 0.0), k);
  CHECK(out.mask.abs().sum().item<double>() == 0.0);
  CHECK(torch::isfinite(out.image.rgb).all().item<bool>());
}

TEST_CASE("warp gradient matches central differences") {
  Rng rng(15);
  const auto k = CameraIntrinsics::FromFov(8, 8, 60.0);
  const auto base = test::random_rgbd(rng, 1, 8, 8, 0.2, 0.9);
  const auto pose = test::random_pose(rng, 0.1, 3.0);
  const auto wr = test::random_uniform(rng, {1, 3, 8, 8}, -1, 1);
  const auto wd = test::random_uniform(rng, {1, 1, 8, 8}, -1, 1);
  auto loss = [&](const torch::Tensor& rgb, const torch::Tensor& d) {
    const auto out = warp(RGBDImage::Create(rgb, d), pose, k);
    return (out.image.rgb * wr).sum() + (out.image.disparity * wd).sum();
  };
  auto rgb = base.rgb.clone().requires_grad_(true);
  auto d = base.disparity.clone().requires_grad_(true);
  loss(rgb, d).backward();

  const double eps = 1e-6;
  auto check = [&](const torch::Tensor& analytic, const torch::Tensor& x, bool is_rgb) {
    auto fd = torch::zeros_like(x);
    auto flat = fd.view({-1});
    for (int64_t i = 0; i < x.numel(); ++i) {
      auto plus = x.detach().clone();
      auto minus = x.detach().clone();
      plus.view({-1})[i] += eps;
      minus.view({-1})[i] -= eps;
      const double lp = is_rgb ? loss(plus, base.disparity).item<double>()
                               : loss(base.rgb, plus).item<double>();
      const double lm = is_rgb ? loss(minus, base.disparity).item<double>()
                               : loss(base.rgb, minus).item<double>();
      flat[i] = (lp - lm) / (2 * eps);
    }
    const double rel = (analytic - fd).norm().item<double>() / fd.norm().item<double>();
    CHECK(rel < 1e-3);
  };
  check(rgb.grad(), base.rgb, true);
  check(d.grad(), base.disparity, false);
}

TEST_CASE("cycle warp with identity pose") {
  Rng rng(16);
  const auto k = CameraIntrinsics::FromFov(8, 8, 60.0);
  const auto src = test::random_rgbd(rng, 1, 8, 8);
  const auto out = cycle_warp(src, CameraPose::Identity(), k);
  CHECK(test::max_abs(out.image.rgb - src.rgb) < 1e-4);
  CHECK(out.mask.min().item<double>() > 1 - 1e-4);
}

TEST_CASE("cycle warp of a plane keeps in-frame content") {
  const int64_t S = 32;
  const auto k = CameraIntrinsics::FromFov(S, S, 60.0);
  const double d = 0.4;
  const auto src = RGBDImage::Create(smooth_rgb(S, S), torch::full({1, 1, S, S}, d, torch::kFloat64));
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const CameraPose pose = translate(uniform(rng, -0.05, 0.05), uniform(rng, -0.05, 0.05),
                                      uniform(rng, -0.1, 0.1));
    const auto out = cycle_warp(src, pose, k);
    int checked = 0;
    double worst_mask = 1, worst_rgb = 0;
    for (int y = 0; y < S; ++y) {
      for (int x = 0; x < S; ++x) {
        const Eigen::Vector3d p = unproject(Eigen::Vector2d(x, y), d, k);
        const Eigen::Vector2d t = project(Eigen::Vector3d(p - pose.translation), k);
        // One pixel of margin keeps every bilinear footprint inside the frame.
        if (t.x() < 1 || t.x() > S - 2 || t.y() < 1 || t.y() > S - 2) continue;
        ++checked;
        worst_mask = std::min(worst_mask, out.mask.index({0, 0, y, x}).item<double>());
        for (int c = 0; c < 3; ++c) {
          worst_rgb = std::max(worst_rgb, std::abs(out.image.rgb.index({0, c, y, x}).item<double>() -
                                                   src.rgb.index({0, c, y, x}).item<double>()));
        }
      }
    }
    CHECK(checked > 300);
    CHECK(worst_mask > 1 - 1e-6);
    CHECK(worst_rgb < 2e-2);
  }
}

TEST_CASE("cycle warp disocclusion band on a two-layer scene") {
  const int64_t S = 32;
  const auto k = CameraIntrinsics::FromFov(S, S, 60.0);
  const double near = 0.8, far = 0.2;
  const int a = 12, b = 21, r0 = 10, r1 = 20;
  auto disp = torch::full({1, 1, S, S}, far, torch::kFloat64);
  disp.index_put_({0, 0, torch::indexing::Slice(r0, r1 + 1), torch::indexing::Slice(a, b + 1)}, near);
  const auto src = RGBDImage::Create(smooth_rgb(S, S), disp);
  // Lateral move with integer pixel shifts: 8 px for the square, 2 px for the plane.
  const double shift_unit = 10.0;
  const auto pose = translate(shift_unit / k.fx, 0.0, 0.0);
  const auto out = cycle_warp(src, pose, k, SplatConfig{60.0, 0.05});

  // Occlusion oracle: the plane slides 2 px left and the square 8 px, so plane
  // pixels whose virtual-view position falls under the shifted square vanish,
  // as do plane pixels that leave the frame.
  const int sn = static_cast<int>(std::lround(shift_unit * near));
  const int sf = static_cast<int>(std::lround(shift_unit * far));
  int mismatches = 0;
  for (int y = 0; y < S; ++y) {
    for (int x = 0; x < S; ++x) {
      const bool in_square = y >= r0 && y <= r1 && x >= a && x <= b;
      bool hole;
      if (in_square) {
        hole = x - sn < 0;
      } else {
        const int xv = x - sf;
        const bool hidden = y >= r0 && y <= r1 && xv >= a - sn && xv <= b - sn;
        hole = xv < 0 || hidden;
      }
      const double m = out.mask.index({0, 0, y, x}).item<double>();
      if (hole ? m > 1e-6 : m < 1 - 1e-6) ++mismatches;
    }
  }
  CHECK(mismatches == 0);
  // The band sits immediately left of the square.
  for (int x = a - (sn - sf); x < a; ++x) CHECK(out.mask.index({0, 0, 15, x}).item<double>() == 0.0);
  CHECK(out.mask.index({0, 0, 15, a - (sn - sf) - 1}).item<double>() > 1 - 1e-6);
}

TEST_CASE("infinity homography") {
  const auto k = CameraIntrinsics::FromFov(32, 24, 60.0);
  CHECK((infinity_homography(Eigen::Matrix3d::Identity(), k) - Eigen::Matrix3d::Identity())
            .cwiseAbs()
            .maxCoeff() < 1e-12);
  Rng rng(18);
  for (int i = 0; i < 20; ++i) {
    const Eigen::Matrix3d R = test::random_pose(rng, 0, 40).rotation;
    const Eigen::Matrix3d prod = infinity_homography(R, k) * infinity_homography(R.transpose(), k);
    CHECK((prod - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("far-field warp agrees with the infinity homography") {
  const int64_t S = 32;
  const auto k = CameraIntrinsics::FromFov(S, S, 60.0);
  const auto src = RGBDImage::Create(smooth_rgb(S, S, 0.4), torch::full({1, 1, S, S}, 1e-4, torch::kFloat64));
  Rng rng(19);
  for (int trial = 0; trial < 5; ++trial) {
    auto pose = test::random_pose(rng, 0.5, 6.0);
    const auto w = warp(src, pose, k);
    const auto h = resample_homography(src.rgb, infinity_homography(pose.rotation, k), S, S);
    const auto overlap = (w.mask > 0.999) & (h.inside > 0.5);
    CHECK(overlap.sum().item<int64_t>() > 200);
    const auto diff = ((w.image.rgb - h.image).abs() * overlap).max().item<double>();
    CHECK(diff < 1e-2);
  }
}

TEST_CASE("splat rejects mismatched shapes and bad configs") {
  const auto k = CameraIntrinsics::FromFov(8, 8, 60.0);
  const auto src = RGBDImage::Create(torch::rand({1, 3, 6, 8}), torch::full({1, 1, 6, 8}, 0.5));
  CHECK_THROWS_AS(warp(src, CameraPose::Identity(), k), std::invalid_argument);
  const auto ok = RGBDImage::Create(torch::rand({1, 3, 8, 8}), torch::full({1, 1, 8, 8}, 0.5));
  CHECK_THROWS_AS(warp(ok, CameraPose::Identity(), k, SplatConfig{-1.0, 0.05}), std::invalid_argument);
  CHECK_THROWS_AS(warp(ok, CameraPose::Identity(), k, SplatConfig{1.0, 1.5}), std::invalid_argument);
  std::vector<CameraPose> three(3);
  CHECK_THROWS_AS(warp(ok, three, k), std::invalid_argument);
}
