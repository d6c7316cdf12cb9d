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

#include <algorithm>
#include <fstream>
#include <set>

#include <opencv2/imgcodecs.hpp>

#include "pvg/data.hpp"
#include "pvg/image_io.hpp"
#include "pvg/renderer.hpp"
#include "test_util.hpp"

using namespace pvg;
using torch::indexing::Slice;

namespace {

void write_solid(const std::filesystem::path& p, int w, int h, cv::Scalar bgr) {
  cv::imwrite(p.string(), cv::Mat(h, w, CV_8UC3, bgr));
}

}  // namespace

TEST_CASE("render_synthetic is a pure function of scene and pose") {
  const auto scene = SyntheticScene::Random(11);
  const auto k = default_intrinsics(32);
  const auto pose = euler_pose(0.3, -0.05, 0.0, Eigen::Vector3d(0.1, 0.0, 0.2));
  const auto a = render_synthetic(scene, pose, k);
  const auto b = render_synthetic(SyntheticScene::Random(11), pose, k);
  CHECK(torch::equal(a.rgb, b.rgb));
  CHECK(torch::equal(a.disparity, b.disparity));
  CHECK_NOTHROW(a.validate());
  CHECK_FALSE(torch::equal(a.rgb, render_synthetic(SyntheticScene::Random(12), pose, k).rgb));
}

TEST_CASE("wall at depth 5 renders disparity 0.2 below the horizon") {
  SyntheticScene scene = SyntheticScene::Random(3);
  scene.camera_height = 100.0;
  scene.wall_depth = 5.0;
  const int size = 32;
  const auto img = render_synthetic(scene, CameraPose::Identity(), default_intrinsics(size));
  const auto below = img.disparity.index({0, 0, Slice(size / 2, size)});
  CHECK(test::max_abs(below - 0.2) < 1e-6);
  const auto above = img.disparity.index({0, 0, Slice(0, size / 2)});
  CHECK(test::max_abs(above - kSkyDisparity) < 1e-12);
}

TEST_CASE("sky rays get the sky disparity") {
  const auto scene = SyntheticScene::Random(4);
  const auto k = default_intrinsics(32);
  const auto img = render_synthetic(scene, euler_pose(0.0, deg_to_rad(25.0), 0.0, Eigen::Vector3d(Eigen::Vector3d::Zero())), k);
  CHECK(img.disparity.index({0, 0, 0}).max().item<double>() == doctest::Approx(kSkyDisparity));
}

TEST_CASE("warping a render matches re-rendering") {
  const int size = 64;
  const auto k = default_intrinsics(size);
  Rng rng(2024);
  SplatConfig cfg;
  cfg.beta = 30.0;
  double worst = 0;
  for (int pair = 0; pair < 50; ++pair) {
    const auto scene = SyntheticScene::Random(1000 + pair);
    const auto p = euler_pose(uniform(rng, -M_PI, M_PI), deg_to_rad(uniform(rng, -4, 2)), 0.0,
                              Eigen::Vector3d(Eigen::Vector3d::Zero()));
    const auto rel = test::random_pose(rng, 0.2 / std::sqrt(3.0), 5.0);
    const auto q = compose(p, rel);
    const auto src = render_synthetic(scene, p, k);
    const auto ref = render_synthetic(scene, q, k);
    const auto w = warp(src, compose(invert(p), q), k, cfg);
    const auto covered = (w.mask >= 0.5).expand_as(ref.rgb);
    REQUIRE(covered.sum().item<int64_t>() > size * size / 4);
    const double err = (w.image.rgb - ref.rgb).abs().masked_select(covered).mean().item<double>();
    worst = std::max(worst, err);
  }
  MESSAGE("worst mean abs error " << worst);
  CHECK(worst <= 3e-2);
}

TEST_CASE("synthetic collections are valid and reproducible") {
  const auto a = synthetic_collection(6, 32, 9);
  const auto b = synthetic_collection(6, 32, 9);
  REQUIRE(a.size() == 6);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK_NOTHROW(a[i].image.validate());
    CHECK(torch::equal(a[i].image.rgb, b[i].image.rgb));
    CHECK(a[i].image.disparity.max().item<double>() <= 1.0);
  }
}

TEST_CASE("scene json round trip") {
  auto s = SyntheticScene::Random(5);
  s.wall_depth = 3.0;
  const auto r = SyntheticScene::FromJson(s.to_json());
  CHECK(r.to_json() == s.to_json());
  auto j = s.to_json();
  j["camera_height"] = 0.1;
  CHECK_THROWS_AS(SyntheticScene::FromJson(j), std::invalid_argument);
}

TEST_CASE("load_collection skips unreadable files") {
  test::TempDir dir("load");
  for (int i = 0; i < 3; ++i) write_solid(dir.path() / ("img" + std::to_string(i) + ".png"), 40, 40, {10.0 * i, 50, 90});
  std::ofstream(dir.path() / "broken.png") << "this is not a png";
  DepthProvider depth;
  depth.backend = DepthBackend::kConstantPlane;
  const auto c = load_collection(dir.path(), 16, depth, 0);
  CHECK(c.items.size() == 3);
  REQUIRE(c.warnings.size() == 1);
  CHECK(c.warnings[0].find("broken.png") != std::string::npos);
  for (const auto& it : c.items) {
    CHECK(it.rgb.sizes() == torch::IntArrayRef({1, 3, 16, 16}));
    CHECK_NOTHROW(it.validate());
  }
}

TEST_CASE("non-square input is centre cropped") {
  // 200x100: left and right quarters are red and blue, the centre is green.
  cv::Mat m(100, 200, CV_8UC3, cv::Scalar(0, 0, 255));
  m(cv::Rect(50, 0, 100, 100)).setTo(cv::Scalar(0, 255, 0));
  m(cv::Rect(150, 0, 50, 100)).setTo(cv::Scalar(255, 0, 0));
  const auto out = rgb_from_mat(center_crop_resize(m, 32)).unsqueeze(0);
  CHECK(out.sizes() == torch::IntArrayRef({1, 3, 32, 32}));
  CHECK(out.index({0, 1}).min().item<double>() == doctest::Approx(1.0));
  CHECK(out.index({0, 0}).max().item<double>() == doctest::Approx(0.0));
  CHECK(out.index({0, 2}).max().item<double>() == doctest::Approx(0.0));

  test::TempDir dir("crop");
  cv::imwrite((dir.path() / "wide.png").string(), m);
  DepthProvider depth;
  depth.backend = DepthBackend::kConstantPlane;
  const auto c = load_collection(dir.path(), 32, depth, 0);
  REQUIRE(c.items.size() == 1);
  CHECK(torch::allclose(c.items[0].rgb.to(torch::kFloat64), out.to(torch::kFloat64)));
}

TEST_CASE("collection order depends only on the seed") {
  test::TempDir dir("order");
  for (int i = 0; i < 8; ++i) write_solid(dir.path() / ("f" + std::to_string(i) + ".png"), 8, 8, {20.0 * i, 0, 0});
  DepthProvider depth;
  depth.backend = DepthBackend::kConstantPlane;
  const auto a = load_collection(dir.path(), 8, depth, 17);
  const auto b = load_collection(dir.path(), 8, depth, 17);
  CHECK(a.paths == b.paths);
  bool differs = false;
  for (uint64_t s = 18; s < 24 && !differs; ++s) differs = load_collection(dir.path(), 8, depth, s).paths != a.paths;
  CHECK(differs);
}

TEST_CASE("load_collection errors") {
  test::TempDir dir("empty");
  DepthProvider depth;
  depth.backend = DepthBackend::kConstantPlane;
  CHECK_THROWS_AS(load_collection(dir.path(), 8, depth, 0), std::invalid_argument);
  const auto missing = dir.path() / "nope";
  try {
    load_collection(missing, 8, depth, 0);
    FAIL("expected an exception");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find(missing.string()) != std::string::npos);
  }
}

TEST_CASE("external depth files round trip through the written dataset") {
  test::TempDir dir("synthetic");
  write_synthetic_dataset(dir.path(), 3, 32, 5);
  CHECK(std::filesystem::exists(dir.path() / "000000.disp.png"));
  CHECK(std::filesystem::exists(dir.path() / "000002.json"));
  DepthProvider depth;
  const auto c = load_collection(dir.path(), 32, depth, 0);
  CHECK(c.items.size() == 3);
  for (const auto& w : c.warnings) MESSAGE(w);
  CHECK(c.warnings.empty());
  for (const auto& it : c.items) {
    CHECK(it.disparity.min().item<double>() >= depth.normalize_min - 1e-6);
    CHECK(it.disparity.max().item<double>() <= depth.normalize_max + 1e-6);
  }
  DepthProvider synth;
  synth.backend = DepthBackend::kSynthetic;
  CHECK_THROWS(synth.disparity_for(dir.path() / "000000.png", 32));
}

TEST_CASE("depth normalisation and backend names") {
  DepthProvider d;
  const auto n = d.normalize(torch::tensor({2.0, 4.0, 6.0}));
  CHECK(n[0].item<double>() == doctest::Approx(0.01));
  CHECK(n[1].item<double>() == doctest::Approx(0.505));
  CHECK(n[2].item<double>() == doctest::Approx(1.0));
  for (auto b : {DepthBackend::kSynthetic, DepthBackend::kConstantPlane, DepthBackend::kExternalFile}) {
    CHECK(depth_backend_from_string(to_string(b)) == b);
  }
  CHECK_THROWS_AS(depth_backend_from_string("midas"), std::invalid_argument);
  CHECK(disparity_path_for("a/b.png") == std::filesystem::path("a/b.disp.png"));
}

TEST_CASE("dataset batches are deterministic epoch permutations") {
  std::vector<RGBDImage> items;
  for (int i = 0; i < 5; ++i) {
    items.push_back(RGBDImage::Create(torch::full({1, 3, 4, 4}, i / 10.0), torch::full({1, 1, 4, 4}, 0.5)));
  }
  const Dataset a(items, 3), b(items, 3);
  std::vector<int64_t> first_epoch;
  for (int64_t step = 0; step < 5; ++step) {
    const auto ia = a.batch_indices(step, 2);
    CHECK(ia == b.batch_indices(step, 2));
    for (auto i : a.batch_indices(step, 1)) first_epoch.push_back(i);
  }
  std::sort(first_epoch.begin(), first_epoch.end());
  CHECK(first_epoch == std::vector<int64_t>{0, 1, 2, 3, 4});
  CHECK(a.batch(7, 3).batch() == 3);
  CHECK(a.image_size() == 4);
  CHECK_THROWS_AS(Dataset({}, 0), std::invalid_argument);
}
