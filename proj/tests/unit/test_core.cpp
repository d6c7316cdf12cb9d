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
#include <numbers>

#include "pvg/core.hpp"
#include "pvg/geometry.hpp"
#include "pvg/image.hpp"
#include "test_util.hpp"

using namespace pvg;

TEST_CASE("compose with identity and inverse") {
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    const auto p = test::random_pose(rng);
    CHECK(approx_equal(compose(CameraPose::Identity(), p), p, 1e-12));
    CHECK(approx_equal(compose(p, invert(p)), CameraPose::Identity(), 1e-6));
  }
}

TEST_CASE("compose of z rotations adds angles") {
  const double c30 = std::sqrt(3.0) / 2, s30 = 0.5;
  Eigen::Matrix3d a, b, expected;
  a << c30, -s30, 0, s30, c30, 0, 0, 0, 1;
  b << s30, -c30, 0, c30, s30, 0, 0, 0, 1;  // 60 degrees
  expected << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  CameraPose pa, pb;
  pa.rotation = a;
  pb.rotation = b;
  CHECK((compose(pa, pb).rotation - expected).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((rotation_z(deg_to_rad(30.0)) - a).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("compose applies b first") {
  const auto a = translate(1.0, 0.0, 0.0);
  CameraPose b;
  b.rotation = rotation_z(deg_to_rad(90.0));
  // b maps x-axis to y-axis, then a shifts by +x.
  const Eigen::Vector3d x = compose(a, b).apply(Eigen::Vector3d(1, 0, 0));
  CHECK((x - Eigen::Vector3d(1, 1, 0)).norm() < 1e-12);
}

TEST_CASE("invert examples") {
  CHECK(approx_equal(invert(CameraPose::Identity()), CameraPose::Identity(), 0.0));
  CHECK(approx_equal(invert(translate(1.0, 0.0, 0.0)), translate(-1.0, 0.0, 0.0), 1e-15));
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const auto p = test::random_pose(rng, 3.0, 180.0);
    CHECK(approx_equal(invert(invert(p)), p, 1e-9));
  }
}

TEST_CASE("pose group laws over random poses") {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const auto a = test::random_pose(rng, 2.0, 90.0);
    const auto b = test::random_pose(rng, 2.0, 90.0);
    const auto c = test::random_pose(rng, 2.0, 90.0);
    CHECK(approx_equal(compose(compose(a, b), c), compose(a, compose(b, c)), 1e-6));
    CHECK(approx_equal(compose(invert(a), a), CameraPose::Identity(), 1e-6));
    CHECK(is_valid_pose(compose(a, b)));
  }
}

TEST_CASE("pose validity") {
  CameraPose p;
  CHECK(is_valid_pose(p));
  p.rotation(0, 0) = -1;  // reflection, det = -1
  CHECK_FALSE(is_valid_pose(p));
  p.rotation = Eigen::Matrix3d::Identity() * 1.01;
  CHECK_FALSE(is_valid_pose(p));
}

TEST_CASE("euler pose sign conventions") {
  // Positive yaw turns the optical axis toward +x (right).
  const auto yaw = euler_pose(deg_to_rad(10.0), 0.0, 0.0, Eigen::Vector3d(Eigen::Vector3d::Zero()));
  CHECK(yaw.apply(Eigen::Vector3d(0, 0, 1)).x() > 0);
  // Positive pitch looks up, toward -y.
  const auto pitch = euler_pose(0.0, deg_to_rad(10.0), 0.0, Eigen::Vector3d(Eigen::Vector3d::Zero()));
  CHECK(pitch.apply(Eigen::Vector3d(0, 0, 1)).y() < 0);
}

TEST_CASE("unproject examples") {
  const auto k = CameraIntrinsics::FromFov(64, 48, 60.0);
  const Eigen::Vector2d pp(k.cx, k.cy);
  CHECK((unproject(pp, 1.0, k) - Eigen::Vector3d(0, 0, 1)).norm() < 1e-12);
  CHECK((unproject(pp, 0.5, k) - Eigen::Vector3d(0, 0, 2)).norm() < 1e-12);
  CHECK((unproject(Eigen::Vector2d(k.cx + k.fx, k.cy), 1.0, k) - Eigen::Vector3d(1, 0, 1)).norm() <
        1e-12);
  CHECK_THROWS_AS(unproject(pp, 0.0, k), std::domain_error);
  CHECK_THROWS_AS(unproject(pp, -0.2, k), std::domain_error);
}

TEST_CASE("project inverts unproject") {
  const auto k = CameraIntrinsics::FromFov(64, 64, 75.0);
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    const Eigen::Vector2d px(uniform(rng, 0, 63), uniform(rng, 0, 63));
    const double d = uniform(rng, 1e-4, 1.0);
    CHECK((project(unproject(px, d, k), k) - px).norm() < 1e-5);
  }
}

TEST_CASE("intrinsics validity and matrices") {
  auto k = CameraIntrinsics::FromFov(32, 32, 90.0);
  CHECK(k.valid());
  CHECK(k.fx == doctest::Approx(16.0));
  CHECK((k.matrix() * k.inverse_matrix() - Eigen::Matrix3d::Identity()).norm() < 1e-12);
  k.cx = 32;
  CHECK_FALSE(k.valid());
  const auto big = CameraIntrinsics::FromFov(32, 32, 90.0).resized(64, 64);
  CHECK(big.fx == doctest::Approx(32.0));
  CHECK(big.cx == doctest::Approx(31.5));
}

TEST_CASE("trajectory plan") {
  TrajectoryPlan plan;
  CHECK_THROWS_AS(plan.validate(), std::invalid_argument);
  plan.push_back(translate(0.0, 0.0, 1.0), Provenance::kUser);
  plan.push_back(translate(1.0, 0.0, 0.0), Provenance::kAutopilot);
  plan.validate();
  CHECK((plan.cumulative().translation - Eigen::Vector3d(1, 0, 1)).norm() < 1e-12);
  CHECK(provenance_from_string(to_string(Provenance::kCyclic)) == Provenance::kCyclic);
  CHECK_THROWS_AS(provenance_from_string("teleport"), std::invalid_argument);
  CameraPose bad;
  bad.rotation *= 2.0;
  plan.push_back(bad, Provenance::kUser);
  CHECK_THROWS_AS(plan.validate(), std::invalid_argument);
}

TEST_CASE("rgbd image invariants") {
  auto img = RGBDImage::Create(torch::rand({3, 4, 5}), torch::full({1, 4, 5}, 0.5));
  CHECK(img.batch() == 1);
  CHECK(img.validity.sum().item<double>() == 20.0);
  img.validate();

  auto bad = img.clone();
  bad.disparity.index_put_({0, 0, 1, 1}, 0.0);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.validity.index_put_({0, 0, 1, 1}, 0.0);
  bad.validate();  // zero disparity is fine where untrusted

  auto nan = img.clone();
  nan.rgb.index_put_({0, 0, 0, 0}, std::nan(""));
  CHECK_THROWS_AS(nan.validate(), std::invalid_argument);

  auto bright = img.clone();
  bright.rgb.index_put_({0, 1, 0, 0}, 1.5);
  CHECK_THROWS_AS(bright.validate(), std::invalid_argument);

  CHECK_THROWS_AS(RGBDImage::Create(torch::rand({3, 4, 5}), torch::rand({1, 4, 6})).validate(),
                  std::invalid_argument);

  const auto stacked = RGBDImage::Stack({img, img});
  CHECK(stacked.batch() == 2);
  CHECK(torch::equal(stacked.item(1).rgb, img.rgb));
}
