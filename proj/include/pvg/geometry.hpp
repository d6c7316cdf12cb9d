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

// Pose and pinhole-camera algebra. Camera frame is right-handed with +x right,
// +y down and +z forward.
//
// A Pose maps points from a child camera frame into its parent frame:
//     x_parent = rotation * x_child + translation
// so a relative pose "from c_{t-1} to c_t" is the new camera expressed in the
// old camera's frame, and compose(a, b) applies b first, then a.

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Dense>

namespace pvg {

template <typename Scalar>
struct Pose {
  using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
  using Matrix4 = Eigen::Matrix<Scalar, 4, 4>;
  using Vector3 = Eigen::Matrix<Scalar, 3, 1>;

  Matrix3 rotation = Matrix3::Identity();
  Vector3 translation = Vector3::Zero();

  static Pose Identity() { return Pose{}; }

  static Pose FromMatrix(const Matrix4& m) {
    Pose p;
    p.rotation = m.template topLeftCorner<3, 3>();
    p.translation = m.template topRightCorner<3, 1>();
    return p;
  }

  Matrix4 matrix() const {
    Matrix4 m = Matrix4::Identity();
    m.template topLeftCorner<3, 3>() = rotation;
    m.template topRightCorner<3, 1>() = translation;
    return m;
  }

  Vector3 apply(const Vector3& x) const { return rotation * x + translation; }

  template <typename Other>
  Pose<Other> cast() const {
    Pose<Other> p;
    p.rotation = rotation.template cast<Other>();
    p.translation = translation.template cast<Other>();
    return p;
  }
};

using CameraPose = Pose<double>;

template <typename Scalar>
Pose<Scalar> compose(const Pose<Scalar>& a, const Pose<Scalar>& b) {
  Pose<Scalar> out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

template <typename Scalar>
Pose<Scalar> invert(const Pose<Scalar>& p) {
  Pose<Scalar> out;
  out.rotation = p.rotation.transpose();
  out.translation = -(out.rotation * p.translation);
  return out;
}

template <typename Scalar>
bool is_valid_pose(const Pose<Scalar>& p, Scalar tol = Scalar(1e-6)) {
  if (!p.rotation.allFinite() || !p.translation.allFinite()) return false;
  const auto err = (p.rotation.transpose() * p.rotation -
                    Eigen::Matrix<Scalar, 3, 3>::Identity())
                       .cwiseAbs()
                       .maxCoeff();
  return err <= tol && std::abs(p.rotation.determinant() - Scalar(1)) <= tol;
}

template <typename Scalar>
bool approx_equal(const Pose<Scalar>& a, const Pose<Scalar>& b,
                  Scalar tol = Scalar(1e-6)) {
  return (a.rotation - b.rotation).cwiseAbs().maxCoeff() <= tol &&
         (a.translation - b.translation).cwiseAbs().maxCoeff() <= tol;
}

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> rotation_x(Scalar radians) {
  return Eigen::AngleAxis<Scalar>(radians, Eigen::Matrix<Scalar, 3, 1>::UnitX())
      .toRotationMatrix();
}

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> rotation_y(Scalar radians) {
  return Eigen::AngleAxis<Scalar>(radians, Eigen::Matrix<Scalar, 3, 1>::UnitY())
      .toRotationMatrix();
}

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> rotation_z(Scalar radians) {
  return Eigen::AngleAxis<Scalar>(radians, Eigen::Matrix<Scalar, 3, 1>::UnitZ())
      .toRotationMatrix();
}

template <typename Scalar>
constexpr Scalar deg_to_rad(Scalar deg) {
  return deg * std::numbers::pi_v<Scalar> / Scalar(180);
}

template <typename Scalar>
constexpr Scalar rad_to_deg(Scalar rad) {
  return rad * Scalar(180) / std::numbers::pi_v<Scalar>;
}

// Camera motion with yaw about +y (positive turns right), pitch about +x
// (positive looks up) and roll about +z, applied as R = Ry * Rx * Rz.
template <typename Scalar>
Pose<Scalar> euler_pose(Scalar yaw, Scalar pitch, Scalar roll,
                        const Eigen::Matrix<Scalar, 3, 1>& translation) {
  Pose<Scalar> p;
  p.rotation = rotation_y(yaw) * rotation_x(pitch) * rotation_z(roll);
  p.translation = translation;
  return p;
}

template <typename Scalar>
Pose<Scalar> translate(Scalar x, Scalar y, Scalar z) {
  Pose<Scalar> p;
  p.translation = {x, y, z};
  return p;
}

template <typename Scalar>
struct Intrinsics {
  using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;

  Scalar fx = 1;
  Scalar fy = 1;
  Scalar cx = 0;
  Scalar cy = 0;
  int width = 1;
  int height = 1;

  // Square pixels, principal point at the image centre.
  static Intrinsics FromFov(int width, int height, Scalar horizontal_fov_deg) {
    Intrinsics k;
    k.width = width;
    k.height = height;
    k.fx = Scalar(0.5) * width / std::tan(deg_to_rad(horizontal_fov_deg) / 2);
    k.fy = k.fx;
    k.cx = Scalar(0.5) * (width - 1);
    k.cy = Scalar(0.5) * (height - 1);
    return k;
  }

  bool valid() const {
    return fx > 0 && fy > 0 && width > 0 && height > 0 && cx >= 0 &&
           cx < width && cy >= 0 && cy < height;
  }

  Matrix3 matrix() const {
    Matrix3 m;
    m << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return m;
  }

  Matrix3 inverse_matrix() const {
    Matrix3 m;
    m << 1 / fx, 0, -cx / fx, 0, 1 / fy, -cy / fy, 0, 0, 1;
    return m;
  }

  // Same field of view at a different resolution.
  Intrinsics resized(int new_width, int new_height) const {
    Intrinsics k = *this;
    const Scalar sx = Scalar(new_width) / width;
    const Scalar sy = Scalar(new_height) / height;
    k.fx = fx * sx;
    k.fy = fy * sy;
    k.cx = (cx + Scalar(0.5)) * sx - Scalar(0.5);
    k.cy = (cy + Scalar(0.5)) * sy - Scalar(0.5);
    k.width = new_width;
    k.height = new_height;
    return k;
  }

  template <typename Other>
  Intrinsics<Other> cast() const {
    return {Other(fx), Other(fy), Other(cx), Other(cy), width, height};
  }
};

using CameraIntrinsics = Intrinsics<double>;

// Camera-space point at depth 1/disparity along the ray through `px`.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> unproject(const Eigen::Matrix<Scalar, 2, 1>& px,
                                      Scalar disparity,
                                      const Intrinsics<Scalar>& k) {
  if (!(disparity > 0)) {
    throw std::domain_error("unproject: disparity must be positive");
  }
  const Scalar depth = Scalar(1) / disparity;
  return {(px.x() - k.cx) / k.fx * depth, (px.y() - k.cy) / k.fy * depth,
          depth};
}

template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> project(const Eigen::Matrix<Scalar, 3, 1>& x,
                                    const Intrinsics<Scalar>& k) {
  return {k.fx * x.x() / x.z() + k.cx, k.fy * x.y() / x.z() + k.cy};
}

}  // namespace pvg
