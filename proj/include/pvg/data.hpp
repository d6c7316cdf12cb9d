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
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>
#include <torch/torch.h>

#include "pvg/geometry.hpp"
#include "pvg/image.hpp"

namespace pvg {

// Disparity assigned to rays that escape to the sky.
inline constexpr double kSkyDisparity = 1e-4;

struct Palette {
  Eigen::Vector3d sky_zenith{0.25, 0.45, 0.80};
  Eigen::Vector3d sky_horizon{0.70, 0.80, 0.90};
  Eigen::Vector3d cloud{0.95, 0.95, 0.97};
  Eigen::Vector3d grass{0.25, 0.45, 0.18};
  Eigen::Vector3d rock{0.45, 0.40, 0.36};
  Eigen::Vector3d snow{0.92, 0.93, 0.95};
  Eigen::Vector3d wall{0.60, 0.35, 0.25};
};

// Procedural heightfield landscape. World frame matches the camera frame of
// the identity pose: +x right, +y down, +z forward; the eye sits at y = 0.
struct SyntheticScene {
  uint64_t seed = 0;
  int octaves = 4;
  double amplitude = 0.4;        // relief of the near terrain
  double feature_scale = 4.0;    // wavelength of the coarsest octave
  double camera_height = 1.5;    // mean ground sits at y = camera_height
  double mountain_height = 8.0;  // distant ring of mountains
  double horizon_distance = 200.0;  // rays travelling farther hit sky
  std::optional<double> wall_depth;  // plane z = wall_depth below eye level
  Palette palette;

  static SyntheticScene Random(uint64_t seed);
  void validate() const;

  // Height of the ground surface (y, pointing down) at (x, z).
  double ground_y(double x, double z) const;

  nlohmann::json to_json() const;
  static SyntheticScene FromJson(const nlohmann::json& j);
};

// Ray-marched rgb and exact disparity; a pure function of its inputs.
RGBDImage render_synthetic(const SyntheticScene& scene, const CameraPose& pose,
                           const CameraIntrinsics& k);

// Square pinhole camera with a 60 degree horizontal field of view.
CameraIntrinsics default_intrinsics(int image_size);

struct SyntheticItem {
  SyntheticScene scene;
  CameraPose pose;
  RGBDImage image;
};

// `count` scenes seeded from `seed`, each viewed from a random heading with a
// slight random pitch.
std::vector<SyntheticItem> synthetic_collection(int count, int image_size, uint64_t seed);

enum class DepthBackend { kSynthetic, kConstantPlane, kExternalFile };

std::string to_string(DepthBackend b);
DepthBackend depth_backend_from_string(const std::string& s);

struct DepthProvider {
  DepthBackend backend = DepthBackend::kExternalFile;
  double constant_disparity = 0.5;
  // Per-image affine normalisation target.
  double normalize_min = 0.01;
  double normalize_max = 1.0;

  // Maps raw provider output affinely onto [normalize_min, normalize_max];
  // constant maps are clamped into the range instead.
  torch::Tensor normalize(const torch::Tensor& raw) const;

  // Disparity for an image file, already cropped/resized to image_size.
  torch::Tensor disparity_for(const std::filesystem::path& image_path, int image_size) const;
};

// Sibling disparity file for an image: a.png -> a.disp.png.
std::filesystem::path disparity_path_for(const std::filesystem::path& image_path);

struct LoadedCollection {
  std::vector<RGBDImage> items;
  std::vector<std::filesystem::path> paths;
  std::vector<std::string> warnings;
};

// Decodes every PNG/JPEG in `dir` (excluding *.disp.png), centre-crops to a
// square and resizes. Unreadable files are skipped with a warning; an empty
// result is an error. Order is a seeded shuffle of the sorted file list.
LoadedCollection load_collection(const std::filesystem::path& dir, int image_size,
                                 const DepthProvider& depth, uint64_t seed);

// Writes NNNNNN.png, NNNNNN.disp.png and NNNNNN.json for a synthetic collection.
void write_synthetic_dataset(const std::filesystem::path& dir, int count, int image_size,
                             uint64_t seed);

// In-memory training set with a deterministic batch order: the batch drawn at
// iteration `step` depends only on (seed, step).
class Dataset {
 public:
  Dataset(std::vector<RGBDImage> items, uint64_t seed);

  size_t size() const { return items_.size(); }
  const RGBDImage& operator[](size_t i) const { return items_[i]; }
  int64_t image_size() const;

  std::vector<int64_t> batch_indices(int64_t step, int64_t batch_size) const;
  RGBDImage batch(int64_t step, int64_t batch_size) const;

 private:
  std::vector<int64_t> epoch_order(int64_t epoch) const;

  std::vector<RGBDImage> items_;
  uint64_t seed_;
};

}  // namespace pvg
