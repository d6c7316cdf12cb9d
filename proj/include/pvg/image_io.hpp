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
#include <stdexcept>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <torch/torch.h>

namespace pvg {

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// 8-bit BGR or grayscale Mat -> [3,H,W] float32 rgb in [0,1].
torch::Tensor rgb_from_mat(const cv::Mat& bgr);
// [3,H,W] or [1,3,H,W] rgb in [0,1] -> 8-bit BGR Mat.
cv::Mat mat_from_rgb(const torch::Tensor& rgb);

std::vector<uint8_t> encode_png(const torch::Tensor& rgb);
torch::Tensor decode_image(const std::vector<uint8_t>& bytes);
torch::Tensor read_image(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const torch::Tensor& rgb);

// 16-bit grayscale disparity files: value = round(d * 65535).
void write_disparity_png(const std::filesystem::path& path, const torch::Tensor& disparity);
// Returns [1,H,W] float32 in [0,1].
torch::Tensor read_disparity_png(const std::filesystem::path& path);

// Largest centred square, then resize to size x size.
cv::Mat center_crop_resize(const cv::Mat& image, int size);

}  // namespace pvg
