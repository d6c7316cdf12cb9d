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

#include "pvg/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace pvg {

torch::Tensor rgb_from_mat(const cv::Mat& image) {
  if (image.empty()) throw DecodeError("decode: empty image");
  cv::Mat rgb;
  if (image.channels() == 1) {
    cv::cvtColor(image, rgb, cv::COLOR_GRAY2RGB);
  } else if (image.channels() == 4) {
    cv::cvtColor(image, rgb, cv::COLOR_BGRA2RGB);
  } else {
    cv::cvtColor(image, rgb, cv::COLOR_BGR2RGB);
  }
  cv::Mat f;
  const double scale = image.depth() == CV_16U ? 1.0 / 65535.0 : 1.0 / 255.0;
  rgb.convertTo(f, CV_32FC3, scale);
  auto t = torch::from_blob(f.data, {f.rows, f.cols, 3}, torch::kFloat32).clone();
  return t.permute({2, 0, 1}).contiguous();
}

cv::Mat mat_from_rgb(const torch::Tensor& rgb) {
  auto t = rgb.detach().to(torch::kCPU, torch::kFloat32);
  if (t.dim() == 4) {
    if (t.size(0) != 1) throw std::invalid_argument("mat_from_rgb: expects a single image");
    t = t[0];
  }
  if (t.dim() != 3 || t.size(0) != 3) throw std::invalid_argument("mat_from_rgb: expects [3,H,W]");
  t = (t.clamp(0.0, 1.0) * 255.0).round().to(torch::kUInt8).permute({1, 2, 0}).contiguous();
  cv::Mat rgb8(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), CV_8UC3, t.data_ptr());
  cv::Mat bgr;
  cv::cvtColor(rgb8, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

std::vector<uint8_t> encode_png(const torch::Tensor& rgb) {
  std::vector<uint8_t> out;
  if (!cv::imencode(".png", mat_from_rgb(rgb), out)) throw std::runtime_error("png encode failed");
  return out;
}

torch::Tensor decode_image(const std::vector<uint8_t>& bytes) {
  if (bytes.empty()) throw DecodeError("decode: empty payload");
  cv::Mat m;
  try {
    m = cv::imdecode(bytes, cv::IMREAD_COLOR);
  } catch (const cv::Exception& e) {
    throw DecodeError(std::string("decode: ") + e.what());
  }
  if (m.empty()) throw DecodeError("decode: payload is not a readable PNG/JPEG image");
  return rgb_from_mat(m);
}

torch::Tensor read_image(const std::filesystem::path& path) {
  cv::Mat m;
  try {
    m = cv::imread(path.string(), cv::IMREAD_COLOR);
  } catch (const cv::Exception& e) {
    throw DecodeError("decode: " + path.string() + ": " + e.what());
  }
  if (m.empty()) throw DecodeError("decode: cannot read image " + path.string());
  return rgb_from_mat(m);
}

void write_png(const std::filesystem::path& path, const torch::Tensor& rgb) {
  if (!cv::imwrite(path.string(), mat_from_rgb(rgb))) {
    throw std::runtime_error("cannot write " + path.string());
  }
}

void write_disparity_png(const std::filesystem::path& path, const torch::Tensor& disparity) {
  auto t = disparity.detach().to(torch::kCPU, torch::kFloat64).squeeze();
  if (t.dim() != 2) throw std::invalid_argument("write_disparity_png: expects a single [H,W] map");
  t = (t.clamp(0.0, 1.0) * 65535.0).round().to(torch::kInt32).contiguous();
  cv::Mat m(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), CV_16UC1);
  const auto* src = t.data_ptr<int32_t>();
  for (int r = 0; r < m.rows; ++r) {
    for (int c = 0; c < m.cols; ++c) m.at<uint16_t>(r, c) = static_cast<uint16_t>(src[r * m.cols + c]);
  }
  if (!cv::imwrite(path.string(), m)) throw std::runtime_error("cannot write " + path.string());
}

torch::Tensor read_disparity_png(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw DecodeError("decode: cannot read disparity " + path.string());
  if (m.channels() != 1) cv::cvtColor(m, m, cv::COLOR_BGR2GRAY);
  cv::Mat f;
  m.convertTo(f, CV_32F, m.depth() == CV_16U ? 1.0 / 65535.0 : 1.0 / 255.0);
  return torch::from_blob(f.data, {1, f.rows, f.cols}, torch::kFloat32).clone();
}

cv::Mat center_crop_resize(const cv::Mat& image, int size) {
  const int side = std::min(image.cols, image.rows);
  const cv::Rect roi((image.cols - side) / 2, (image.rows - side) / 2, side, side);
  cv::Mat out;
  const int interp = side > size ? cv::INTER_AREA : cv::INTER_LINEAR;
  cv::resize(image(roi), out, cv::Size(size, size), 0, 0, interp);
  return out;
}

}  // namespace pvg
