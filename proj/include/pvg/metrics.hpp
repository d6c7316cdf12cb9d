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
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>
#include <torch/torch.h>

#include "pvg/losses.hpp"

namespace pvg {

// PSNR of identical images is infinite; it is reported as this value.
inline constexpr double kPsnrCap = 99.0;
// Sliding FID window used by the long-range protocol.
inline constexpr int kDefaultFidWindow = 20;

// Images are rgb batches [N,3,H,W] (or [3,H,W]) with values in [0,1].
double psnr(const torch::Tensor& a, const torch::Tensor& b);
// Gaussian-window SSIM (11 taps, sigma 1.5), averaged over channels and batch.
double ssim(const torch::Tensor& a, const torch::Tensor& b);
// sum_l mean|phi^l(a) - phi^l(b)| with the loss module's feature extractor.
double perceptual(const torch::Tensor& a, const torch::Tensor& b, const FeatureExtractor& features);

// Maps an image batch to one embedding row per image.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual Eigen::MatrixXd embed(const torch::Tensor& rgb) = 0;
  virtual int dim() const = 0;
  virtual std::string backend() const = 0;
};

// Frozen random convolutional pyramid with mean and standard-deviation
// pooling of the last stage.
class RandomConvEmbedder final : public Embedder {
 public:
  explicit RandomConvEmbedder(uint64_t seed = 0, int dim = 256);
  Eigen::MatrixXd embed(const torch::Tensor& rgb) override;
  int dim() const override { return dim_; }
  std::string backend() const override { return "fixed-random-conv"; }

 private:
  int dim_;
  std::vector<torch::Tensor> weights_;
};

// Precomputed embeddings, one whitespace-separated row per line. Rows are
// handed out in call order, so callers must embed images in file order.
class FileEmbedder final : public Embedder {
 public:
  explicit FileEmbedder(const std::filesystem::path& path);
  Eigen::MatrixXd embed(const torch::Tensor& rgb) override;
  int dim() const override { return static_cast<int>(rows_.cols()); }
  std::string backend() const override { return "external"; }
  int64_t remaining() const { return rows_.rows() - cursor_; }

 private:
  Eigen::MatrixXd rows_;
  int64_t cursor_ = 0;
};

// Frechet distance between Gaussian fits of two embedding sets (rows are
// samples). Both covariances get eps * I added.
double frechet_distance(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake,
                        double eps = 1e-6);
double fid(const torch::Tensor& real, const torch::Tensor& fake, Embedder& e);

// One FID per window start t, pooling frames [t, t + window) of every sequence.
std::vector<double> fid_sliding(const Eigen::MatrixXd& real,
                                const std::vector<Eigen::MatrixXd>& sequences, int window,
                                double eps = 1e-6);
std::vector<double> fid_sliding(const torch::Tensor& real, const std::vector<torch::Tensor>& sequences,
                                int window, Embedder& e);

// Unbiased MMD^2 with kernel (x.y / d + 1)^3. Equal-sized sets are treated as
// paired samples, which makes the estimate exactly zero for identical sets.
double kernel_mmd(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake);
double kid(const torch::Tensor& real, const torch::Tensor& fake, Embedder& e);

// sum_l |G^l(a) - G^l(b)|_F^2 for single images, G = F F^T / (C H W).
double style_distance(const torch::Tensor& a, const torch::Tensor& b, const FeatureExtractor& features);
// Mean style distance between `start` and each frame of `sequence` [N,3,H,W].
double style_consistency(const torch::Tensor& start, const torch::Tensor& sequence,
                         const FeatureExtractor& features);

struct EvaluationReport {
  double psnr = 0;
  double ssim = 0;
  double perceptual = 0;
  double fid = 0;
  std::vector<double> fid_sw;
  double kid = 0;
  double style = 0;
  nlohmann::json config;

  nlohmann::json to_json() const;
  static EvaluationReport FromJson(const nlohmann::json& j);
};

}  // namespace pvg
