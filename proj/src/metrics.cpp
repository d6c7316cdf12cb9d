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

#include "pvg/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "pvg/rng.hpp"

namespace pvg {
namespace {

torch::Tensor as_batch(const torch::Tensor& x) {
  auto t = x.dim() == 3 ? x.unsqueeze(0) : x;
  if (t.dim() != 4 || t.size(1) != 3) throw std::invalid_argument("metrics: expected rgb [N,3,H,W]");
  return t.to(torch::kFloat64);
}

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* who) {
  if (a.sizes() != b.sizes()) throw std::invalid_argument(std::string(who) + ": shape mismatch");
}

Eigen::MatrixXd to_matrix(const torch::Tensor& t) {
  const auto c = t.to(torch::kFloat64).contiguous();
  Eigen::MatrixXd m(c.size(0), c.size(1));
  const auto* p = c.data_ptr<double>();
  for (int64_t i = 0; i < m.rows(); ++i)
    for (int64_t j = 0; j < m.cols(); ++j) m(i, j) = p[i * m.cols() + j];
  return m;
}

Eigen::MatrixXd covariance(const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  return centered.transpose() * centered / static_cast<double>(x.rows() - 1);
}

Eigen::MatrixXd sym_sqrt(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a + a.transpose()));
  const Eigen::VectorXd s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * s.asDiagonal() * es.eigenvectors().transpose();
}

torch::Tensor gaussian_window(int size, double sigma) {
  auto g = torch::arange(size, torch::kFloat64) - (size - 1) / 2.0;
  g = torch::exp(-g.pow(2) / (2 * sigma * sigma));
  return g / g.sum();
}

}  // namespace

double psnr(const torch::Tensor& a, const torch::Tensor& b) {
  require_same_shape(a, b, "psnr");
  const double mse = (as_batch(a) - as_batch(b)).pow(2).mean().item<double>();
  if (mse <= 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const torch::Tensor& a, const torch::Tensor& b) {
  require_same_shape(a, b, "ssim");
  const auto x = as_batch(a);
  const auto y = as_batch(b);
  const int64_t side = std::min(x.size(2), x.size(3));
  int size = static_cast<int>(std::min<int64_t>(11, side));
  if (size % 2 == 0) --size;
  const auto g = gaussian_window(size, 1.5);
  const auto w = (g.view({size, 1}) * g.view({1, size})).view({1, 1, size, size}).expand({3, 1, size, size});
  namespace F = torch::nn::functional;
  const auto opts = F::Conv2dFuncOptions().groups(3);
  auto blur = [&](const torch::Tensor& t) { return F::conv2d(t, w, opts); };
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const auto mx = blur(x), my = blur(y);
  const auto sxx = blur(x * x) - mx * mx;
  const auto syy = blur(y * y) - my * my;
  const auto sxy = blur(x * y) - mx * my;
  const auto map = ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
  return map.mean().item<double>();
}

double perceptual(const torch::Tensor& a, const torch::Tensor& b, const FeatureExtractor& features) {
  require_same_shape(a, b, "perceptual");
  const auto fa = features(as_batch(a));
  const auto fb = features(as_batch(b));
  double total = 0;
  for (size_t l = 0; l < fa.size(); ++l) total += (fa[l] - fb[l]).abs().mean().item<double>();
  return total;
}

RandomConvEmbedder::RandomConvEmbedder(uint64_t seed, int dim) : dim_(dim) {
  if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("RandomConvEmbedder: dim must be even");
  Rng rng(seed);
  const std::vector<int64_t> widths{3, 32, 64, dim / 2};
  for (size_t i = 0; i + 1 < widths.size(); ++i) {
    const double stddev = std::sqrt(2.0 / (widths[i] * 9.0));
    weights_.push_back(randn(rng, {widths[i + 1], widths[i], 3, 3}, torch::kFloat64) * stddev);
  }
}

Eigen::MatrixXd RandomConvEmbedder::embed(const torch::Tensor& rgb) {
  torch::NoGradGuard guard;
  auto h = as_batch(rgb) * 2.0 - 1.0;
  namespace F = torch::nn::functional;
  for (const auto& w : weights_) {
    h = torch::leaky_relu(F::conv2d(h, w, F::Conv2dFuncOptions().stride(2).padding(1)), 0.2);
  }
  const auto flat = h.flatten(2);
  const auto pooled = torch::cat({flat.mean(2), flat.std(2, /*unbiased=*/false)}, 1);
  return to_matrix(pooled);
}

FileEmbedder::FileEmbedder(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read embeddings " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::vector<double> row;
    double v;
    while (ss >> v) row.push_back(v);
    if (row.empty()) continue;
    if (!rows.empty() && row.size() != rows[0].size()) {
      throw std::invalid_argument("embeddings: ragged rows in " + path.string());
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::invalid_argument("embeddings: no rows in " + path.string());
  rows_.resize(static_cast<int64_t>(rows.size()), static_cast<int64_t>(rows[0].size()));
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < rows[i].size(); ++j) rows_(i, j) = rows[i][j];
}

Eigen::MatrixXd FileEmbedder::embed(const torch::Tensor& rgb) {
  const int64_t n = as_batch(rgb).size(0);
  if (cursor_ + n > rows_.rows()) throw std::out_of_range("embeddings: file exhausted");
  Eigen::MatrixXd out = rows_.middleRows(cursor_, n);
  cursor_ += n;
  return out;
}

double frechet_distance(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake, double eps) {
  if (real.rows() < 2 || fake.rows() < 2) throw std::invalid_argument("fid: need at least 2 samples per set");
  if (real.cols() != fake.cols()) throw std::invalid_argument("fid: embedding dimensions differ");
  const Eigen::RowVectorXd mu_r = real.colwise().mean();
  const Eigen::RowVectorXd mu_f = fake.colwise().mean();
  const auto I = Eigen::MatrixXd::Identity(real.cols(), real.cols());
  const Eigen::MatrixXd cr = covariance(real) + eps * I;
  const Eigen::MatrixXd cf = covariance(fake) + eps * I;
  // tr sqrt(Cr Cf) = tr sqrt(Cr^1/2 Cf Cr^1/2), which is symmetric PSD.
  const Eigen::MatrixXd root = sym_sqrt(cr);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(root * cf * root, Eigen::EigenvaluesOnly);
  const double tr_cross = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double value = (mu_r - mu_f).squaredNorm() + cr.trace() + cf.trace() - 2.0 * tr_cross;
  return std::max(0.0, value);
}

double fid(const torch::Tensor& real, const torch::Tensor& fake, Embedder& e) {
  const auto r = e.embed(real);
  return frechet_distance(r, e.embed(fake));
}

std::vector<double> fid_sliding(const Eigen::MatrixXd& real,
                                const std::vector<Eigen::MatrixXd>& sequences, int window, double eps) {
  if (window < 1) throw std::invalid_argument("fid_sliding: window must be >= 1");
  if (sequences.empty()) throw std::invalid_argument("fid_sliding: no sequences");
  const int64_t length = sequences[0].rows();
  for (const auto& s : sequences) {
    if (s.rows() != length) throw std::invalid_argument("fid_sliding: sequences differ in length");
  }
  if (length < window) {
    throw std::invalid_argument("fid_sliding: sequence length " + std::to_string(length) +
                                " is shorter than the window " + std::to_string(window));
  }
  std::vector<double> out;
  for (int64_t t = 0; t + window <= length; ++t) {
    Eigen::MatrixXd pooled(window * static_cast<int64_t>(sequences.size()), real.cols());
    for (size_t s = 0; s < sequences.size(); ++s) {
      pooled.middleRows(static_cast<int64_t>(s) * window, window) = sequences[s].middleRows(t, window);
    }
    out.push_back(frechet_distance(real, pooled, eps));
  }
  return out;
}

std::vector<double> fid_sliding(const torch::Tensor& real, const std::vector<torch::Tensor>& sequences,
                                int window, Embedder& e) {
  const auto r = e.embed(real);
  std::vector<Eigen::MatrixXd> seq;
  for (const auto& s : sequences) seq.push_back(e.embed(s));
  return fid_sliding(r, seq, window);
}

double kernel_mmd(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  if (x.rows() < 2 || y.rows() < 2) throw std::invalid_argument("kid: need at least 2 samples per set");
  if (x.cols() != y.cols()) throw std::invalid_argument("kid: embedding dimensions differ");
  const double d = static_cast<double>(x.cols());
  auto kernel = [d](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return Eigen::MatrixXd(((a * b.transpose()).array() / d + 1.0).cube());
  };
  const Eigen::MatrixXd kxx = kernel(x, x);
  const Eigen::MatrixXd kyy = kernel(y, y);
  const Eigen::MatrixXd kxy = kernel(x, y);
  const double m = static_cast<double>(x.rows());
  const double n = static_cast<double>(y.rows());
  const double sxx = kxx.sum() - kxx.trace();
  const double syy = kyy.sum() - kyy.trace();
  if (x.rows() == y.rows()) {
    // U-statistic over pairs z_i = (x_i, y_i), skipping i == j throughout.
    const double sxy = kxy.sum() - kxy.trace();
    return (sxx + syy - 2.0 * sxy) / (m * (m - 1));
  }
  return sxx / (m * (m - 1)) + syy / (n * (n - 1)) - 2.0 * kxy.sum() / (m * n);
}

double kid(const torch::Tensor& real, const torch::Tensor& fake, Embedder& e) {
  const auto r = e.embed(real);
  return kernel_mmd(r, e.embed(fake));
}

namespace {

std::vector<torch::Tensor> grams(const torch::Tensor& img, const FeatureExtractor& features) {
  std::vector<torch::Tensor> out;
  for (const auto& f : features(img)) {
    const int64_t C = f.size(1);
    const auto flat = f.reshape({f.size(0), C, -1});
    out.push_back(torch::bmm(flat, flat.transpose(1, 2)) / static_cast<double>(C * flat.size(2)));
  }
  return out;
}

}  // namespace

double style_distance(const torch::Tensor& a, const torch::Tensor& b, const FeatureExtractor& features) {
  require_same_shape(as_batch(a), as_batch(b), "style");
  const auto ga = grams(as_batch(a), features);
  const auto gb = grams(as_batch(b), features);
  double total = 0;
  for (size_t l = 0; l < ga.size(); ++l) total += (ga[l] - gb[l]).pow(2).sum().item<double>();
  return total;
}

double style_consistency(const torch::Tensor& start, const torch::Tensor& sequence,
                         const FeatureExtractor& features) {
  const auto seq = as_batch(sequence);
  if (seq.size(0) == 0) throw std::invalid_argument("style: empty sequence");
  const auto s = as_batch(start);
  double total = 0;
  for (int64_t i = 0; i < seq.size(0); ++i) total += style_distance(s, seq.narrow(0, i, 1), features);
  return total / static_cast<double>(seq.size(0));
}

nlohmann::json EvaluationReport::to_json() const {
  return {{"psnr", psnr}, {"ssim", ssim}, {"perceptual", perceptual}, {"fid", fid},
          {"fid_sw", fid_sw}, {"kid", kid},   {"style", style},           {"config", config}};
}

EvaluationReport EvaluationReport::FromJson(const nlohmann::json& j) {
  EvaluationReport r;
  try {
    r.psnr = j.at("psnr").get<double>();
    r.ssim = j.at("ssim").get<double>();
    r.perceptual = j.at("perceptual").get<double>();
    r.fid = j.at("fid").get<double>();
    r.fid_sw = j.at("fid_sw").get<std::vector<double>>();
    r.kid = j.at("kid").get<double>();
    r.style = j.at("style").get<double>();
    r.config = j.value("config", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("report: ") + e.what());
  }
  return r;
}

}  // namespace pvg
