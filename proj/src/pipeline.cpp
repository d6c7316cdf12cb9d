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

#include "pvg/pipeline.hpp"

#include "pvg/image_io.hpp"

namespace pvg {

std::vector<RGBDImage> build_training_set(const Settings& s) {
  std::vector<RGBDImage> out;
  const int size = static_cast<int>(s.image_size);
  if (s.data_source == "synthetic") {
    for (auto& it : synthetic_collection(static_cast<int>(s.synthetic_count), size, s.data_seed)) {
      out.push_back(std::move(it.image));
    }
    return out;
  }
  const std::filesystem::path dir = s.data_path;
  if (!std::filesystem::is_directory(dir)) throw InputError("dataset path does not exist: " + dir.string());
  try {
    return load_collection(dir, size, s.depth, s.data_seed).items;
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
}

RGBDImage load_start_image(const std::filesystem::path& path, const Settings& s, int image_size) {
  if (!std::filesystem::is_regular_file(path)) throw InputError("input image does not exist: " + path.string());
  torch::Tensor rgb;
  try {
    rgb = read_image(path);
  } catch (const std::exception& e) {
    throw InputError("cannot decode input image " + path.string() + ": " + e.what());
  }
  const int64_t h = rgb.size(1);
  const int64_t w = rgb.size(2);
  const int64_t side = std::min(h, w);
  rgb = rgb.slice(1, (h - side) / 2, (h - side) / 2 + side).slice(2, (w - side) / 2, (w - side) / 2 + side);
  rgb = torch::nn::functional::interpolate(
            rgb.unsqueeze(0), torch::nn::functional::InterpolateFuncOptions()
                                  .size(std::vector<int64_t>{image_size, image_size})
                                  .mode(torch::kArea))
            .clamp(0, 1);
  DepthProvider depth = s.depth;
  if (depth.backend == DepthBackend::kSynthetic) depth.backend = DepthBackend::kExternalFile;
  if (depth.backend == DepthBackend::kExternalFile && !std::filesystem::exists(disparity_path_for(path))) {
    throw InputError("no disparity file for input image: " + disparity_path_for(path).string());
  }
  return RGBDImage::Create(rgb, depth.disparity_for(path, image_size).unsqueeze(0));
}

SyntheticItem evaluation_scene(const Settings& s, int index, int image_size) {
  const uint64_t scene_seed = s.evaluation.seed * 1000003ULL + static_cast<uint64_t>(index);
  Rng rng(scene_seed ^ 0xE7A1ull);
  const auto k = CameraIntrinsics::FromFov(image_size, image_size, s.train.hfov_deg);
  SyntheticItem item{SyntheticScene::Random(scene_seed),
                     euler_pose(deg_to_rad(uniform(rng, 0.0, 360.0)), deg_to_rad(uniform(rng, -4.0, 2.0)), 0.0,
                                Eigen::Vector3d(Eigen::Vector3d::Zero())),
                     {}};
  item.image = render_synthetic(item.scene, item.pose, k);
  return item;
}

std::unique_ptr<Embedder> make_embedder(const Settings& s) {
  if (s.evaluation.embedder == "external") return std::make_unique<FileEmbedder>(s.evaluation.embedder_path);
  return std::make_unique<RandomConvEmbedder>(s.evaluation.embedder_seed);
}

EvaluationReport evaluate_model(std::shared_ptr<const RefinerState> model, const Settings& s, Embedder& embedder,
                                uint64_t seed) {
  torch::NoGradGuard guard;
  const int size = static_cast<int>(model->config.image_size);
  const auto cfg = s.generation();
  const auto k = CameraIntrinsics::FromFov(size, size, cfg.hfov_deg);
  const auto& e = s.evaluation;
  const PyramidFeatures features;
  EvaluationReport report;

  std::vector<torch::Tensor> generated, truth;
  std::vector<torch::Tensor> sequences;
  double style_sum = 0;
  for (int i = 0; i < e.scenes; ++i) {
    const auto item = evaluation_scene(s, i, size);

    TrajectoryPlan plan;
    auto gt = item.image;
    CameraPose world = item.pose;
    std::vector<torch::Tensor> gt_frames;
    for (int t = 0; t < e.short_length; ++t) {
      const auto rel = autopilot_step(gt, sky_mask(gt, cfg.sky), cfg.autopilot).front();
      plan.push_back(rel, Provenance::kAutopilot);
      world = compose(world, rel);
      gt = render_synthetic(item.scene, world, k);
      gt_frames.push_back(gt.rgb);
    }
    const auto short_run = generate_along(model, item.image, plan, cfg, seed + i);
    for (int t = 0; t < e.short_length; ++t) {
      generated.push_back(short_run.frames[t].rgb.to(torch::kFloat32));
      truth.push_back(gt_frames[t].to(torch::kFloat32));
    }

    const auto length = std::max(e.style_length, e.fid_length);
    const auto long_run = generate_autopilot(model, item.image, static_cast<int>(length), cfg, seed + 7919 + i);
    std::vector<torch::Tensor> frames;
    for (const auto& f : long_run.frames) frames.push_back(f.rgb.to(torch::kFloat32));
    const auto all = torch::cat(frames);
    style_sum += style_consistency(item.image.rgb.to(torch::kFloat32), all.slice(0, 0, e.style_length), features);
    sequences.push_back(all.slice(0, 0, e.fid_length));
  }
  const auto fake_short = torch::cat(generated);
  const auto true_short = torch::cat(truth);
  report.psnr = psnr(fake_short, true_short);
  report.ssim = ssim(fake_short, true_short);
  report.perceptual = perceptual(fake_short, true_short, features);
  report.style = style_sum / static_cast<double>(e.scenes);

  std::vector<torch::Tensor> real;
  for (int i = 0; i < e.real_count; ++i) real.push_back(evaluation_scene(s, 1000 + i, size).image.rgb.to(torch::kFloat32));
  const Eigen::MatrixXd real_emb = embedder.embed(torch::cat(real));
  std::vector<Eigen::MatrixXd> seq_emb;
  Eigen::Index rows = 0;
  for (const auto& seq : sequences) {
    seq_emb.push_back(embedder.embed(seq));
    rows += seq_emb.back().rows();
  }
  Eigen::MatrixXd fake_emb(rows, real_emb.cols());
  Eigen::Index r = 0;
  for (const auto& m : seq_emb) {
    fake_emb.middleRows(r, m.rows()) = m;
    r += m.rows();
  }
  report.fid = frechet_distance(real_emb, fake_emb);
  report.fid_sw = fid_sliding(real_emb, seq_emb, static_cast<int>(e.window));
  report.kid = kernel_mmd(real_emb, fake_emb);
  report.config = to_config_json(s);
  return report;
}

}  // namespace pvg
