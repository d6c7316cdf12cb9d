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

#include <filesystem>
#include <memory>
#include <stdexcept>
#include <vector>

#include "pvg/config.hpp"
#include "pvg/metrics.hpp"

namespace pvg {

// A dataset or input path that does not exist or holds nothing usable.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training images per data.source: a synthetic collection or a folder.
std::vector<RGBDImage> build_training_set(const Settings& s);

// Starting image from a file, with disparity from depth.backend (a sibling
// .disp.png for external-file); cropped and resized to image_size.
RGBDImage load_start_image(const std::filesystem::path& path, const Settings& s, int image_size);

// Held-out synthetic scene `index` from evaluation.seed.
SyntheticItem evaluation_scene(const Settings& s, int index, int image_size);

std::unique_ptr<Embedder> make_embedder(const Settings& s);

// Short range: per scene, a length-short_length auto-pilot trajectory steered
// on the true renders; generated frames are scored against re-renders
// (psnr, ssim, perceptual). Long range: per scene, an auto-pilot rollout of
// max(style_length, fid_length) frames gives style (first style_length
// frames) and fid, fid_sw, kid (first fid_length frames) against real_count
// held-out renders. Embedding order: real set, then each sequence in order.
EvaluationReport evaluate_model(std::shared_ptr<const RefinerState> model, const Settings& s, Embedder& embedder,
                                uint64_t seed);

}  // namespace pvg
