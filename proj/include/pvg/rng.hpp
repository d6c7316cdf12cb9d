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
#include <random>

#include <torch/torch.h>

namespace pvg {

// Every stochastic routine takes one of these explicitly; nothing reads a
// global generator.
using Rng = std::mt19937_64;

// Always consumes one draw, including for degenerate lo == hi ranges.
inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline int64_t uniform_int(Rng& rng, int64_t lo, int64_t hi) {
  return std::uniform_int_distribution<int64_t>(lo, hi)(rng);
}

// Standard-normal tensor drawn from `rng`, independent of torch's global state.
inline torch::Tensor randn(Rng& rng, torch::IntArrayRef shape,
                           torch::Dtype dtype = torch::kFloat32) {
  auto out = torch::empty(shape, torch::kFloat64);
  std::normal_distribution<double> dist(0.0, 1.0);
  auto* data = out.data_ptr<double>();
  for (int64_t i = 0; i < out.numel(); ++i) data[i] = dist(rng);
  return out.to(dtype);
}

// Derive an independent stream, e.g. one per session or per dataset epoch.
inline Rng fork(Rng& rng) {
  std::seed_seq seq{rng(), rng(), rng(), rng()};
  return Rng(seq);
}

}  // namespace pvg
