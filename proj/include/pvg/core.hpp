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

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pvg/geometry.hpp"
#include "pvg/image.hpp"

namespace pvg {

enum class Provenance { kCyclic, kAutopilot, kUser };

std::string_view to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);

// Ordered relative poses (step t-1 -> t) with where each one came from.
struct TrajectoryPlan {
  std::vector<CameraPose> steps;
  std::vector<Provenance> provenance;

  size_t size() const { return steps.size(); }
  void push_back(const CameraPose& pose, Provenance tag) {
    steps.push_back(pose);
    provenance.push_back(tag);
  }
  // Composition of all steps: the final camera in the starting frame.
  CameraPose cumulative() const;
  void validate() const;
};

}  // namespace pvg
