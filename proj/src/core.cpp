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

#include "pvg/core.hpp"

namespace pvg {

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::kCyclic:
      return "cyclic";
    case Provenance::kAutopilot:
      return "autopilot";
    case Provenance::kUser:
      return "user";
  }
  return "user";
}

Provenance provenance_from_string(std::string_view s) {
  if (s == "cyclic") return Provenance::kCyclic;
  if (s == "autopilot") return Provenance::kAutopilot;
  if (s == "user") return Provenance::kUser;
  throw std::invalid_argument("unknown provenance tag: " + std::string(s));
}

CameraPose TrajectoryPlan::cumulative() const {
  CameraPose acc;
  for (const auto& step : steps) acc = compose(acc, step);
  return acc;
}

void TrajectoryPlan::validate() const {
  if (steps.empty()) throw std::invalid_argument("TrajectoryPlan: empty");
  if (steps.size() != provenance.size()) {
    throw std::invalid_argument("TrajectoryPlan: provenance count mismatch");
  }
  for (size_t i = 0; i < steps.size(); ++i) {
    if (!is_valid_pose(steps[i])) {
      throw std::invalid_argument("TrajectoryPlan: step " + std::to_string(i) +
                                  " is not a rigid transform");
    }
  }
}

}  // namespace pvg
