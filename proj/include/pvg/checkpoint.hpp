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
#include <map>
#include <string>

#include <json.hpp>
#include <torch/torch.h>

#include "pvg/model.hpp"

namespace pvg {

// Binary layout (little endian):
//   8 bytes  magic "PVGCKPT\0"
//   u32      format version
//   u64      header length n
//   n bytes  JSON header: schema tag, refiner config, step counter, free-form
//            metadata and a tensor table {name, dtype, shape, offset, bytes}
//   payload  raw tensor data, offsets relative to the payload start
inline constexpr char kCheckpointSchema[] = "pvgen-checkpoint";
inline constexpr uint32_t kCheckpointVersion = 1;

using TensorMap = std::map<std::string, torch::Tensor>;

struct Checkpoint {
  RefinerConfig config;
  int64_t step_counter = 0;
  nlohmann::json metadata = nlohmann::json::object();
  TensorMap tensors;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Parameters are stored as "refiner.<name>", "ema.<name>", "discriminator.<name>".
Checkpoint checkpoint_from_state(const RefinerState& state);
RefinerState state_from_checkpoint(const Checkpoint& ckpt);

nlohmann::json refiner_config_to_json(const RefinerConfig& c);
RefinerConfig refiner_config_from_json(const nlohmann::json& j);

}  // namespace pvg
