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

#include "pvg/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace pvg {
namespace {

constexpr char kMagic[8] = {'P', 'V', 'G', 'C', 'K', 'P', 'T', '\0'};

std::string dtype_name(torch::Dtype t) {
  switch (t) {
    case torch::kFloat32: return "f32";
    case torch::kFloat64: return "f64";
    case torch::kInt64: return "i64";
    default: throw CheckpointError("checkpoint: unsupported tensor dtype");
  }
}

torch::Dtype dtype_from_name(const std::string& s) {
  if (s == "f32") return torch::kFloat32;
  if (s == "f64") return torch::kFloat64;
  if (s == "i64") return torch::kInt64;
  throw CheckpointError("checkpoint: unknown dtype " + s);
}

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw CheckpointError("checkpoint: truncated file");
  return v;
}

void add_module(TensorMap& out, const std::string& prefix, const torch::nn::Module& m) {
  for (const auto& item : m.named_parameters()) out[prefix + item.key()] = item.value().detach();
}

void load_module(torch::nn::Module& m, const std::string& prefix, const TensorMap& tensors) {
  torch::NoGradGuard guard;
  for (auto& item : m.named_parameters()) {
    const auto it = tensors.find(prefix + item.key());
    if (it == tensors.end()) throw CheckpointError("checkpoint: missing tensor " + prefix + item.key());
    if (it->second.sizes() != item.value().sizes()) {
      throw CheckpointError("checkpoint: shape mismatch for " + prefix + item.key());
    }
    item.value().copy_(it->second);
  }
}

}  // namespace

nlohmann::json refiner_config_to_json(const RefinerConfig& c) {
  return {{"base_channels", c.base_channels},
          {"num_scales", c.num_scales},
          {"latent_dim", c.latent_dim},
          {"image_size", c.image_size}};
}

RefinerConfig refiner_config_from_json(const nlohmann::json& j) {
  RefinerConfig c;
  c.base_channels = j.at("base_channels").get<int64_t>();
  c.num_scales = j.at("num_scales").get<int64_t>();
  c.latent_dim = j.at("latent_dim").get<int64_t>();
  c.image_size = j.at("image_size").get<int64_t>();
  c.validate();
  return c;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["schema"] = kCheckpointSchema;
  header["version"] = kCheckpointVersion;
  header["config"] = refiner_config_to_json(ckpt.config);
  header["step_counter"] = ckpt.step_counter;
  header["metadata"] = ckpt.metadata;
  header["tensors"] = nlohmann::json::array();
  std::vector<torch::Tensor> payload;
  uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    auto c = t.detach().contiguous().cpu();
    const uint64_t bytes = static_cast<uint64_t>(c.numel()) * c.element_size();
    header["tensors"].push_back({{"name", name},
                                 {"dtype", dtype_name(c.scalar_type())},
                                 {"shape", c.sizes().vec()},
                                 {"offset", offset},
                                 {"bytes", bytes}});
    offset += bytes;
    payload.push_back(std::move(c));
  }
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("checkpoint: cannot write " + tmp.string());
    out.write(kMagic, sizeof(kMagic));
    put<uint32_t>(out, kCheckpointVersion);
    put<uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& c : payload) {
      out.write(static_cast<const char*>(c.data_ptr()), static_cast<std::streamsize>(c.numel() * c.element_size()));
    }
    if (!out) throw CheckpointError("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("checkpoint: " + path.string() + " is not a pvgen checkpoint");
  }
  const auto version = get<uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: schema version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const auto header_len = get<uint64_t>(in);
  if (header_len > (1u << 30)) throw CheckpointError("checkpoint: implausible header length");
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw CheckpointError("checkpoint: truncated header");

  Checkpoint ckpt;
  std::vector<char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    const auto header = nlohmann::json::parse(text);
    if (header.at("schema").get<std::string>() != kCheckpointSchema) {
      throw CheckpointError("checkpoint: schema tag mismatch");
    }
    ckpt.config = refiner_config_from_json(header.at("config"));
    ckpt.step_counter = header.at("step_counter").get<int64_t>();
    ckpt.metadata = header.value("metadata", nlohmann::json::object());
    for (const auto& t : header.at("tensors")) {
      const auto offset = t.at("offset").get<uint64_t>();
      const auto bytes = t.at("bytes").get<uint64_t>();
      if (offset + bytes > payload.size()) throw CheckpointError("checkpoint: truncated payload");
      const auto shape = t.at("shape").get<std::vector<int64_t>>();
      auto tensor = torch::empty(shape, dtype_from_name(t.at("dtype").get<std::string>()));
      if (static_cast<uint64_t>(tensor.numel() * tensor.element_size()) != bytes) {
        throw CheckpointError("checkpoint: size mismatch for " + t.at("name").get<std::string>());
      }
      std::memcpy(tensor.data_ptr(), payload.data() + offset, bytes);
      ckpt.tensors[t.at("name").get<std::string>()] = tensor;
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: malformed header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
  return ckpt;
}

Checkpoint checkpoint_from_state(const RefinerState& state) {
  Checkpoint c;
  c.config = state.config;
  c.step_counter = state.step_counter;
  add_module(c.tensors, "refiner.", *state.refiner);
  add_module(c.tensors, "ema.", *state.ema);
  add_module(c.tensors, "discriminator.", *state.discriminator);
  return c;
}

RefinerState state_from_checkpoint(const Checkpoint& ckpt) {
  auto state = RefinerState::Create(ckpt.config, 0);
  const auto it = ckpt.tensors.find("refiner." + state.refiner->named_parameters().begin()->key());
  if (it != ckpt.tensors.end()) state.to(it->second.scalar_type());
  load_module(*state.refiner, "refiner.", ckpt.tensors);
  load_module(*state.ema, "ema.", ckpt.tensors);
  load_module(*state.discriminator, "discriminator.", ckpt.tensors);
  state.step_counter = ckpt.step_counter;
  return state;
}

}  // namespace pvg
