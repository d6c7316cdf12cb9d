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

#include "pvg/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "pvg/image_io.hpp"
#include "pvg/rng.hpp"

namespace pvg {
namespace {

uint64_t splitmix(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double lattice(int64_t ix, int64_t iz, uint64_t seed) {
  const uint64_t h = splitmix(seed ^ splitmix(static_cast<uint64_t>(ix) * 0x8DA6B343ull ^
                                              static_cast<uint64_t>(iz) * 0xD8163841ull));
  return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
}

double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

double value_noise(double x, double z, uint64_t seed) {
  const double fx = std::floor(x);
  const double fz = std::floor(z);
  const auto ix = static_cast<int64_t>(fx);
  const auto iz = static_cast<int64_t>(fz);
  const double u = fade(x - fx);
  const double v = fade(z - fz);
  const double a = lattice(ix, iz, seed);
  const double b = lattice(ix + 1, iz, seed);
  const double c = lattice(ix, iz + 1, seed);
  const double d = lattice(ix + 1, iz + 1, seed);
  return (a * (1 - u) + b * u) * (1 - v) + (c * (1 - u) + d * u) * v;
}

// Normalised fractal sum in [0,1].
double fbm(double x, double z, int octaves, uint64_t seed) {
  double sum = 0, norm = 0, amp = 1, freq = 1;
  for (int i = 0; i < octaves; ++i) {
    sum += amp * value_noise(x * freq, z * freq, seed + 1000003ull * i);
    norm += amp;
    amp *= 0.5;
    freq *= 2.0;
  }
  return sum / norm;
}

double smoothstep(double e0, double e1, double x) {
  const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3 - 2 * t);
}

Eigen::Vector3d mix(const Eigen::Vector3d& a, const Eigen::Vector3d& b, double t) {
  return a + (b - a) * t;
}

Eigen::Vector3d jitter(Rng& rng, const Eigen::Vector3d& c, double amount) {
  Eigen::Vector3d out;
  for (int i = 0; i < 3; ++i) out[i] = std::clamp(c[i] + uniform(rng, -amount, amount), 0.0, 1.0);
  return out;
}

nlohmann::json color_json(const Eigen::Vector3d& c) { return {c.x(), c.y(), c.z()}; }

Eigen::Vector3d color_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("scene: colours are [r,g,b]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

// Unit vector pointing at the sun (up is -y).
const Eigen::Vector3d kToSun = Eigen::Vector3d(0.4, -0.8, 0.45).normalized();

struct Shader {
  const SyntheticScene& s;

  double elevation(double x, double z) const {
    const double near = s.amplitude * (2.0 * fbm(x / s.feature_scale, z / s.feature_scale,
                                                 s.octaves, s.seed) - 1.0);
    const double r = std::hypot(x, z);
    const double ring = smoothstep(20.0, 70.0, r);
    if (ring == 0.0) return near;
    const double m = fbm(x / 35.0, z / 35.0, 3, s.seed + 77);
    return near + s.mountain_height * ring * (0.3 + 0.7 * m * m);
  }

  Eigen::Vector3d sky(const Eigen::Vector3d& dir) const {
    const Eigen::Vector3d d = dir.normalized();
    const double up = -d.y();
    Eigen::Vector3d c = mix(s.palette.sky_horizon, s.palette.sky_zenith, smoothstep(0.0, 0.6, up));
    if (up > 0.0) {
      const double q = 1.5 / (up + 0.15);
      const double n = fbm(d.x() * q, d.z() * q, 4, s.seed + 7);
      const double cover = smoothstep(0.45, 0.75, n) * smoothstep(0.0, 0.12, up);
      c = mix(c, s.palette.cloud, 0.8 * cover);
    }
    return c;
  }

  Eigen::Vector3d terrain(const Eigen::Vector3d& p) const {
    const double e = 1e-2;
    const double hx = elevation(p.x() + e, p.z()) - elevation(p.x() - e, p.z());
    const double hz = elevation(p.x(), p.z() + e) - elevation(p.x(), p.z() - e);
    // y points down, so an uphill gradient tilts the normal toward -y.
    const Eigen::Vector3d n = Eigen::Vector3d(hx / (2 * e), -1.0, hz / (2 * e)).normalized();
    const double slope = 1.0 + n.y();  // 0 flat, 1 vertical
    const double height = s.camera_height - p.y();  // elevation above the mean ground
    Eigen::Vector3d c = mix(s.palette.grass, s.palette.rock, smoothstep(0.15, 0.45, slope));
    c = mix(c, s.palette.snow, smoothstep(4.0, 6.0, height) * (1.0 - smoothstep(0.4, 0.7, slope)));
    const double tex = value_noise(p.x() * 1.2, p.z() * 1.2, s.seed + 3) - 0.5;
    c *= 1.0 + 0.25 * tex;
    c *= 0.55 + 0.45 * std::max(0.0, n.dot(kToSun));
    const double haze = smoothstep(15.0, 120.0, std::hypot(p.x(), p.z()));
    return mix(c, s.palette.sky_horizon, 0.7 * haze);
  }

  Eigen::Vector3d wall(const Eigen::Vector3d& p) const {
    const double tex = value_noise(p.x() * 1.5, p.y() * 1.5, s.seed + 11) - 0.5;
    return s.palette.wall * (1.0 + 0.4 * tex);
  }
};

}  // namespace

void SyntheticScene::validate() const {
  if (octaves < 1 || octaves > 12) throw std::invalid_argument("scene: octaves must be in [1,12]");
  if (amplitude < 0 || mountain_height < 0) throw std::invalid_argument("scene: heights must be >= 0");
  if (!(feature_scale > 0)) throw std::invalid_argument("scene: feature_scale must be > 0");
  if (!(camera_height > amplitude)) {
    throw std::invalid_argument("scene: camera_height must exceed amplitude");
  }
  if (!(horizon_distance > 1)) throw std::invalid_argument("scene: horizon_distance must be > 1");
  if (wall_depth && !(*wall_depth > 0)) throw std::invalid_argument("scene: wall_depth must be > 0");
}

double SyntheticScene::ground_y(double x, double z) const {
  return camera_height - Shader{*this}.elevation(x, z);
}

SyntheticScene SyntheticScene::Random(uint64_t seed) {
  Rng rng(splitmix(seed));
  SyntheticScene s;
  s.seed = seed;
  s.octaves = static_cast<int>(uniform_int(rng, 3, 5));
  s.amplitude = uniform(rng, 0.2, 0.6);
  s.feature_scale = uniform(rng, 3.0, 6.0);
  s.camera_height = s.amplitude + uniform(rng, 0.9, 1.4);
  s.mountain_height = uniform(rng, 4.0, 12.0);
  Palette p;
  p.sky_zenith = jitter(rng, p.sky_zenith, 0.12);
  p.sky_horizon = jitter(rng, p.sky_horizon, 0.08);
  p.grass = jitter(rng, p.grass, 0.12);
  p.rock = jitter(rng, p.rock, 0.10);
  s.palette = p;
  return s;
}

nlohmann::json SyntheticScene::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["octaves"] = octaves;
  j["amplitude"] = amplitude;
  j["feature_scale"] = feature_scale;
  j["camera_height"] = camera_height;
  j["mountain_height"] = mountain_height;
  j["horizon_distance"] = horizon_distance;
  j["wall_depth"] = wall_depth ? nlohmann::json(*wall_depth) : nlohmann::json(nullptr);
  j["palette"] = {{"sky_zenith", color_json(palette.sky_zenith)},
                  {"sky_horizon", color_json(palette.sky_horizon)},
                  {"cloud", color_json(palette.cloud)},
                  {"grass", color_json(palette.grass)},
                  {"rock", color_json(palette.rock)},
                  {"snow", color_json(palette.snow)},
                  {"wall", color_json(palette.wall)}};
  return j;
}

SyntheticScene SyntheticScene::FromJson(const nlohmann::json& j) {
  SyntheticScene s;
  try {
    s.seed = j.at("seed").get<uint64_t>();
    s.octaves = j.value("octaves", s.octaves);
    s.amplitude = j.value("amplitude", s.amplitude);
    s.feature_scale = j.value("feature_scale", s.feature_scale);
    s.camera_height = j.value("camera_height", s.camera_height);
    s.mountain_height = j.value("mountain_height", s.mountain_height);
    s.horizon_distance = j.value("horizon_distance", s.horizon_distance);
    if (j.contains("wall_depth") && !j["wall_depth"].is_null()) {
      s.wall_depth = j["wall_depth"].get<double>();
    }
    if (j.contains("palette")) {
      const auto& p = j["palette"];
      s.palette.sky_zenith = color_from(p.at("sky_zenith"));
      s.palette.sky_horizon = color_from(p.at("sky_horizon"));
      s.palette.cloud = color_from(p.at("cloud"));
      s.palette.grass = color_from(p.at("grass"));
      s.palette.rock = color_from(p.at("rock"));
      s.palette.snow = color_from(p.at("snow"));
      s.palette.wall = color_from(p.at("wall"));
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("scene: ") + e.what());
  }
  s.validate();
  return s;
}

RGBDImage render_synthetic(const SyntheticScene& scene, const CameraPose& pose,
                           const CameraIntrinsics& k) {
  scene.validate();
  if (!k.valid()) throw std::invalid_argument("render_synthetic: invalid intrinsics");
  const Shader sh{scene};
  const int H = k.height;
  const int W = k.width;
  auto rgb = torch::empty({3, H, W}, torch::kFloat32);
  auto disp = torch::empty({1, H, W}, torch::kFloat32);
  auto* rp = rgb.data_ptr<float>();
  auto* dp = disp.data_ptr<float>();
  const Eigen::Vector3d o = pose.translation;
  const double t_far = scene.horizon_distance;

  for (int v = 0; v < H; ++v) {
    for (int u = 0; u < W; ++u) {
      // Camera-space ray with unit z, so the march parameter is camera depth.
      const Eigen::Vector3d dc((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
      const Eigen::Vector3d dir = pose.rotation * dc;
      auto below = [&](double t) {
        const Eigen::Vector3d p = o + t * dir;
        return p.y() >= scene.ground_y(p.x(), p.z());
      };

      double t_hit = -1;
      bool hit_wall = false;
      double t_limit = t_far;
      if (scene.wall_depth && dir.z() > 1e-9) {
        const double tw = (*scene.wall_depth - o.z()) / dir.z();
        if (tw > 0 && o.y() + tw * dir.y() >= 0.0) {
          t_limit = std::min(t_limit, tw);
          hit_wall = true;
        }
      }
      double t0 = 0.02;
      if (below(t0)) {
        t_hit = t0;
      } else {
        while (t0 < t_limit) {
          const double t1 = std::min(t0 + std::max(0.02, 0.02 * t0), t_limit);
          if (below(t1)) {
            double lo = t0, hi = t1;
            for (int i = 0; i < 40; ++i) {
              const double mid = 0.5 * (lo + hi);
              (below(mid) ? hi : lo) = mid;
            }
            t_hit = hi;
            break;
          }
          t0 = t1;
        }
      }

      Eigen::Vector3d c;
      double d;
      if (t_hit > 0) {
        c = sh.terrain(o + t_hit * dir);
        d = 1.0 / t_hit;
      } else if (hit_wall) {
        c = sh.wall(o + t_limit * dir);
        d = 1.0 / t_limit;
      } else {
        c = sh.sky(dir);
        d = kSkyDisparity;
      }
      for (int ch = 0; ch < 3; ++ch) {
        rp[(ch * H + v) * W + u] = static_cast<float>(std::clamp(c[ch], 0.0, 1.0));
      }
      dp[v * W + u] = static_cast<float>(std::min(d, 1.0));
    }
  }
  return RGBDImage::Create(rgb, disp);
}

CameraIntrinsics default_intrinsics(int image_size) {
  return CameraIntrinsics::FromFov(image_size, image_size, 60.0);
}

std::vector<SyntheticItem> synthetic_collection(int count, int image_size, uint64_t seed) {
  if (count < 1) throw std::invalid_argument("synthetic_collection: count must be >= 1");
  const auto k = default_intrinsics(image_size);
  std::vector<SyntheticItem> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const uint64_t scene_seed = splitmix(seed) + static_cast<uint64_t>(i);
    Rng rng(splitmix(scene_seed ^ 0x5EEDull));
    SyntheticItem item;
    item.scene = SyntheticScene::Random(scene_seed);
    item.pose = euler_pose(deg_to_rad(uniform(rng, 0.0, 360.0)),
                           deg_to_rad(uniform(rng, -4.0, 2.0)), 0.0, Eigen::Vector3d(Eigen::Vector3d::Zero()));
    item.image = render_synthetic(item.scene, item.pose, k);
    out.push_back(std::move(item));
  }
  return out;
}

std::string to_string(DepthBackend b) {
  switch (b) {
    case DepthBackend::kSynthetic: return "synthetic";
    case DepthBackend::kConstantPlane: return "constant-plane";
    case DepthBackend::kExternalFile: return "external-file";
  }
  return "?";
}

DepthBackend depth_backend_from_string(const std::string& s) {
  if (s == "synthetic") return DepthBackend::kSynthetic;
  if (s == "constant-plane") return DepthBackend::kConstantPlane;
  if (s == "external-file") return DepthBackend::kExternalFile;
  throw std::invalid_argument("unknown depth backend: " + s);
}

torch::Tensor DepthProvider::normalize(const torch::Tensor& raw) const {
  if (!(normalize_min > 0 && normalize_min < normalize_max && normalize_max <= 1)) {
    throw std::invalid_argument("DepthProvider: need 0 < normalize_min < normalize_max <= 1");
  }
  const double lo = raw.min().item<double>();
  const double hi = raw.max().item<double>();
  if (hi - lo < 1e-12) return raw.clamp(normalize_min, normalize_max);
  return (normalize_min + (normalize_max - normalize_min) * (raw - lo) / (hi - lo))
      .clamp(normalize_min, normalize_max);
}

std::filesystem::path disparity_path_for(const std::filesystem::path& image_path) {
  auto p = image_path;
  p.replace_extension(".disp.png");
  return p;
}

torch::Tensor DepthProvider::disparity_for(const std::filesystem::path& image_path,
                                           int image_size) const {
  switch (backend) {
    case DepthBackend::kConstantPlane:
      return normalize(torch::full({1, image_size, image_size}, constant_disparity));
    case DepthBackend::kExternalFile: {
      const auto dp = disparity_path_for(image_path);
      cv::Mat m = cv::imread(dp.string(), cv::IMREAD_UNCHANGED);
      if (m.empty()) throw DecodeError("missing or unreadable disparity file " + dp.string());
      if (m.channels() != 1) cv::cvtColor(m, m, cv::COLOR_BGR2GRAY);
      cv::Mat f;
      m.convertTo(f, CV_32F, m.depth() == CV_16U ? 1.0 / 65535.0 : 1.0 / 255.0);
      f = center_crop_resize(f, image_size);
      return normalize(torch::from_blob(f.data, {1, f.rows, f.cols}, torch::kFloat32).clone());
    }
    case DepthBackend::kSynthetic:
      break;
  }
  throw std::invalid_argument(
      "synthetic depth exists only for generated scenes; use constant-plane or external-file");
}

namespace {

bool is_image_file(const std::filesystem::path& p) {
  std::string name = p.filename().string();
  std::transform(name.begin(), name.end(), name.begin(), ::tolower);
  auto ends = [&](const std::string& s) {
    return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
  };
  if (ends(".disp.png")) return false;
  return ends(".png") || ends(".jpg") || ends(".jpeg");
}

}  // namespace

LoadedCollection load_collection(const std::filesystem::path& dir, int image_size,
                                 const DepthProvider& depth, uint64_t seed) {
  if (!std::filesystem::is_directory(dir)) {
    throw std::invalid_argument("dataset path is not a directory: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  Rng rng(seed);
  std::shuffle(files.begin(), files.end(), rng);

  LoadedCollection out;
  for (const auto& f : files) {
    try {
      cv::Mat m = cv::imread(f.string(), cv::IMREAD_COLOR);
      if (m.empty()) throw DecodeError("cannot decode image");
      const auto rgb = rgb_from_mat(center_crop_resize(m, image_size));
      const auto disp = depth.disparity_for(f, image_size);
      auto item = RGBDImage::Create(rgb, disp);
      item.validate();
      out.items.push_back(std::move(item));
      out.paths.push_back(f);
    } catch (const std::exception& e) {
      out.warnings.push_back("skipping " + f.string() + ": " + e.what());
    }
  }
  if (out.items.empty()) {
    throw std::invalid_argument("no readable images in " + dir.string());
  }
  return out;
}

void write_synthetic_dataset(const std::filesystem::path& dir, int count, int image_size,
                             uint64_t seed) {
  std::filesystem::create_directories(dir);
  const auto items = synthetic_collection(count, image_size, seed);
  for (size_t i = 0; i < items.size(); ++i) {
    std::ostringstream name;
    name << std::setw(6) << std::setfill('0') << i;
    const auto base = dir / name.str();
    write_png(base.string() + ".png", items[i].image.rgb);
    write_disparity_png(base.string() + ".disp.png", items[i].image.disparity);
    nlohmann::json rec = items[i].scene.to_json();
    const Eigen::Matrix4d m = items[i].pose.matrix();
    rec["pose"] = nlohmann::json::array();
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) rec["pose"].push_back(m(r, c));
    }
    rec["image_size"] = image_size;
    std::ofstream(base.string() + ".json") << rec.dump(2) << "\n";
  }
}

Dataset::Dataset(std::vector<RGBDImage> items, uint64_t seed)
    : items_(std::move(items)), seed_(seed) {
  if (items_.empty()) throw std::invalid_argument("dataset is empty");
  for (const auto& it : items_) {
    if (it.batch() != 1) throw std::invalid_argument("dataset items must be single images");
    if (it.height() != items_[0].height() || it.width() != items_[0].width()) {
      throw std::invalid_argument("dataset items must share one size");
    }
  }
}

int64_t Dataset::image_size() const { return items_[0].height(); }

std::vector<int64_t> Dataset::epoch_order(int64_t epoch) const {
  std::vector<int64_t> order(items_.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);
  Rng rng(splitmix(seed_ ^ splitmix(static_cast<uint64_t>(epoch))));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::vector<int64_t> Dataset::batch_indices(int64_t step, int64_t batch_size) const {
  const auto n = static_cast<int64_t>(items_.size());
  std::vector<int64_t> out;
  out.reserve(batch_size);
  int64_t cached_epoch = -1;
  std::vector<int64_t> order;
  for (int64_t j = 0; j < batch_size; ++j) {
    const int64_t pos = step * batch_size + j;
    const int64_t epoch = pos / n;
    if (epoch != cached_epoch) {
      order = epoch_order(epoch);
      cached_epoch = epoch;
    }
    out.push_back(order[pos % n]);
  }
  return out;
}

RGBDImage Dataset::batch(int64_t step, int64_t batch_size) const {
  std::vector<RGBDImage> picked;
  for (const auto i : batch_indices(step, batch_size)) picked.push_back(items_[i]);
  return RGBDImage::Stack(picked);
}

}  // namespace pvg
