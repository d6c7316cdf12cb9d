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

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "pvg/checkpoint.hpp"
#include "pvg/config.hpp"
#include "pvg/flight_server.hpp"
#include "pvg/image_io.hpp"
#include "pvg/pipeline.hpp"

namespace fs = std::filesystem;
using namespace pvg;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kRuntime = 2;

// Thrown for problems the user can fix on the command line.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigFlags {
  std::string config;
  std::vector<std::string> overrides;
  std::string name;
  std::string runs_dir;

  void add_to(CLI::App* app) {
    app->add_option("--config", config, "Config file (flat key = value)");
    app->add_option("--override", overrides, "key=value, applied after the config file")->take_all();
    app->add_option("--name", name, "Run name (run.name)");
    app->add_option("--runs-dir", runs_dir, "Runs directory (run.runs_dir)");
  }

  // defaults <- base text (a checkpoint's stored config) <- --config <- flags
  // and overrides <- NZ_SEED.
  Settings resolve(const std::string& base_text = "", const std::vector<std::string>& extra = {}) const {
    Settings s;
    if (!base_text.empty() && config.empty()) apply_config_text(s, base_text, "checkpoint config");
    if (!config.empty()) apply_config_file(s, config);
    if (!name.empty()) apply_override(s, "run.name=" + nlohmann::json(name).dump());
    if (!runs_dir.empty()) apply_override(s, "run.runs_dir=" + nlohmann::json(runs_dir).dump());
    for (const auto& o : overrides) apply_override(s, o);
    for (const auto& o : extra) apply_override(s, o);
    apply_env_seed(s);
    s.validate();
    return s;
  }
};

fs::path run_dir(const Settings& s) { return fs::path(s.runs_dir) / s.run_name; }

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

Checkpoint load_checkpoint(const std::string& path) {
  if (!fs::exists(path)) throw InputError("checkpoint does not exist: " + path);
  return read_checkpoint(path);
}

std::string stored_config(const Checkpoint& ckpt) {
  if (ckpt.metadata.contains("run_config") && ckpt.metadata["run_config"].is_string()) {
    return ckpt.metadata["run_config"].get<std::string>();
  }
  return "";
}

std::shared_ptr<const RefinerState> model_from(const Checkpoint& ckpt) {
  return std::make_shared<const RefinerState>(state_from_checkpoint(ckpt));
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  ConfigFlags flags;
  std::string resume;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
  const Settings s = a.flags.resolve();
  const auto dir = run_dir(s);
  const auto text = to_config_text(s);
  Dataset data(build_training_set(s), s.data_seed);
  if (data.image_size() != s.image_size) throw UsageError("dataset images do not match data.image_size");

  std::optional<Trainer> trainer;
  if (!a.resume.empty()) {
    const fs::path ckpt_path = a.resume == "latest" ? latest_checkpoint(dir / "checkpoints") : fs::path(a.resume);
    if (ckpt_path.empty()) throw InputError("no checkpoint to resume in " + (dir / "checkpoints").string());
    const auto ckpt = load_checkpoint(ckpt_path.string());
    if (refiner_config_to_json(ckpt.config) != refiner_config_to_json(s.refiner())) {
      throw UsageError("checkpoint " + ckpt_path.string() + " was trained with a different model configuration");
    }
    trainer.emplace(Trainer::FromCheckpoint(ckpt, s.train_config()));
    std::cerr << "resuming from " << ckpt_path.string() << " at step " << trainer->step() << "\n";
  } else {
    trainer.emplace(RefinerState::Create(s.refiner(), s.seed), s.train_config());
  }

  fs::create_directories(dir / "checkpoints");
  write_text(dir / "config", text);
  std::ofstream log(dir / "metrics.jsonl", a.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw std::runtime_error("cannot write " + (dir / "metrics.jsonl").string());

  TrainRunOptions opts;
  opts.until_step = s.train.schedule.total_steps;
  opts.checkpoint_every = s.checkpoint_every;
  opts.checkpoint_dir = dir / "checkpoints";
  opts.checkpoint_metadata = {{"run_config", text}, {"run_name", s.run_name}};
  int64_t failed = 0;
  opts.on_report = [&](const TrainStepReport& r) {
    log << r.to_json().dump() << "\n";
    log.flush();
    if (!r.ok()) ++failed;
    if (!a.quiet && (r.step % 50 == 0 || r.step + 1 == opts.until_step)) {
      std::cerr << "step " << r.step << " t_max " << r.t_max_current;
      if (r.losses.count("rec")) std::cerr << " rec " << r.losses.at("rec");
      std::cerr << (r.ok() ? "" : " (skipped: " + r.error + ")") << "\n";
    }
  };
  train(*trainer, data, opts);
  std::cout << nlohmann::json{{"run_dir", dir.string()},
                              {"step_counter", trainer->step()},
                              {"checkpoint", checkpoint_path(opts.checkpoint_dir, trainer->step()).string()},
                              {"skipped_updates", failed}}
                   .dump()
            << std::endl;
  return kOk;
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  ConfigFlags flags;
  std::string checkpoint;
  std::string input;
  std::optional<int> scene;
  std::optional<int> steps;
  std::string trajectory;
  bool no_sky = false;
  std::string out;
};

int cmd_generate(const GenerateArgs& a) {
  const auto ckpt = load_checkpoint(a.checkpoint);
  std::vector<std::string> extra;
  if (a.no_sky) extra.push_back("generation.sky_correction=false");
  if (a.steps) extra.push_back("generation.steps=" + std::to_string(*a.steps));
  const Settings s = a.flags.resolve(stored_config(ckpt), extra);
  const auto model = model_from(ckpt);
  const int size = static_cast<int>(model->config.image_size);

  RGBDImage start;
  if (!a.input.empty()) {
    start = load_start_image(a.input, s, size);
  } else {
    start = evaluation_scene(s, a.scene.value_or(0), size).image;
  }

  GeneratedSequence seq;
  if (!a.trajectory.empty()) {
    if (!fs::exists(a.trajectory)) throw InputError("trajectory file does not exist: " + a.trajectory);
    TrajectoryPlan plan;
    try {
      plan = read_trajectory(a.trajectory);
    } catch (const std::exception& e) {
      throw InputError("malformed trajectory file " + a.trajectory + ": " + e.what());
    }
    seq = generate_along(model, start, plan, s.generation(), s.seed);
  } else {
    seq = generate_autopilot(model, start, static_cast<int>(s.generate_steps), s.generation(), s.seed);
  }

  const fs::path out = a.out.empty() ? run_dir(s) / "frames" : fs::path(a.out);
  fs::create_directories(out);
  for (size_t i = 0; i < seq.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06zu.png", i);
    write_png(out / name, seq.frames[i].rgb);
  }
  write_trajectory(out / "trajectory.json", seq.plan);
  std::cout << nlohmann::json{{"frames", seq.frames.size()},
                              {"out", out.string()},
                              {"trajectory", (out / "trajectory.json").string()},
                              {"sky_correction", s.sky_correction}}
                   .dump()
            << std::endl;
  return kOk;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  ConfigFlags flags;
  std::string checkpoint;
  std::optional<int> window;
  std::optional<int> style_length;
  std::optional<int> fid_length;
  std::optional<int> scenes;
  std::string out;
};

int cmd_evaluate(const EvaluateArgs& a) {
  const auto ckpt = load_checkpoint(a.checkpoint);
  std::vector<std::string> extra;
  if (a.window) extra.push_back("evaluation.window=" + std::to_string(*a.window));
  if (a.style_length) extra.push_back("evaluation.style_length=" + std::to_string(*a.style_length));
  if (a.fid_length) extra.push_back("evaluation.fid_length=" + std::to_string(*a.fid_length));
  if (a.scenes) extra.push_back("evaluation.scenes=" + std::to_string(*a.scenes));
  const Settings s = a.flags.resolve(stored_config(ckpt), extra);
  const auto model = model_from(ckpt);
  const auto embedder = make_embedder(s);
  auto report = evaluate_model(model, s, *embedder, s.seed);
  report.config["checkpoint"] = a.checkpoint;
  report.config["step_counter"] = ckpt.step_counter;
  report.config["embedder_backend"] = embedder->backend();

  const fs::path out = a.out.empty() ? run_dir(s) / "report.json" : fs::path(a.out);
  write_text(out, report.to_json().dump(2) + "\n");
  std::cout << report.to_json().dump() << std::endl;
  return kOk;
}

// ---------------------------------------------------------------- make-dataset

struct DatasetArgs {
  std::string out;
  int count = 64;
  int size = 64;
  uint64_t seed = 0;
};

int cmd_make_dataset(const DatasetArgs& a) {
  write_synthetic_dataset(a.out, a.count, a.size, a.seed);
  std::cout << nlohmann::json{{"out", a.out}, {"count", a.count}, {"size", a.size}}.dump() << std::endl;
  return kOk;
}

// ---------------------------------------------------------------- serve

struct ServeArgs {
  ConfigFlags flags;
  std::string checkpoint;
  std::string host;
  std::optional<int> port;
};

int cmd_serve(const ServeArgs& a) {
  const auto ckpt = load_checkpoint(a.checkpoint);
  std::vector<std::string> extra;
  if (!a.host.empty()) extra.push_back("service.host=" + nlohmann::json(a.host).dump());
  if (a.port) extra.push_back("service.port=" + std::to_string(*a.port));
  const Settings s = a.flags.resolve(stored_config(ckpt), extra);
  const auto model = model_from(ckpt);
  std::vector<RGBDImage> gallery;
  for (int i = 0; i < s.service.gallery; ++i) {
    gallery.push_back(evaluation_scene(s, i, static_cast<int>(model->config.image_size)).image);
  }

  // Block the stop signals before any thread starts so only sigwait sees them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  SessionManager sessions(model, s.service_config(), std::move(gallery));
  FlightServer server(sessions, s.service.host, static_cast<uint16_t>(s.service.port));
  server.start();
  std::cout << "listening on http://" << s.service.host << ":" << server.port() << std::endl;
  int sig = 0;
  sigwait(&signals, &sig);
  server.stop();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pvgen: perpetual view generation from a single image"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a refiner");
  train_args.flags.add_to(train_cmd);
  train_cmd->add_option("--resume", train_args.resume, "Checkpoint to resume from, or 'latest'");
  train_cmd->add_flag("--quiet", train_args.quiet, "No progress lines");

  GenerateArgs gen_args;
  auto* gen_cmd = app.add_subcommand("generate", "Render-refine-repeat from one image");
  gen_args.flags.add_to(gen_cmd);
  gen_cmd->add_option("--checkpoint", gen_args.checkpoint, "Checkpoint file")->required();
  auto* input = gen_cmd->add_option("--input", gen_args.input, "Starting image");
  gen_cmd->add_option("--scene", gen_args.scene, "Held-out synthetic scene index instead of --input")
      ->excludes(input);
  gen_cmd->add_option("--steps", gen_args.steps, "Auto-pilot steps (generation.steps)");
  gen_cmd->add_option("--trajectory", gen_args.trajectory, "Trajectory JSON to follow instead of the auto-pilot");
  gen_cmd->add_flag("--no-sky-correction", gen_args.no_sky, "Disable sky correction");
  gen_cmd->add_option("--out", gen_args.out, "Frame directory (default runs/<name>/frames)");

  EvaluateArgs eval_args;
  auto* eval_cmd = app.add_subcommand("evaluate", "Short- and long-range metrics on held-out synthetic scenes");
  eval_args.flags.add_to(eval_cmd);
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--window", eval_args.window, "Sliding FID window (default 20)");
  eval_cmd->add_option("--style-length", eval_args.style_length, "Style trajectory length (default 50)");
  eval_cmd->add_option("--fid-length", eval_args.fid_length, "Frames per sequence for FID/KID (default 50)");
  eval_cmd->add_option("--scenes", eval_args.scenes, "Number of held-out scenes (default 8)");
  eval_cmd->add_option("--out", eval_args.out, "Report path (default runs/<name>/report.json)");

  DatasetArgs data_args;
  auto* data_cmd = app.add_subcommand("make-dataset", "Write a synthetic image folder");
  data_cmd->add_option("--out", data_args.out, "Output directory")->required();
  data_cmd->add_option("--count", data_args.count, "Number of images")->check(CLI::PositiveNumber);
  data_cmd->add_option("--size", data_args.size, "Image side")->check(CLI::PositiveNumber);
  data_cmd->add_option("--seed", data_args.seed, "Scene seed");

  ServeArgs serve_args;
  auto* serve_cmd = app.add_subcommand("serve", "Interactive flight service");
  serve_args.flags.add_to(serve_cmd);
  serve_cmd->add_option("--checkpoint", serve_args.checkpoint, "Checkpoint file")->required();
  serve_cmd->add_option("--host", serve_args.host, "Bind address (service.host)");
  serve_cmd->add_option("--port", serve_args.port, "Port, 0 for any (service.port)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train_args);
    if (*gen_cmd) return cmd_generate(gen_args);
    if (*eval_cmd) return cmd_evaluate(eval_args);
    if (*data_cmd) return cmd_make_dataset(data_args);
    if (*serve_cmd) return cmd_serve(serve_args);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
