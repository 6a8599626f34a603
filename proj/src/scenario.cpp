// Copyright 2026 The voxfuse Authors
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

#include "voxfuse/scenario.hpp"

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "voxfuse/io.hpp"
#include "voxfuse/rng.hpp"

namespace voxfuse::scenario {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::string& path,
                         std::initializer_list<const char*> known) {
  if (!obj.is_object()) {
    throw ConfigError("config: " + path + " must be an object");
  }
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* k : known) {
      if (key == k) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw ConfigError("config: unknown key " +
                        (path.empty() ? key : path + "." + key));
    }
  }
}

template <typename T>
void read_field(const json& obj, const std::string& path, const char* key,
                T& value) {
  if (!obj.contains(key)) return;
  try {
    value = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: bad value at " + path + "." + key);
  }
}

void read_vec3(const json& obj, const std::string& path, const char* key,
               Eigen::Vector3d& value, bool allow_scalar) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (allow_scalar && v.is_number()) {
    value.setConstant(v.get<double>());
    return;
  }
  if (!v.is_array() || v.size() != 3 || !v.at(0).is_number() ||
      !v.at(1).is_number() || !v.at(2).is_number()) {
    throw ConfigError("config: " + path + "." + key +
                      " must be a number triple");
  }
  value = Eigen::Vector3d(v.at(0), v.at(1), v.at(2));
}

SceneBlock parse_scene(const json& j) {
  SceneBlock block;
  reject_unknown_keys(j, "scene",
                      {"room_size", "furniture", "num_classes", "voxel_size",
                       "seed"});
  read_vec3(j, "scene", "room_size", block.room.size_m, false);
  read_field(j, "scene", "furniture", block.room.furniture_count);
  read_field(j, "scene", "num_classes", block.room.num_classes);
  read_vec3(j, "scene", "voxel_size", block.room.voxel_size, true);
  read_field(j, "scene", "seed", block.seed);
  return block;
}

TrajectoryBlock parse_trajectory(const json& j) {
  TrajectoryBlock block;
  reject_unknown_keys(
      j, "trajectory",
      {"n_frames", "step", "seed", "camera", "local_extent", "pose_csv"});
  read_field(j, "trajectory", "n_frames", block.n_frames);
  read_field(j, "trajectory", "step", block.step);
  read_field(j, "trajectory", "seed", block.seed);
  read_field(j, "trajectory", "pose_csv", block.pose_csv);
  read_vec3(j, "trajectory", "local_extent", block.camera.local_extent,
            false);
  if (j.contains("camera")) {
    const json& cam = j.at("camera");
    reject_unknown_keys(cam, "trajectory.camera",
                        {"fx", "fy", "cx", "cy", "width", "height"});
    auto& k = block.camera.intrinsics;
    read_field(cam, "trajectory.camera", "fx", k.fx);
    read_field(cam, "trajectory.camera", "fy", k.fy);
    read_field(cam, "trajectory.camera", "cx", k.cx);
    read_field(cam, "trajectory.camera", "cy", k.cy);
    read_field(cam, "trajectory.camera", "width", k.width);
    read_field(cam, "trajectory.camera", "height", k.height);
  }
  if (block.n_frames < 1) {
    throw ConfigError("config: trajectory.n_frames must be >= 1");
  }
  return block;
}

NoiseBlock parse_noise(const json& j) {
  NoiseBlock block;
  reject_unknown_keys(j, "noise",
                      {"predictor", "logit_scale", "base_noise",
                       "depth_noise_gain", "boundary_noise_gain",
                       "label_flip_prob", "seed"});
  read_field(j, "noise", "predictor", block.predictor);
  if (block.predictor != "noisy" && block.predictor != "oracle") {
    throw ConfigError("config: noise.predictor must be noisy or oracle");
  }
  read_field(j, "noise", "logit_scale", block.config.logit_scale);
  read_field(j, "noise", "base_noise", block.config.base_noise);
  read_field(j, "noise", "depth_noise_gain", block.config.depth_noise_gain);
  read_field(j, "noise", "boundary_noise_gain",
             block.config.boundary_noise_gain);
  read_field(j, "noise", "label_flip_prob", block.config.label_flip_prob);
  read_field(j, "noise", "seed", block.config.seed);
  try {
    block.config.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: noise: ") + e.what());
  }
  return block;
}

PipelineBlock parse_pipeline(const json& j) {
  PipelineBlock block;
  reject_unknown_keys(j, "pipeline",
                      {"enable_tla", "enable_rcm", "strategy", "rcm",
                       "lambda", "mlp_weights_path", "seed"});
  read_field(j, "pipeline", "enable_tla", block.enable_tla);
  read_field(j, "pipeline", "enable_rcm", block.enable_rcm);
  read_field(j, "pipeline", "strategy", block.strategy);
  read_field(j, "pipeline", "lambda", block.lambda);
  read_field(j, "pipeline", "mlp_weights_path", block.mlp_weights_path);
  read_field(j, "pipeline", "seed", block.seed);
  if (j.contains("rcm")) {
    const json& r = j.at("rcm");
    reject_unknown_keys(r, "pipeline.rcm", {"alpha", "beta", "c_min"});
    read_field(r, "pipeline.rcm", "alpha", block.rcm.alpha);
    read_field(r, "pipeline.rcm", "beta", block.rcm.beta);
    read_field(r, "pipeline.rcm", "c_min", block.rcm.c_min);
  }
  try {
    (void)csu::fusion_strategy_from_name(block.strategy);
    block.rcm.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: pipeline: ") + e.what());
  }
  if (!(block.lambda > 0.0) || block.lambda > 1.0) {
    throw ConfigError("config: pipeline.lambda must be in (0, 1]");
  }
  return block;
}

MetricsBlock parse_metrics(const json& j) {
  MetricsBlock block;
  reject_unknown_keys(j, "metrics", {"mask"});
  std::string mask = metrics::mask_mode_name(block.mask);
  read_field(j, "metrics", "mask", mask);
  try {
    block.mask = metrics::mask_mode_from_name(mask);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: metrics.mask: ") + e.what());
  }
  return block;
}

OutputBlock parse_output(const json& j) {
  OutputBlock block;
  reject_unknown_keys(j, "output", {"dir", "dump_probs"});
  read_field(j, "output", "dir", block.dir);
  read_field(j, "output", "dump_probs", block.dump_probs);
  return block;
}

}  // namespace

ScenarioConfig parse_scenario(const json& j) {
  reject_unknown_keys(
      j, "", {"scene", "trajectory", "noise", "pipeline", "metrics",
              "output"});
  ScenarioConfig cfg;
  if (j.contains("scene")) cfg.scene = parse_scene(j.at("scene"));
  if (j.contains("trajectory")) {
    cfg.trajectory = parse_trajectory(j.at("trajectory"));
  }
  if (j.contains("noise")) cfg.noise = parse_noise(j.at("noise"));
  if (j.contains("pipeline")) cfg.pipeline = parse_pipeline(j.at("pipeline"));
  if (j.contains("metrics")) cfg.metrics = parse_metrics(j.at("metrics"));
  if (j.contains("output")) cfg.output = parse_output(j.at("output"));
  return cfg;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("config: malformed JSON in " + path.string() + ": " +
                      e.what());
  }
  return parse_scenario(j);
}

json dump_scenario(const ScenarioConfig& cfg) {
  const auto vec3 = [](const Eigen::Vector3d& v) {
    return json::array({v.x(), v.y(), v.z()});
  };
  return {
      {"scene",
       {{"room_size", vec3(cfg.scene.room.size_m)},
        {"furniture", cfg.scene.room.furniture_count},
        {"num_classes", cfg.scene.room.num_classes},
        {"voxel_size", vec3(cfg.scene.room.voxel_size)},
        {"seed", cfg.scene.seed}}},
      {"trajectory",
       {{"n_frames", cfg.trajectory.n_frames},
        {"step", cfg.trajectory.step},
        {"seed", cfg.trajectory.seed},
        {"pose_csv", cfg.trajectory.pose_csv},
        {"local_extent", vec3(cfg.trajectory.camera.local_extent)},
        {"camera",
         {{"fx", cfg.trajectory.camera.intrinsics.fx},
          {"fy", cfg.trajectory.camera.intrinsics.fy},
          {"cx", cfg.trajectory.camera.intrinsics.cx},
          {"cy", cfg.trajectory.camera.intrinsics.cy},
          {"width", cfg.trajectory.camera.intrinsics.width},
          {"height", cfg.trajectory.camera.intrinsics.height}}}}},
      {"noise",
       {{"predictor", cfg.noise.predictor},
        {"logit_scale", cfg.noise.config.logit_scale},
        {"base_noise", cfg.noise.config.base_noise},
        {"depth_noise_gain", cfg.noise.config.depth_noise_gain},
        {"boundary_noise_gain", cfg.noise.config.boundary_noise_gain},
        {"label_flip_prob", cfg.noise.config.label_flip_prob},
        {"seed", cfg.noise.config.seed}}},
      {"pipeline",
       {{"enable_tla", cfg.pipeline.enable_tla},
        {"enable_rcm", cfg.pipeline.enable_rcm},
        {"strategy", cfg.pipeline.strategy},
        {"rcm",
         {{"alpha", cfg.pipeline.rcm.alpha},
          {"beta", cfg.pipeline.rcm.beta},
          {"c_min", cfg.pipeline.rcm.c_min}}},
        {"lambda", cfg.pipeline.lambda},
        {"mlp_weights_path", cfg.pipeline.mlp_weights_path},
        {"seed", cfg.pipeline.seed}}},
      {"metrics", {{"mask", metrics::mask_mode_name(cfg.metrics.mask)}}},
      {"output",
       {{"dir", cfg.output.dir}, {"dump_probs", cfg.output.dump_probs}}},
  };
}

ScenarioConfig with_seed_offset(const ScenarioConfig& cfg,
                                std::uint64_t offset) {
  ScenarioConfig out = cfg;
  out.scene.seed += offset;
  out.trajectory.seed += offset;
  out.noise.config.seed += offset;
  return out;
}

sim::Scene build_scene(const ScenarioConfig& cfg) {
  return sim::generate_scene(cfg.scene.room, cfg.scene.seed);
}

std::vector<geometry::GeometricPrior> build_trajectory(
    const ScenarioConfig& cfg, const sim::Scene& scene) {
  if (!cfg.trajectory.pose_csv.empty()) {
    const std::vector<geometry::CameraPose> poses =
        load_pose_csv(cfg.trajectory.pose_csv);
    std::vector<geometry::GeometricPrior> priors;
    priors.reserve(poses.size());
    for (const geometry::CameraPose& pose : poses) {
      priors.push_back(
          sim::prior_from_pose(pose, cfg.trajectory.camera,
                               cfg.scene.room.voxel_size));
    }
    return priors;
  }
  return sim::generate_trajectory(scene, cfg.trajectory.n_frames,
                                  cfg.trajectory.seed, cfg.trajectory.camera,
                                  cfg.trajectory.step);
}

pipeline::Predictor build_predictor(const ScenarioConfig& cfg,
                                    const sim::Scene& scene) {
  if (cfg.noise.predictor == "oracle") {
    const double scale = cfg.noise.config.logit_scale;
    return [&scene, scale](const geometry::GeometricPrior& prior, int) {
      return sim::oracle_local(scene, prior, scale);
    };
  }
  const sim::NoiseConfig noise = cfg.noise.config;
  return [&scene, noise](const geometry::GeometricPrior& prior, int frame) {
    return sim::noisy_local(scene, prior, noise, frame);
  };
}

pipeline::PipelineConfig build_pipeline_config(const ScenarioConfig& cfg) {
  pipeline::PipelineConfig out;
  out.enable_tla = cfg.pipeline.enable_tla;
  out.enable_rcm = cfg.pipeline.enable_rcm;
  out.strategy = csu::fusion_strategy_from_name(cfg.pipeline.strategy);
  out.rcm = cfg.pipeline.rcm;
  out.lambda = cfg.pipeline.lambda;
  if (!cfg.pipeline.mlp_weights_path.empty()) {
    out.weights = tla::load_weights(cfg.pipeline.mlp_weights_path);
  }
  return out;
}

std::vector<tla::TrainingExample> collect_training_examples(
    const ScenarioConfig& cfg, int episodes, int pairs_per_frame) {
  std::vector<tla::TrainingExample> examples;
  for (int ep = 0; ep < episodes; ++ep) {
    const ScenarioConfig run_cfg =
        with_seed_offset(cfg, 1000 + static_cast<std::uint64_t>(ep));
    const sim::Scene scene = build_scene(run_cfg);
    const std::vector<geometry::GeometricPrior> traj =
        build_trajectory(run_cfg, scene);
    sim::LocalVolumes prev;
    for (std::size_t frame = 0; frame < traj.size(); ++frame) {
      sim::LocalVolumes vol = sim::noisy_local(
          scene, traj[frame], run_cfg.noise.config, static_cast<int>(frame));
      if (frame > 0) {
        const std::vector<geometry::VoxelCoord> visible =
            geometry::visible_voxels(vol.prior);
        tla::TemporalPairSet pairs =
            tla::build_temporal_pairs(visible, vol, &prev);
        const std::size_t n = pairs.pairs.size();
        const std::size_t stride =
            std::max<std::size_t>(1, n / std::max(1, pairs_per_frame));
        for (std::size_t i = 0; i < n; i += stride) {
          tla::TrainingExample ex;
          ex.label = scene.label_at(pairs.pairs[i].voxel);
          ex.pair = std::move(pairs.pairs[i]);
          examples.push_back(std::move(ex));
        }
      }
      prev = std::move(vol);
    }
  }
  return examples;
}

TrainResult train_tla_weights(const ScenarioConfig& cfg,
                              const TrainOptions& options) {
  TrainResult result{tla::MlpWeights::seeded(cfg.pipeline.seed), {}};
  if (options.epochs <= 0) return result;

  const std::vector<tla::TrainingExample> examples =
      collect_training_examples(cfg, options.episodes,
                                options.pairs_per_frame);
  if (examples.empty()) {
    throw std::runtime_error("train_tla_weights: no temporal pairs");
  }
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    rng::SequentialRng shuffle(rng::combine(
        cfg.pipeline.seed, static_cast<std::uint64_t>(epoch) + 77));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle.uniform_int(i)]);
    }
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t end =
          std::min(order.size(),
                   begin + static_cast<std::size_t>(options.batch_size));
      std::vector<tla::TrainingExample> batch;
      batch.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        batch.push_back(examples[order[i]]);
      }
      auto [next, loss] =
          tla::train_step(result.weights, batch, options.learning_rate);
      if (!std::isfinite(loss)) {
        throw std::runtime_error("train_tla_weights: loss diverged");
      }
      result.weights = std::move(next);
      loss_sum += loss;
      ++batches;
    }
    result.epoch_losses.push_back(loss_sum / std::max(1, batches));
  }
  return result;
}

std::vector<geometry::CameraPose> load_pose_csv(
    const std::filesystem::path& path) {
  std::istringstream csv(io::read_file(path));
  std::string line;
  if (!std::getline(csv, line) || line != "frame,tx,ty,tz,qw,qx,qy,qz") {
    throw std::runtime_error("pose CSV: bad header in " + path.string());
  }
  std::vector<geometry::CameraPose> poses;
  long last_frame = -1;
  int row = 1;
  while (std::getline(csv, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream fields(line);
    long frame;
    double tx, ty, tz, qw, qx, qy, qz;
    char c[7];
    if (!(fields >> frame >> c[0] >> tx >> c[1] >> ty >> c[2] >> tz >>
          c[3] >> qw >> c[4] >> qx >> c[5] >> qy >> c[6] >> qz)) {
      throw std::runtime_error("pose CSV: bad row " + std::to_string(row));
    }
    for (char sep : c) {
      if (sep != ',') {
        throw std::runtime_error("pose CSV: bad row " + std::to_string(row));
      }
    }
    if (frame <= last_frame) {
      throw std::runtime_error(
          "pose CSV: non-monotone frame id at row " + std::to_string(row));
    }
    last_frame = frame;
    const double norm = std::sqrt(qw * qw + qx * qx + qy * qy + qz * qz);
    if (std::abs(norm - 1.0) > 1e-3) {
      throw std::runtime_error("pose CSV: quaternion norm deviates at row " +
                               std::to_string(row));
    }
    const double w = qw / norm, x = qx / norm, y = qy / norm, z = qz / norm;
    geometry::CameraPose pose;
    pose.rotation << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z),
        2 * (x * z + w * y), 2 * (x * y + w * z), 1 - 2 * (x * x + z * z),
        2 * (y * z - w * x), 2 * (x * z - w * y), 2 * (y * z + w * x),
        1 - 2 * (x * x + y * y);
    pose.translation = Eigen::Vector3d(tx, ty, tz);
    poses.push_back(pose);
  }
  return poses;
}

}  // namespace voxfuse::scenario
