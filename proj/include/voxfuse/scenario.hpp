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

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "voxfuse/metrics.hpp"
#include "voxfuse/pipeline.hpp"
#include "voxfuse/sim.hpp"
#include "voxfuse/tla.hpp"

namespace voxfuse::scenario {

/// Config errors carry the offending key path (e.g. "pipeline.rcm.alpha").
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& message)
      : std::runtime_error(message) {}
};

struct SceneBlock {
  sim::RoomConfig room;
  std::uint64_t seed = 1;
};

struct TrajectoryBlock {
  int n_frames = 60;
  double step = 0.2;
  std::uint64_t seed = 1;
  sim::CameraModel camera;
  std::string pose_csv;  // optional external pose replay
};

struct NoiseBlock {
  std::string predictor = "noisy";  // "noisy" | "oracle"
  sim::NoiseConfig config;
};

struct PipelineBlock {
  bool enable_tla = true;
  bool enable_rcm = true;
  std::string strategy = "weighted_probability";
  rcm::RcmParams rcm;
  double lambda = 1.0;
  std::string mlp_weights_path;  // empty: zero-initialized MLP
  std::uint64_t seed = 1;
};

struct MetricsBlock {
  metrics::MaskMode mask = metrics::MaskMode::kVisited;
};

struct OutputBlock {
  std::string dir = ".";
  bool dump_probs = false;
};

struct ScenarioConfig {
  SceneBlock scene;
  TrajectoryBlock trajectory;
  NoiseBlock noise;
  PipelineBlock pipeline;
  MetricsBlock metrics;
  OutputBlock output;
};

/// Parses and validates; unknown keys are rejected with their path.
ScenarioConfig parse_scenario(const nlohmann::json& j);
ScenarioConfig load_scenario(const std::filesystem::path& path);

/// Canonical JSON with every default filled in; re-parses to an
/// equivalent config.
nlohmann::json dump_scenario(const ScenarioConfig& cfg);

/// Offsets every seed; used for multi-seed sweeps.
ScenarioConfig with_seed_offset(const ScenarioConfig& cfg,
                                std::uint64_t offset);

/// Materialization helpers shared by the CLI commands.
sim::Scene build_scene(const ScenarioConfig& cfg);
std::vector<geometry::GeometricPrior> build_trajectory(
    const ScenarioConfig& cfg, const sim::Scene& scene);
pipeline::Predictor build_predictor(const ScenarioConfig& cfg,
                                    const sim::Scene& scene);
pipeline::PipelineConfig build_pipeline_config(const ScenarioConfig& cfg);

/// Pose CSV with header `frame,tx,ty,tz,qw,qx,qy,qz`; quaternions are
/// normalized (rejected when the norm deviates from 1 by more than 1e-3)
/// and frame ids must be strictly increasing. Errors name the row.
std::vector<geometry::CameraPose> load_pose_csv(
    const std::filesystem::path& path);

struct TrainOptions {
  int epochs = 1;
  int episodes = 2;
  double learning_rate = 1e-2;
  int batch_size = 64;
  int pairs_per_frame = 256;
};

/// Temporal pairs with ground-truth labels from simulated episodes, seeded
/// away from the evaluation seeds. Deterministically subsampled per frame.
std::vector<tla::TrainingExample> collect_training_examples(
    const ScenarioConfig& cfg, int episodes, int pairs_per_frame);

struct TrainResult {
  tla::MlpWeights weights;
  std::vector<double> epoch_losses;
};

/// SGD training of the fusion MLP from a seeded initialization, batches
/// shuffled deterministically per epoch. Throws on divergence.
TrainResult train_tla_weights(const ScenarioConfig& cfg,
                              const TrainOptions& options);

}  // namespace voxfuse::scenario
