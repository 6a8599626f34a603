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

#include <functional>
#include <span>
#include <vector>

#include "voxfuse/csu.hpp"
#include "voxfuse/metrics.hpp"
#include "voxfuse/rcm.hpp"
#include "voxfuse/sim.hpp"
#include "voxfuse/tla.hpp"

// Frame-loop orchestration: local volumes -> TLA -> RCM -> CSU, with
// per-module toggles for the ablation study.

namespace voxfuse::pipeline {

struct PipelineConfig {
  bool enable_tla = true;
  bool enable_rcm = true;
  csu::FusionStrategy strategy = csu::FusionStrategy::kWeightedProbability;
  rcm::RcmParams rcm;
  double lambda = 1.0;
  // Zero weights give the untrained (0.5, 0.5) fusion.
  tla::MlpWeights weights = tla::MlpWeights::zeros();
};

struct StepOutcome {
  std::size_t visible_count = 0;
  std::size_t temporal_count = 0;
};

/// One frame of the embodied recursion. prev is the previous frame's local
/// volumes (nullptr on the first frame); the caller keeps vol as the next
/// frame's prev.
StepOutcome step(csu::SparseGlobalMap& map, const sim::LocalVolumes* prev,
                 const sim::LocalVolumes& vol, const PipelineConfig& cfg);

using Predictor =
    std::function<sim::LocalVolumes(const geometry::GeometricPrior&, int)>;

struct FrameMetrics {
  int frame = 0;
  double iou = 0.0;
  double miou = 0.0;
  std::int64_t map_entries = 0;
};

struct EpisodeResult {
  csu::SparseGlobalMap map;
  metrics::EvalReport report;
  std::vector<FrameMetrics> trace;
};

EpisodeResult run_episode(const sim::Scene& scene,
                          const std::vector<geometry::GeometricPrior>& traj,
                          const Predictor& predictor,
                          const PipelineConfig& cfg,
                          metrics::MaskMode mask = metrics::MaskMode::kVisited);

/// Runs several configurations over the same episode, generating each local
/// volume once and sharing TLA/RCM stages between configs that agree on
/// them. Results match per-config run_episode exactly.
std::vector<EpisodeResult> run_episode_multi(
    const sim::Scene& scene,
    const std::vector<geometry::GeometricPrior>& traj,
    const Predictor& predictor, std::span<const PipelineConfig> configs,
    metrics::MaskMode mask = metrics::MaskMode::kVisited);

/// Predictor factories for the standard simulators.
Predictor oracle_predictor(const sim::Scene& scene, double logit_scale = 8.0);
Predictor noisy_predictor(const sim::Scene& scene,
                          const sim::NoiseConfig& noise);

}  // namespace voxfuse::pipeline
