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

#include "voxfuse/pipeline.hpp"

#include <stdexcept>
#include <unordered_set>
#include <utility>

#include "voxfuse/threading.hpp"

namespace voxfuse::pipeline {

namespace {

using geometry::VoxelCoord;

std::vector<Eigen::VectorXd> sample_frame_logits(
    const std::vector<VoxelCoord>& visible, const sim::LocalVolumes& vol) {
  std::vector<Eigen::VectorXd> out(visible.size());
  threading::parallel_for(
      static_cast<std::int64_t>(visible.size()),
      [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i) {
          const Eigen::Vector3d center =
              geometry::voxel_center(visible[i], vol.prior.voxel_size);
          out[i] = geometry::trilinear_sample(
              vol.logits, geometry::world_to_local_index(center, vol.prior));
        }
      });
  return out;
}

Eigen::MatrixXd stack_pair_features(const tla::TemporalPairSet& pairs) {
  if (pairs.pairs.empty()) return {};
  Eigen::MatrixXd features(tla::pair_feature(pairs.pairs.front()).size(),
                           static_cast<Eigen::Index>(pairs.pairs.size()));
  threading::parallel_for(
      static_cast<std::int64_t>(pairs.pairs.size()),
      [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i) {
          features.col(i) = tla::pair_feature(pairs.pairs[i]);
        }
      });
  return features;
}

// Replaces temporally consistent entries with the aggregated logits.
void apply_tla(const tla::TemporalPairSet& pairs,
               const Eigen::MatrixXd& pair_features,
               const tla::MlpWeights& weights,
               std::vector<Eigen::VectorXd>& logits) {
  if (pairs.pairs.empty()) return;
  const Eigen::Matrix2Xd w = tla::fusion_weights_batch(weights, pair_features);
  threading::parallel_for(
      static_cast<std::int64_t>(pairs.pairs.size()),
      [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i) {
          const tla::TemporalPair& pair = pairs.pairs[i];
          logits[pairs.index_in_frame[i]] = tla::aggregate_logits(
              pair.logits_t, pair.logits_prev, w(0, i), w(1, i));
        }
      });
}

std::vector<Eigen::VectorXd> to_probs(
    const std::vector<Eigen::VectorXd>& logits) {
  std::vector<Eigen::VectorXd> probs(logits.size());
  threading::parallel_for(static_cast<std::int64_t>(logits.size()),
                          [&](std::int64_t lo, std::int64_t hi) {
                            for (std::int64_t i = lo; i < hi; ++i) {
                              probs[i] = csu::logits_to_probs(logits[i]);
                            }
                          });
  return probs;
}

}  // namespace

StepOutcome step(csu::SparseGlobalMap& map, const sim::LocalVolumes* prev,
                 const sim::LocalVolumes& vol, const PipelineConfig& cfg) {
  if (map.num_classes() != vol.logits.channels()) {
    throw std::invalid_argument("step: class count mismatch with map");
  }
  if ((map.voxel_size() - vol.prior.voxel_size).cwiseAbs().maxCoeff() >
      1e-12) {
    throw std::invalid_argument("step: voxel size mismatch with map");
  }

  const std::vector<VoxelCoord> visible = geometry::visible_voxels(vol.prior);
  std::vector<Eigen::VectorXd> logits = sample_frame_logits(visible, vol);

  StepOutcome outcome;
  outcome.visible_count = visible.size();
  if (cfg.enable_tla && prev != nullptr) {
    const tla::TemporalPairSet pairs =
        tla::build_temporal_pairs(visible, vol, prev);
    outcome.temporal_count = pairs.pairs.size();
    apply_tla(pairs, stack_pair_features(pairs), cfg.weights, logits);
  }

  const std::vector<double> confidences =
      cfg.enable_rcm ? rcm::modulate_frame(visible, vol.prior, cfg.rcm)
                     : std::vector<double>(visible.size(), 1.0);
  map.integrate_frame(visible, to_probs(logits), confidences, cfg.strategy);
  return outcome;
}

std::vector<EpisodeResult> run_episode_multi(
    const sim::Scene& scene,
    const std::vector<geometry::GeometricPrior>& traj,
    const Predictor& predictor, std::span<const PipelineConfig> configs,
    metrics::MaskMode mask) {
  if (traj.empty()) {
    throw std::invalid_argument("run_episode: empty trajectory");
  }
  if (configs.empty()) return {};

  for (const PipelineConfig& cfg : configs) {
    if (cfg.enable_rcm) cfg.rcm.validate();
  }

  std::vector<EpisodeResult> results;
  results.reserve(configs.size());
  for (const PipelineConfig& cfg : configs) {
    results.push_back(EpisodeResult{
        csu::SparseGlobalMap(scene.num_classes, scene.voxel_size, cfg.lambda),
        {},
        {}});
  }

  // Configs sharing TLA settings (or RCM settings) share the computation.
  std::vector<int> tla_group(configs.size(), -1);
  std::vector<const tla::MlpWeights*> tla_weights;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    if (!configs[i].enable_tla) continue;
    for (std::size_t g = 0; g < tla_weights.size(); ++g) {
      if (*tla_weights[g] == configs[i].weights) {
        tla_group[i] = static_cast<int>(g);
        break;
      }
    }
    if (tla_group[i] < 0) {
      tla_group[i] = static_cast<int>(tla_weights.size());
      tla_weights.push_back(&configs[i].weights);
    }
  }
  std::vector<int> rcm_group(configs.size(), -1);
  std::vector<rcm::RcmParams> rcm_params;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    if (!configs[i].enable_rcm) continue;
    const rcm::RcmParams& p = configs[i].rcm;
    for (std::size_t g = 0; g < rcm_params.size(); ++g) {
      if (rcm_params[g].alpha == p.alpha && rcm_params[g].beta == p.beta &&
          rcm_params[g].c_min == p.c_min) {
        rcm_group[i] = static_cast<int>(g);
        break;
      }
    }
    if (rcm_group[i] < 0) {
      rcm_group[i] = static_cast<int>(rcm_params.size());
      rcm_params.push_back(p);
    }
  }

  std::vector<VoxelCoord> visited;
  std::unordered_set<std::uint64_t> visited_keys;
  sim::LocalVolumes prev_vol;
  bool have_prev = false;

  for (std::size_t frame = 0; frame < traj.size(); ++frame) {
    sim::LocalVolumes vol = predictor(traj[frame], static_cast<int>(frame));
    const std::vector<VoxelCoord> visible =
        geometry::visible_voxels(vol.prior);
    const std::vector<Eigen::VectorXd> raw_logits =
        sample_frame_logits(visible, vol);

    // Enhanced logits and softmax probabilities per TLA group; group -1
    // (TLA off or first frame) uses the raw samples.
    tla::TemporalPairSet pairs;
    Eigen::MatrixXd pair_features;
    if (!tla_weights.empty() && have_prev) {
      pairs = tla::build_temporal_pairs(visible, vol, &prev_vol);
      pair_features = stack_pair_features(pairs);
    }
    const std::vector<Eigen::VectorXd> raw_probs = to_probs(raw_logits);
    std::vector<std::vector<Eigen::VectorXd>> group_probs(tla_weights.size());
    for (std::size_t g = 0; g < tla_weights.size(); ++g) {
      if (!have_prev || pairs.pairs.empty()) {
        group_probs[g] = raw_probs;
        continue;
      }
      std::vector<Eigen::VectorXd> logits = raw_logits;
      apply_tla(pairs, pair_features, *tla_weights[g], logits);
      group_probs[g] = to_probs(logits);
    }

    const std::vector<double> ones(visible.size(), 1.0);
    std::vector<std::vector<double>> group_conf(rcm_params.size());
    for (std::size_t g = 0; g < rcm_params.size(); ++g) {
      group_conf[g] = rcm::modulate_frame(visible, vol.prior, rcm_params[g]);
    }

    for (const VoxelCoord& c : visible) {
      if (visited_keys.insert(csu::pack_voxel_key(c)).second) {
        visited.push_back(c);
      }
    }

    for (std::size_t i = 0; i < configs.size(); ++i) {
      const std::vector<Eigen::VectorXd>& probs =
          tla_group[i] >= 0 ? group_probs[tla_group[i]] : raw_probs;
      const std::vector<double>& conf =
          rcm_group[i] >= 0 ? group_conf[rcm_group[i]] : ones;
      results[i].map.integrate_frame(visible, probs, conf,
                                     configs[i].strategy);
      const metrics::EvalReport frame_report =
          metrics::evaluate_map(results[i].map, scene, visited, mask);
      results[i].trace.push_back(
          FrameMetrics{static_cast<int>(frame), frame_report.iou,
                       frame_report.miou,
                       static_cast<std::int64_t>(results[i].map.size())});
    }

    prev_vol = std::move(vol);
    have_prev = true;
  }

  for (std::size_t i = 0; i < configs.size(); ++i) {
    results[i].report =
        metrics::evaluate_map(results[i].map, scene, visited, mask);
  }
  return results;
}

EpisodeResult run_episode(const sim::Scene& scene,
                          const std::vector<geometry::GeometricPrior>& traj,
                          const Predictor& predictor,
                          const PipelineConfig& cfg,
                          metrics::MaskMode mask) {
  std::vector<EpisodeResult> results =
      run_episode_multi(scene, traj, predictor, {&cfg, 1}, mask);
  return std::move(results.front());
}

Predictor oracle_predictor(const sim::Scene& scene, double logit_scale) {
  return [&scene, logit_scale](const geometry::GeometricPrior& prior, int) {
    return sim::oracle_local(scene, prior, logit_scale);
  };
}

Predictor noisy_predictor(const sim::Scene& scene,
                          const sim::NoiseConfig& noise) {
  return [&scene, noise](const geometry::GeometricPrior& prior, int frame) {
    return sim::noisy_local(scene, prior, noise, frame);
  };
}

}  // namespace voxfuse::pipeline
