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

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "voxfuse/geometry.hpp"
#include "voxfuse/sim.hpp"

// Cross-temporal logit aggregation: for voxels visible in two adjacent
// frames, a small MLP scores the relative reliability of the two
// observations from their features and positional encodings, and the
// logits are fused as a softmax-weighted convex combination.

namespace voxfuse::tla {

constexpr int kPositionBands = 4;
// camera-frame xyz + normalized image uv, per timestep
constexpr int kPositionDim = 2 * 5 * kPositionBands;
constexpr int kHidden = 32;

constexpr int pair_feature_dim(int feature_channels, int position_dim) {
  return 2 * (feature_channels + position_dim) + 2 * feature_channels;
}
constexpr int kPairFeatureDim =
    pair_feature_dim(sim::kFeatureChannels, kPositionDim);  // 112

/// Two-layer fusion MLP (affine, ReLU, affine -> 2 logits).
struct MlpWeights {
  Eigen::MatrixXd layer1;  // hidden x in_dim
  Eigen::VectorXd bias1;   // hidden
  Eigen::MatrixXd layer2;  // 2 x hidden
  Eigen::VectorXd bias2;   // 2

  int in_dim() const { return static_cast<int>(layer1.cols()); }
  int hidden() const { return static_cast<int>(layer1.rows()); }

  /// All-zero weights: fusion_weights returns (0.5, 0.5) for any input.
  static MlpWeights zeros(int in_dim = kPairFeatureDim, int hidden = kHidden);
  /// Uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] weights, zero biases.
  static MlpWeights seeded(std::uint64_t seed, int in_dim = kPairFeatureDim,
                           int hidden = kHidden);

  nlohmann::json to_json() const;
  static MlpWeights from_json(const nlohmann::json& j);

  friend bool operator==(const MlpWeights&, const MlpWeights&);
};

/// One voxel observed at both t and t-1, with everything the fusion MLP
/// and aggregation need.
struct TemporalPair {
  geometry::VoxelCoord voxel;
  Eigen::VectorXd logits_t, logits_prev;  // N_c
  Eigen::VectorXd feat_t, feat_prev;      // C_f
  Eigen::VectorXd pos_t, pos_prev;        // kPositionDim
};

struct TemporalPairSet {
  std::vector<TemporalPair> pairs;
  std::vector<int> index_in_frame;  // position of each pair within P_t
};

/// Sinusoidal encoding of the voxel center seen from a prior: camera-frame
/// coordinates plus image coordinates normalized to [0,1].
Eigen::VectorXd position_encoding(const Eigen::Vector3d& p_world,
                                  const geometry::GeometricPrior& prior,
                                  int num_bands = kPositionBands);

/// Intersects P_t with the previous frame's visible set and samples both
/// volumes trilinearly at each survivor. prev == nullptr (first frame)
/// yields an empty set.
TemporalPairSet build_temporal_pairs(
    const std::vector<geometry::VoxelCoord>& current_visible,
    const sim::LocalVolumes& vol_t, const sim::LocalVolumes* vol_prev);

/// [f_t, pe_t, f_prev, pe_prev, f_t - f_prev, f_t * f_prev]
Eigen::VectorXd pair_feature(const TemporalPair& pair);

/// Softmax over the MLP's two output logits. Throws on non-finite output.
Eigen::Vector2d fusion_weights(const MlpWeights& w,
                               const Eigen::VectorXd& feature);

/// Column k of the result is the weight pair for feature column k.
/// Processes fixed-size column blocks so results are byte-identical for
/// any thread count.
Eigen::Matrix2Xd fusion_weights_batch(const MlpWeights& w,
                                      const Eigen::MatrixXd& features);

inline Eigen::VectorXd aggregate_logits(const Eigen::VectorXd& z_t,
                                        const Eigen::VectorXd& z_prev,
                                        double w_t, double w_prev) {
  return w_t * z_t + w_prev * z_prev;
}

/// -log softmax(fused)[label]
double ce_loss(const Eigen::VectorXd& fused_logits, int label);

struct TrainingExample {
  TemporalPair pair;
  int label = 0;
};

struct MlpGradients {
  Eigen::MatrixXd layer1;
  Eigen::VectorXd bias1;
  Eigen::MatrixXd layer2;
  Eigen::VectorXd bias2;
};

/// Mean CE loss of the fused logits over a batch (forward only).
double batch_loss(const MlpWeights& w,
                  const std::vector<TrainingExample>& batch);

/// Analytic gradients of batch_loss; throws on non-finite gradients.
std::pair<MlpGradients, double> batch_gradients(
    const MlpWeights& w, const std::vector<TrainingExample>& batch);

/// One SGD step; returns the updated weights and the pre-step mean loss.
std::pair<MlpWeights, double> train_step(
    const MlpWeights& w, const std::vector<TrainingExample>& batch,
    double learning_rate);

void save_weights(const MlpWeights& w, const std::filesystem::path& path);
MlpWeights load_weights(const std::filesystem::path& path);

}  // namespace voxfuse::tla
