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
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "voxfuse/geometry.hpp"

// Confidence-driven incremental state update: the sparse global map and the
// recursive probability fusion that assimilates per-frame observations,
// plus the alternative fusion strategies used for ablation.

namespace voxfuse::csu {

/// One sparse map entry: coordinate, semantic probability vector,
/// confidence, observation count.
struct VoxelState {
  geometry::VoxelCoord coord;
  Eigen::VectorXd probs;     // simplex: >= 0, sums to 1 within 1e-9
  double confidence = 0.0;   // in (0, 1]
  int count = 0;             // >= 1
};

enum class FusionStrategy {
  kWeightedProbability,  // recursive confidence-weighted mean (default)
  kWeightedLogit,        // same recursion in log-probability space
  kHighestProbability,   // keep the observation with max conf-scaled peak
  kOverwrite,            // latest observation wins
};

const char* fusion_strategy_name(FusionStrategy s);
FusionStrategy fusion_strategy_from_name(const std::string& name);

/// Numerically stable softmax.
Eigen::VectorXd logits_to_probs(const Eigen::VectorXd& logits);

/// First observation of a voxel: state (coord, probs, confidence, 1).
/// Throws if probs is off the simplex or confidence is outside (0, 1].
VoxelState init_voxel(const geometry::VoxelCoord& coord,
                      const Eigen::VectorXd& probs, double confidence);

/// Recursive confidence-weighted fusion:
///   s <- (lambda*n*c_prev*s_prev + c_new*s_new) / (lambda*n*c_prev + c_new)
///   c <- (lambda*n*c_prev + c_new) / (lambda*n + 1),  n <- n + 1
VoxelState fuse_voxel(const VoxelState& prev, const Eigen::VectorXd& probs,
                      double confidence, double lambda);

/// 21 bits per signed axis; throws on |index| >= 2^20.
std::uint64_t pack_voxel_key(const geometry::VoxelCoord& c);
geometry::VoxelCoord unpack_voxel_key(std::uint64_t key);

/// Dense conversion of the sparse map: bounding box of observed voxels,
/// unobserved cells empty, observed cells argmax with lowest-index
/// tie-break.
struct DenseLabelGrid {
  Eigen::Vector3i origin;  // lattice index of cell (0,0,0)
  Eigen::Vector3i shape;
  std::vector<int> labels;  // x-major, z fastest

  std::int64_t cell_index(int lx, int ly, int lz) const {
    return (static_cast<std::int64_t>(lx) * shape.y() + ly) * shape.z() + lz;
  }
  int at(int lx, int ly, int lz) const {
    return labels[cell_index(lx, ly, lz)];
  }
};

/// Open-ended sparse global occupancy map. The extent is never declared up
/// front; it grows as observations arrive and never shrinks.
class SparseGlobalMap {
 public:
  SparseGlobalMap(int num_classes, const Eigen::Vector3d& voxel_size,
                  double lambda = 1.0);

  int num_classes() const { return num_classes_; }
  const Eigen::Vector3d& voxel_size() const { return voxel_size_; }
  double lambda() const { return lambda_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  /// nullptr when the voxel has never been observed.
  const VoxelState* find(const geometry::VoxelCoord& coord) const;

  /// Observed-voxel bounding box (inclusive). Throws when empty.
  std::pair<Eigen::Vector3i, Eigen::Vector3i> bounding_box() const;

  /// Integrates one frame: new coordinates are initialized, existing ones
  /// are fused per the active strategy. Lists must be aligned with the
  /// visible set.
  void integrate_frame(const std::vector<geometry::VoxelCoord>& visible,
                       const std::vector<Eigen::VectorXd>& probs,
                       const std::vector<double>& confidences,
                       FusionStrategy strategy);

  DenseLabelGrid densify() const;

  /// Keys in ascending packed order, for deterministic iteration.
  std::vector<std::uint64_t> sorted_keys() const;
  const VoxelState& state_for_key(std::uint64_t key) const;

  /// CSV `ix,iy,iz,label,confidence,count[,p0..p{Nc-1}]` sorted by coord,
  /// plus a JSON sidecar (voxel_size, num_classes, lambda, strategy).
  void dump_csv(const std::filesystem::path& csv_path,
                const std::filesystem::path& sidecar_path,
                FusionStrategy strategy, bool include_probs) const;
  std::string csv_string(bool include_probs) const;

 private:
  int num_classes_;
  Eigen::Vector3d voxel_size_;
  double lambda_;
  std::unordered_map<std::uint64_t, VoxelState> entries_;
  Eigen::Vector3i bbox_min_, bbox_max_;
};

/// argmax with lowest-index tie-break.
int argmax_label(const Eigen::VectorXd& probs);

}  // namespace voxfuse::csu
