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
#include <vector>

#include <Eigen/Core>

#include "voxfuse/geometry.hpp"
#include "voxfuse/grid.hpp"

namespace voxfuse::sim {

// 12-class indoor palette; 0 is reserved for empty space.
enum SceneClass : int {
  kEmpty = 0,
  kCeiling = 1,
  kFloor = 2,
  kWall = 3,
  kWindow = 4,
  kChair = 5,
  kBed = 6,
  kSofa = 7,
  kTable = 8,
  kTvs = 9,
  kFurniture = 10,
  kObjects = 11,
};
constexpr int kNumSceneClasses = 12;
const char* scene_class_name(int id);

/// Ground-truth semantic labels on a box of the global voxel lattice.
struct Scene {
  Eigen::Vector3i bbox_min = Eigen::Vector3i::Zero();  // lattice index
  Eigen::Vector3i shape = Eigen::Vector3i::Zero();
  std::vector<std::int16_t> labels;  // x-major, z fastest
  int num_classes = kNumSceneClasses;
  Eigen::Vector3d voxel_size = Eigen::Vector3d::Zero();

  std::int64_t cell_index(int lx, int ly, int lz) const {
    return (static_cast<std::int64_t>(lx) * shape.y() + ly) * shape.z() + lz;
  }
  std::int16_t& at(int lx, int ly, int lz) {
    return labels[cell_index(lx, ly, lz)];
  }
  std::int16_t at(int lx, int ly, int lz) const {
    return labels[cell_index(lx, ly, lz)];
  }

  /// Label at a global lattice coordinate; empty outside the bbox.
  int label_at(const geometry::VoxelCoord& c) const;

  void validate() const;
};

struct RoomConfig {
  Eigen::Vector3d size_m{6.4, 6.4, 2.88};
  int furniture_count = 5;
  int num_classes = kNumSceneClasses;
  Eigen::Vector3d voxel_size{0.16, 0.16, 0.16};
};

/// Structured noise for the synthetic local predictor. The per-voxel logit
/// noise std is base_noise + depth_noise_gain*d + boundary_noise_gain*b, and
/// the one-hot peak is flipped with probability
/// label_flip_prob * (0.5 + 0.5*b) * min(1, d / d_max), where d_max is the
/// Euclidean norm of the local volume extent. The flip target is a fixed
/// wrong class per voxel (seed-keyed hash), so repeated flips of one voxel
/// agree, the way systematic depth confusions do.
struct NoiseConfig {
  double logit_scale = 8.0;
  double base_noise = 0.8;
  double depth_noise_gain = 0.5;
  double boundary_noise_gain = 1.8;
  double label_flip_prob = 0.55;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Per-frame local prediction: semantic logits and features over the
/// prior's local grid.
struct LocalVolumes {
  Grid4 logits;    // [X_l, Y_l, Z_l, N_c]
  Grid4 features;  // [X_l, Y_l, Z_l, C_f]
  geometry::GeometricPrior prior;

  void validate() const;  // shape consistency + finiteness
};

constexpr int kFeatureChannels = 8;

struct CameraModel {
  geometry::CameraIntrinsics intrinsics{240.0, 240.0, 160.0, 120.0, 320, 240};
  Eigen::Vector3d local_extent{4.8, 4.8, 2.88};
};

Scene generate_scene(const RoomConfig& config, std::uint64_t seed);

/// Prior for an arbitrary pose: the local volume is world-axis-aligned,
/// centered half an x-extent ahead of the camera (horizontal component of
/// the optical axis) and vertically on the camera, origin snapped to the
/// lattice.
geometry::GeometricPrior prior_from_pose(const geometry::CameraPose& pose,
                                         const CameraModel& camera,
                                         const Eigen::Vector3d& voxel_size);

/// Yaw-only pose at `position` looking along yaw in the xy plane
/// (camera +z forward, +y down).
geometry::CameraPose yaw_pose(const Eigen::Vector3d& position, double yaw);

std::vector<geometry::GeometricPrior> generate_trajectory(
    const Scene& scene, int n_frames, std::uint64_t seed,
    const CameraModel& camera = {}, double step = 0.2);

/// Noise-free local predictor: one-hot logits at the true class scaled by
/// logit_scale; features are a class embedding plus a small voxel hash.
LocalVolumes oracle_local(const Scene& scene,
                          const geometry::GeometricPrior& prior,
                          double logit_scale = 8.0);

/// Oracle plus depth/boundary-correlated noise; deterministic given
/// (noise.seed, frame).
LocalVolumes noisy_local(const Scene& scene,
                         const geometry::GeometricPrior& prior,
                         const NoiseConfig& noise, int frame = 0);

// Scene export/import: CSV of non-empty cells `ix,iy,iz,label` plus a JSON
// sidecar (voxel_size, num_classes, bbox). Bit-exact round trip.
void save_scene(const Scene& scene, const std::filesystem::path& csv_path,
                const std::filesystem::path& sidecar_path);
Scene load_scene(const std::filesystem::path& csv_path,
                 const std::filesystem::path& sidecar_path);

}  // namespace voxfuse::sim
