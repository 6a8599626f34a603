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
#include <vector>

#include <Eigen/Core>

#include "voxfuse/grid.hpp"

namespace voxfuse::geometry {

/// Pinhole camera intrinsics in pixels.
struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  void validate() const;  // fx,fy > 0; width,height >= 1
};

/// Camera-to-world rigid transform.
struct CameraPose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  /// Throws unless rotation is orthonormal with det +1 (tolerance 1e-9).
  void validate() const;
};

/// Per-frame geometric prior: camera plus the world-axis-aligned local
/// volume it predicts into.
struct GeometricPrior {
  CameraIntrinsics intrinsics;
  CameraPose pose;
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();   // meters, world frame
  Eigen::Vector3d extent = Eigen::Vector3d::Zero();   // meters
  Eigen::Vector3d voxel_size = Eigen::Vector3d::Zero();

  /// Local grid shape (X_l, Y_l, Z_l). Throws if extent / voxel_size is not
  /// integral within 1e-9, or either is non-positive.
  Eigen::Vector3i grid_shape() const;

  void validate() const;
};

/// Integer index on the single run-wide global voxel lattice.
/// World-space voxel center = (index + 0.5) * voxel_size per axis.
struct VoxelCoord {
  std::int32_t ix = 0;
  std::int32_t iy = 0;
  std::int32_t iz = 0;

  friend bool operator==(const VoxelCoord&, const VoxelCoord&) = default;
  friend auto operator<=>(const VoxelCoord&, const VoxelCoord&) = default;
};

inline Eigen::Vector3d voxel_center(const VoxelCoord& c,
                                    const Eigen::Vector3d& voxel_size) {
  return {(c.ix + 0.5) * voxel_size.x(), (c.iy + 0.5) * voxel_size.y(),
          (c.iz + 0.5) * voxel_size.z()};
}

/// Pinhole projection result. in_front is false when the camera-frame depth
/// is <= 1e-9 (behind-camera marker); u/v/depth are then unusable.
struct PixelProjection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
  bool in_front = false;

  bool in_image(const CameraIntrinsics& k) const {
    return in_front && u >= 0.0 && u < k.width && v >= 0.0 && v < k.height;
  }
};

Eigen::Vector3d world_to_camera(const Eigen::Vector3d& p_world,
                                const CameraPose& pose);

PixelProjection project_to_image(const Eigen::Vector3d& p_world,
                                 const GeometricPrior& prior);

/// Inverse of project_to_image for valid (u, v, depth) triples.
Eigen::Vector3d unproject_from_image(double u, double v, double depth,
                                     const GeometricPrior& prior);

/// All global-lattice voxels of the prior's local volume whose centers
/// project inside the image with positive depth. Sorted by (ix, iy, iz).
std::vector<VoxelCoord> visible_voxels(const GeometricPrior& prior);

/// Continuous local-grid index; integer values land on voxel centers.
Eigen::Vector3d world_to_local_index(const Eigen::Vector3d& p_world,
                                     const GeometricPrior& prior);

/// 8-corner trilinear interpolation of a [X,Y,Z,C] grid at a continuous
/// index. Corners outside the grid contribute zero.
Eigen::VectorXd trilinear_sample(const Grid4& grid,
                                 const Eigen::Vector3d& idx);

/// Same, writing into a preallocated output of grid.channels() entries.
void trilinear_sample_into(const Grid4& grid, const Eigen::Vector3d& idx,
                           double* out);

/// Center-normalized border distance: 0 at the image center, 1 on the
/// border, clamped to 1 outside the image.
double boundary_proximity(double u, double v, const CameraIntrinsics& k);

/// For each coordinate x and band j in [0, num_bands):
/// emits sin(2^j * pi * x), cos(2^j * pi * x), coordinate-major.
Eigen::VectorXd sinusoidal_encode(const Eigen::VectorXd& coords,
                                  int num_bands);

}  // namespace voxfuse::geometry
