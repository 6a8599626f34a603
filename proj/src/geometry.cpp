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

#include "voxfuse/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/LU>

namespace voxfuse::geometry {

namespace {

constexpr double kMinDepth = 1e-9;
constexpr double kOrthoTol = 1e-9;
constexpr double kGridTol = 1e-9;

// First/last lattice index whose voxel center lies in [lo, hi).
std::pair<std::int64_t, std::int64_t> center_index_range(double lo, double hi,
                                                         double step) {
  const auto first =
      static_cast<std::int64_t>(std::ceil(lo / step - 0.5 - 1e-9));
  const auto last =
      static_cast<std::int64_t>(std::ceil(hi / step - 0.5 - 1e-9)) - 1;
  return {first, last};
}

}  // namespace

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw std::invalid_argument("CameraIntrinsics: focal lengths must be > 0");
  }
  if (width < 1 || height < 1) {
    throw std::invalid_argument("CameraIntrinsics: image size must be >= 1");
  }
}

void CameraPose::validate() const {
  const Eigen::Matrix3d gram = rotation.transpose() * rotation;
  if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > kOrthoTol) {
    throw std::invalid_argument("CameraPose: rotation is not orthonormal");
  }
  if (std::abs(rotation.determinant() - 1.0) > kOrthoTol) {
    throw std::invalid_argument("CameraPose: rotation determinant is not +1");
  }
}

Eigen::Vector3i GeometricPrior::grid_shape() const {
  Eigen::Vector3i shape;
  for (int a = 0; a < 3; ++a) {
    if (!(extent[a] > 0.0) || !(voxel_size[a] > 0.0)) {
      throw std::invalid_argument(
          "GeometricPrior: extent and voxel_size must be > 0");
    }
    const double cells = extent[a] / voxel_size[a];
    const double rounded = std::round(cells);
    if (std::abs(cells - rounded) > kGridTol * std::max(1.0, rounded)) {
      throw std::invalid_argument(
          "GeometricPrior: extent is not an integer multiple of voxel_size");
    }
    shape[a] = static_cast<int>(rounded);
  }
  return shape;
}

void GeometricPrior::validate() const {
  intrinsics.validate();
  pose.validate();
  (void)grid_shape();
}

Eigen::Vector3d world_to_camera(const Eigen::Vector3d& p_world,
                                const CameraPose& pose) {
  return pose.rotation.transpose() * (p_world - pose.translation);
}

PixelProjection project_to_image(const Eigen::Vector3d& p_world,
                                 const GeometricPrior& prior) {
  const Eigen::Vector3d p_cam = world_to_camera(p_world, prior.pose);
  PixelProjection out;
  out.depth = p_cam.z();
  if (p_cam.z() <= kMinDepth) {
    out.in_front = false;
    return out;
  }
  const CameraIntrinsics& k = prior.intrinsics;
  out.u = k.fx * p_cam.x() / p_cam.z() + k.cx;
  out.v = k.fy * p_cam.y() / p_cam.z() + k.cy;
  out.in_front = true;
  return out;
}

Eigen::Vector3d unproject_from_image(double u, double v, double depth,
                                     const GeometricPrior& prior) {
  const CameraIntrinsics& k = prior.intrinsics;
  const Eigen::Vector3d p_cam((u - k.cx) / k.fx * depth,
                              (v - k.cy) / k.fy * depth, depth);
  return prior.pose.rotation * p_cam + prior.pose.translation;
}

std::vector<VoxelCoord> visible_voxels(const GeometricPrior& prior) {
  const Eigen::Vector3d& vs = prior.voxel_size;
  std::array<std::pair<std::int64_t, std::int64_t>, 3> range;
  for (int a = 0; a < 3; ++a) {
    range[a] = center_index_range(prior.origin[a],
                                  prior.origin[a] + prior.extent[a], vs[a]);
  }
  std::vector<VoxelCoord> out;
  out.reserve(static_cast<std::size_t>(
      std::max<std::int64_t>(0, range[0].second - range[0].first + 1) *
      std::max<std::int64_t>(0, range[1].second - range[1].first + 1) *
      std::max<std::int64_t>(0, range[2].second - range[2].first + 1)));
  for (std::int64_t ix = range[0].first; ix <= range[0].second; ++ix) {
    for (std::int64_t iy = range[1].first; iy <= range[1].second; ++iy) {
      for (std::int64_t iz = range[2].first; iz <= range[2].second; ++iz) {
        const Eigen::Vector3d center((ix + 0.5) * vs.x(), (iy + 0.5) * vs.y(),
                                     (iz + 0.5) * vs.z());
        if (project_to_image(center, prior).in_image(prior.intrinsics)) {
          out.push_back({static_cast<std::int32_t>(ix),
                         static_cast<std::int32_t>(iy),
                         static_cast<std::int32_t>(iz)});
        }
      }
    }
  }
  return out;  // loop order is already (ix, iy, iz)-sorted
}

Eigen::Vector3d world_to_local_index(const Eigen::Vector3d& p_world,
                                     const GeometricPrior& prior) {
  return ((p_world - prior.origin).array() / prior.voxel_size.array() - 0.5)
      .matrix();
}

void trilinear_sample_into(const Grid4& grid, const Eigen::Vector3d& idx,
                           double* out) {
  const int channels = grid.channels();
  std::fill(out, out + channels, 0.0);

  const double fx = std::floor(idx.x());
  const double fy = std::floor(idx.y());
  const double fz = std::floor(idx.z());
  const int x0 = static_cast<int>(fx);
  const int y0 = static_cast<int>(fy);
  const int z0 = static_cast<int>(fz);
  const double tx = idx.x() - fx;
  const double ty = idx.y() - fy;
  const double tz = idx.z() - fz;

  for (int dx = 0; dx <= 1; ++dx) {
    const double wx = dx ? tx : 1.0 - tx;
    if (wx == 0.0) continue;
    for (int dy = 0; dy <= 1; ++dy) {
      const double wy = dy ? ty : 1.0 - ty;
      if (wy == 0.0) continue;
      for (int dz = 0; dz <= 1; ++dz) {
        const double wz = dz ? tz : 1.0 - tz;
        if (wz == 0.0) continue;
        const int x = x0 + dx, y = y0 + dy, z = z0 + dz;
        if (!grid.in_bounds(x, y, z)) continue;  // zero padding
        const double w = wx * wy * wz;
        const std::span<const double> corner = grid.cell(x, y, z);
        for (int c = 0; c < channels; ++c) out[c] += w * corner[c];
      }
    }
  }
}

Eigen::VectorXd trilinear_sample(const Grid4& grid,
                                 const Eigen::Vector3d& idx) {
  Eigen::VectorXd out(grid.channels());
  trilinear_sample_into(grid, idx, out.data());
  return out;
}

double boundary_proximity(double u, double v, const CameraIntrinsics& k) {
  const double ru = u / k.width;
  const double rv = v / k.height;
  const double center_margin =
      std::min(std::min(ru, 1.0 - ru), std::min(rv, 1.0 - rv));
  return std::clamp(1.0 - 2.0 * center_margin, 0.0, 1.0);
}

Eigen::VectorXd sinusoidal_encode(const Eigen::VectorXd& coords,
                                  int num_bands) {
  if (num_bands < 1) {
    throw std::invalid_argument("sinusoidal_encode: num_bands must be >= 1");
  }
  Eigen::VectorXd out(2 * coords.size() * num_bands);
  Eigen::Index o = 0;
  for (Eigen::Index c = 0; c < coords.size(); ++c) {
    double freq = M_PI;
    for (int band = 0; band < num_bands; ++band) {
      out[o++] = std::sin(freq * coords[c]);
      out[o++] = std::cos(freq * coords[c]);
      freq *= 2.0;
    }
  }
  return out;
}

}  // namespace voxfuse::geometry
