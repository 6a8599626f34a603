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
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace voxfuse {

/// Dense 4-D array [X, Y, Z, C], x-major with the channel axis fastest.
/// Holds per-voxel logit and feature grids.
class Grid4 {
 public:
  Grid4() = default;
  Grid4(int x, int y, int z, int c)
      : dims_{x, y, z, c},
        data_(static_cast<std::size_t>(x) * y * z * c, 0.0) {
    if (x <= 0 || y <= 0 || z <= 0 || c <= 0) {
      throw std::invalid_argument("Grid4: dimensions must be positive");
    }
  }

  int dim(int axis) const { return dims_[axis]; }
  Eigen::Vector3i spatial_shape() const {
    return {dims_[0], dims_[1], dims_[2]};
  }
  int channels() const { return dims_[3]; }
  std::int64_t num_cells() const {
    return static_cast<std::int64_t>(dims_[0]) * dims_[1] * dims_[2];
  }

  std::int64_t cell_index(int x, int y, int z) const {
    return (static_cast<std::int64_t>(x) * dims_[1] + y) * dims_[2] + z;
  }

  std::span<double> cell(int x, int y, int z) {
    return {data_.data() + cell_index(x, y, z) * dims_[3],
            static_cast<std::size_t>(dims_[3])};
  }
  std::span<const double> cell(int x, int y, int z) const {
    return {data_.data() + cell_index(x, y, z) * dims_[3],
            static_cast<std::size_t>(dims_[3])};
  }
  std::span<double> cell(std::int64_t linear) {
    return {data_.data() + linear * dims_[3],
            static_cast<std::size_t>(dims_[3])};
  }
  std::span<const double> cell(std::int64_t linear) const {
    return {data_.data() + linear * dims_[3],
            static_cast<std::size_t>(dims_[3])};
  }

  bool in_bounds(int x, int y, int z) const {
    return x >= 0 && x < dims_[0] && y >= 0 && y < dims_[1] && z >= 0 &&
           z < dims_[2];
  }

  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

 private:
  std::array<int, 4> dims_{0, 0, 0, 0};
  std::vector<double> data_;
};

}  // namespace voxfuse
