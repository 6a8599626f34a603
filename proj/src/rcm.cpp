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

#include "voxfuse/rcm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "voxfuse/threading.hpp"

namespace voxfuse::rcm {

void RcmParams::validate() const {
  if (alpha < 0.0 || beta < 0.0 || !(c_min > 0.0) || c_min > 1.0) {
    throw std::invalid_argument("RcmParams: out of range");
  }
}

double confidence(double depth, double boundary, const RcmParams& params) {
  return std::clamp(std::exp(-params.alpha * depth) *
                        std::exp(-params.beta * boundary),
                    params.c_min, 1.0);
}

std::vector<double> modulate_frame(
    const std::vector<geometry::VoxelCoord>& visible,
    const geometry::GeometricPrior& prior, const RcmParams& params) {
  params.validate();
  std::vector<double> out(visible.size());
  threading::parallel_for(
      static_cast<std::int64_t>(visible.size()),
      [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i) {
          const Eigen::Vector3d center =
              geometry::voxel_center(visible[i], prior.voxel_size);
          const geometry::PixelProjection proj =
              geometry::project_to_image(center, prior);
          const double b =
              geometry::boundary_proximity(proj.u, proj.v, prior.intrinsics);
          out[i] = confidence(proj.depth, b, params);
        }
      });
  return out;
}

}  // namespace voxfuse::rcm
