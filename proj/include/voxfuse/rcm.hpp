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

#include <vector>

#include "voxfuse/geometry.hpp"

// Reliability-aware confidence modulation: a training-free per-voxel
// confidence that decays exponentially with camera depth and image-boundary
// proximity, clipped to [c_min, 1].

namespace voxfuse::rcm {

struct RcmParams {
  double alpha = 0.1;   // per-meter depth decay
  double beta = 1.5;    // boundary decay
  double c_min = 0.01;  // lower clip

  void validate() const;  // alpha, beta >= 0; 0 < c_min <= 1
};

/// clip(exp(-alpha*d) * exp(-beta*b), c_min, 1)
double confidence(double depth, double boundary, const RcmParams& params);

/// Confidence for every voxel of a visible set, aligned with the input.
/// depth and boundary proximity come from projecting each voxel center
/// with the frame's prior.
std::vector<double> modulate_frame(
    const std::vector<geometry::VoxelCoord>& visible,
    const geometry::GeometricPrior& prior, const RcmParams& params);

}  // namespace voxfuse::rcm
