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
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "voxfuse/csu.hpp"
#include "voxfuse/sim.hpp"

namespace voxfuse::metrics {

struct EvalReport {
  double iou = 0.0;
  double miou = 0.0;
  std::vector<double> per_class_iou;  // classes 1..N_c-1; NaN when excluded
  std::int64_t visited_voxel_count = 0;

  nlohmann::json to_json() const;
};

/// Binary occupied-vs-empty IoU over masked cells; empty union counts as 1.
double occupancy_iou(std::span<const int> pred, std::span<const int> gt,
                     std::span<const std::uint8_t> mask);

struct MiouResult {
  double miou = 0.0;
  std::vector<double> per_class;  // classes 1..N_c-1; NaN when excluded
};

/// Per-class IoU over classes 1..N_c-1; a class absent from both pred and
/// gt inside the mask is excluded from the mean.
MiouResult semantic_miou(std::span<const int> pred, std::span<const int> gt,
                         std::span<const std::uint8_t> mask, int num_classes);

enum class MaskMode { kVisited, kSceneBbox };
const char* mask_mode_name(MaskMode m);
MaskMode mask_mode_from_name(const std::string& name);

/// Evaluates a map against scene ground truth over the scene bbox.
/// kVisited restricts to the given visited voxels; kSceneBbox evaluates
/// every bbox cell.
EvalReport evaluate_map(const csu::SparseGlobalMap& map,
                        const sim::Scene& scene,
                        const std::vector<geometry::VoxelCoord>& visited,
                        MaskMode mode);

}  // namespace voxfuse::metrics
