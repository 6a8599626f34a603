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

#include "voxfuse/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace voxfuse::metrics {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_aligned(std::size_t pred, std::size_t gt, std::size_t mask) {
  if (pred != gt || pred != mask) {
    throw std::invalid_argument("metrics: grid shapes do not match");
  }
}

}  // namespace

nlohmann::json EvalReport::to_json() const {
  nlohmann::json per_class = nlohmann::json::array();
  for (double v : per_class_iou) {
    if (std::isnan(v)) {
      per_class.push_back(nullptr);
    } else {
      per_class.push_back(v);
    }
  }
  return {{"iou", iou},
          {"miou", miou},
          {"per_class_iou", per_class},
          {"visited_voxel_count", visited_voxel_count}};
}

double occupancy_iou(std::span<const int> pred, std::span<const int> gt,
                     std::span<const std::uint8_t> mask) {
  check_aligned(pred.size(), gt.size(), mask.size());
  std::int64_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask[i]) continue;
    const bool p = pred[i] != 0;
    const bool g = gt[i] != 0;
    inter += p && g;
    uni += p || g;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

MiouResult semantic_miou(std::span<const int> pred, std::span<const int> gt,
                         std::span<const std::uint8_t> mask,
                         int num_classes) {
  check_aligned(pred.size(), gt.size(), mask.size());
  std::vector<std::int64_t> inter(num_classes, 0), pred_n(num_classes, 0),
      gt_n(num_classes, 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask[i]) continue;
    const int p = pred[i], g = gt[i];
    if (p >= 0 && p < num_classes) ++pred_n[p];
    if (g >= 0 && g < num_classes) ++gt_n[g];
    if (p == g && p >= 0 && p < num_classes) ++inter[p];
  }
  MiouResult out;
  out.per_class.assign(num_classes - 1, kNaN);
  double sum = 0.0;
  int present = 0;
  for (int c = 1; c < num_classes; ++c) {
    const std::int64_t uni = pred_n[c] + gt_n[c] - inter[c];
    if (uni == 0) continue;  // absent from both pred and gt
    const double iou = static_cast<double>(inter[c]) / uni;
    out.per_class[c - 1] = iou;
    sum += iou;
    ++present;
  }
  out.miou = present ? sum / present : kNaN;
  return out;
}

const char* mask_mode_name(MaskMode m) {
  return m == MaskMode::kVisited ? "visited" : "scene_bbox";
}

MaskMode mask_mode_from_name(const std::string& name) {
  if (name == "visited") return MaskMode::kVisited;
  if (name == "scene_bbox") return MaskMode::kSceneBbox;
  throw std::invalid_argument("unknown metrics mask: " + name);
}

EvalReport evaluate_map(const csu::SparseGlobalMap& map,
                        const sim::Scene& scene,
                        const std::vector<geometry::VoxelCoord>& visited,
                        MaskMode mode) {
  const std::size_t cells = static_cast<std::size_t>(scene.shape.x()) *
                            scene.shape.y() * scene.shape.z();
  std::vector<int> pred(cells, 0), gt(cells, 0);
  std::vector<std::uint8_t> mask(cells,
                                 mode == MaskMode::kSceneBbox ? 1 : 0);
  for (int x = 0; x < scene.shape.x(); ++x) {
    for (int y = 0; y < scene.shape.y(); ++y) {
      for (int z = 0; z < scene.shape.z(); ++z) {
        gt[scene.cell_index(x, y, z)] = scene.at(x, y, z);
      }
    }
  }
  const auto local_cell = [&scene](const geometry::VoxelCoord& c,
                                   std::int64_t& index) {
    const int lx = c.ix - scene.bbox_min.x();
    const int ly = c.iy - scene.bbox_min.y();
    const int lz = c.iz - scene.bbox_min.z();
    if (lx < 0 || lx >= scene.shape.x() || ly < 0 || ly >= scene.shape.y() ||
        lz < 0 || lz >= scene.shape.z()) {
      return false;
    }
    index = scene.cell_index(lx, ly, lz);
    return true;
  };
  for (const std::uint64_t key : map.sorted_keys()) {
    const csu::VoxelState& state = map.state_for_key(key);
    std::int64_t i;
    if (local_cell(state.coord, i)) pred[i] = csu::argmax_label(state.probs);
  }
  std::int64_t visited_in_bbox = 0;
  for (const geometry::VoxelCoord& c : visited) {
    std::int64_t i;
    if (!local_cell(c, i)) continue;
    ++visited_in_bbox;
    if (mode == MaskMode::kVisited) mask[i] = 1;
  }
  EvalReport report;
  report.visited_voxel_count = visited_in_bbox;
  report.iou = occupancy_iou(pred, gt, mask);
  const MiouResult m = semantic_miou(pred, gt, mask, scene.num_classes);
  report.miou = m.miou;
  report.per_class_iou = m.per_class;
  return report;
}

}  // namespace voxfuse::metrics
