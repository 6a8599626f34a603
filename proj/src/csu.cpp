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

#include "voxfuse/csu.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "voxfuse/io.hpp"

namespace voxfuse::csu {

namespace {

constexpr std::int32_t kAxisBits = 21;
constexpr std::int32_t kAxisLimit = 1 << (kAxisBits - 1);  // 2^20
constexpr std::uint64_t kAxisMask = (1ULL << kAxisBits) - 1;
constexpr double kSimplexTol = 1e-9;
constexpr double kLogFloor = 1e-300;  // keeps log() finite on underflow

void check_simplex(const Eigen::VectorXd& probs) {
  if ((probs.array() < 0.0).any()) {
    throw std::invalid_argument("VoxelState: negative probability");
  }
  if (std::abs(probs.sum() - 1.0) > kSimplexTol) {
    throw std::invalid_argument("VoxelState: probabilities do not sum to 1");
  }
}

void check_confidence(double c) {
  if (!(c > 0.0) || c > 1.0) {
    throw std::invalid_argument("VoxelState: confidence outside (0, 1]");
  }
}

std::uint64_t pack_axis(std::int32_t v, const char* axis) {
  if (v <= -kAxisLimit || v >= kAxisLimit) {
    throw std::out_of_range(std::string("voxel index overflow on axis ") +
                            axis);
  }
  return static_cast<std::uint64_t>(v + kAxisLimit) & kAxisMask;
}

}  // namespace

const char* fusion_strategy_name(FusionStrategy s) {
  switch (s) {
    case FusionStrategy::kWeightedProbability: return "weighted_probability";
    case FusionStrategy::kWeightedLogit: return "weighted_logit";
    case FusionStrategy::kHighestProbability: return "highest_probability";
    case FusionStrategy::kOverwrite: return "overwrite";
  }
  return "unknown";
}

FusionStrategy fusion_strategy_from_name(const std::string& name) {
  if (name == "weighted_probability")
    return FusionStrategy::kWeightedProbability;
  if (name == "weighted_logit") return FusionStrategy::kWeightedLogit;
  if (name == "highest_probability")
    return FusionStrategy::kHighestProbability;
  if (name == "overwrite") return FusionStrategy::kOverwrite;
  throw std::invalid_argument("unknown fusion strategy: " + name);
}

Eigen::VectorXd logits_to_probs(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp();
  return e / e.sum();
}

VoxelState init_voxel(const geometry::VoxelCoord& coord,
                      const Eigen::VectorXd& probs, double confidence) {
  check_simplex(probs);
  check_confidence(confidence);
  return {coord, probs, confidence, 1};
}

VoxelState fuse_voxel(const VoxelState& prev, const Eigen::VectorXd& probs,
                      double confidence, double lambda) {
  const double history = lambda * prev.count * prev.confidence;
  const double denom = history + confidence;
  if (!(denom > 0.0)) {
    throw std::logic_error("fuse_voxel: non-positive denominator");
  }
  VoxelState next;
  next.coord = prev.coord;
  next.probs = (history * prev.probs + confidence * probs) / denom;
  next.confidence = denom / (lambda * prev.count + 1.0);
  next.count = prev.count + 1;
  return next;
}

std::uint64_t pack_voxel_key(const geometry::VoxelCoord& c) {
  return (pack_axis(c.ix, "x") << (2 * kAxisBits)) |
         (pack_axis(c.iy, "y") << kAxisBits) | pack_axis(c.iz, "z");
}

geometry::VoxelCoord unpack_voxel_key(std::uint64_t key) {
  const auto axis = [](std::uint64_t bits) {
    return static_cast<std::int32_t>(bits & kAxisMask) - kAxisLimit;
  };
  return {axis(key >> (2 * kAxisBits)), axis(key >> kAxisBits), axis(key)};
}

int argmax_label(const Eigen::VectorXd& probs) {
  int best = 0;
  for (Eigen::Index i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[best]) best = static_cast<int>(i);
  }
  return best;
}

SparseGlobalMap::SparseGlobalMap(int num_classes,
                                 const Eigen::Vector3d& voxel_size,
                                 double lambda)
    : num_classes_(num_classes), voxel_size_(voxel_size), lambda_(lambda) {
  if (num_classes < 2) {
    throw std::invalid_argument("SparseGlobalMap: num_classes must be >= 2");
  }
  if (!(lambda > 0.0) || lambda > 1.0) {
    throw std::invalid_argument("SparseGlobalMap: lambda outside (0, 1]");
  }
  if ((voxel_size.array() <= 0.0).any()) {
    throw std::invalid_argument("SparseGlobalMap: voxel_size must be > 0");
  }
}

const VoxelState* SparseGlobalMap::find(
    const geometry::VoxelCoord& coord) const {
  const auto it = entries_.find(pack_voxel_key(coord));
  return it == entries_.end() ? nullptr : &it->second;
}

std::pair<Eigen::Vector3i, Eigen::Vector3i> SparseGlobalMap::bounding_box()
    const {
  if (entries_.empty()) {
    throw std::runtime_error("SparseGlobalMap: empty map has no bbox");
  }
  return {bbox_min_, bbox_max_};
}

void SparseGlobalMap::integrate_frame(
    const std::vector<geometry::VoxelCoord>& visible,
    const std::vector<Eigen::VectorXd>& probs,
    const std::vector<double>& confidences, FusionStrategy strategy) {
  if (probs.size() != visible.size() ||
      confidences.size() != visible.size()) {
    throw std::invalid_argument(
        "integrate_frame: misaligned probability/confidence lists");
  }
  for (std::size_t i = 0; i < visible.size(); ++i) {
    const geometry::VoxelCoord coord = visible[i];
    const std::uint64_t key = pack_voxel_key(coord);
    auto it = entries_.find(key);
    if (it == entries_.end()) {
      entries_.emplace(key, init_voxel(coord, probs[i], confidences[i]));
      const Eigen::Vector3i v(coord.ix, coord.iy, coord.iz);
      if (entries_.size() == 1) {
        bbox_min_ = bbox_max_ = v;
      } else {
        bbox_min_ = bbox_min_.cwiseMin(v);
        bbox_max_ = bbox_max_.cwiseMax(v);
      }
      continue;
    }
    VoxelState& state = it->second;
    switch (strategy) {
      case FusionStrategy::kWeightedProbability:
        state = fuse_voxel(state, probs[i], confidences[i], lambda_);
        break;
      case FusionStrategy::kWeightedLogit: {
        // Eq. 12's recursion applied in log-probability space. The stored
        // vector stays a normalized simplex; log() recovers the running
        // log-space vector up to an additive constant, which the
        // exp-normalization cancels.
        const double history = lambda_ * state.count * state.confidence;
        const double denom = history + confidences[i];
        const Eigen::VectorXd log_prev =
            state.probs.array().max(kLogFloor).log();
        const Eigen::VectorXd log_new =
            probs[i].array().max(kLogFloor).log();
        const Eigen::VectorXd fused =
            (history * log_prev + confidences[i] * log_new) / denom;
        state.probs = logits_to_probs(fused);
        state.confidence = denom / (lambda_ * state.count + 1.0);
        state.count += 1;
        break;
      }
      case FusionStrategy::kHighestProbability: {
        const double incumbent = state.confidence * state.probs.maxCoeff();
        const double challenger = confidences[i] * probs[i].maxCoeff();
        if (challenger > incumbent) {
          state.probs = probs[i];
          state.confidence = confidences[i];
        }
        state.count += 1;
        break;
      }
      case FusionStrategy::kOverwrite:
        state.probs = probs[i];
        state.confidence = confidences[i];
        state.count += 1;
        break;
    }
  }
}

DenseLabelGrid SparseGlobalMap::densify() const {
  if (entries_.empty()) {
    throw std::runtime_error("densify: map is empty");
  }
  DenseLabelGrid grid;
  grid.origin = bbox_min_;
  grid.shape = bbox_max_ - bbox_min_ + Eigen::Vector3i::Ones();
  grid.labels.assign(static_cast<std::size_t>(grid.shape.x()) *
                         grid.shape.y() * grid.shape.z(),
                     0);
  for (const auto& [key, state] : entries_) {
    const int lx = state.coord.ix - grid.origin.x();
    const int ly = state.coord.iy - grid.origin.y();
    const int lz = state.coord.iz - grid.origin.z();
    grid.labels[grid.cell_index(lx, ly, lz)] = argmax_label(state.probs);
  }
  return grid;
}

std::vector<std::uint64_t> SparseGlobalMap::sorted_keys() const {
  std::vector<std::uint64_t> keys;
  keys.reserve(entries_.size());
  for (const auto& [key, state] : entries_) keys.push_back(key);
  std::sort(keys.begin(), keys.end());
  return keys;
}

const VoxelState& SparseGlobalMap::state_for_key(std::uint64_t key) const {
  return entries_.at(key);
}

std::string SparseGlobalMap::csv_string(bool include_probs) const {
  std::ostringstream csv;
  csv << "ix,iy,iz,label,confidence,count";
  if (include_probs) {
    for (int c = 0; c < num_classes_; ++c) csv << ",p" << c;
  }
  csv << '\n';
  for (const std::uint64_t key : sorted_keys()) {
    const VoxelState& s = entries_.at(key);
    csv << s.coord.ix << ',' << s.coord.iy << ',' << s.coord.iz << ','
        << argmax_label(s.probs) << ',' << io::format_g9(s.confidence) << ','
        << s.count;
    if (include_probs) {
      for (Eigen::Index c = 0; c < s.probs.size(); ++c) {
        csv << ',' << io::format_g9(s.probs[c]);
      }
    }
    csv << '\n';
  }
  return csv.str();
}

void SparseGlobalMap::dump_csv(const std::filesystem::path& csv_path,
                               const std::filesystem::path& sidecar_path,
                               FusionStrategy strategy,
                               bool include_probs) const {
  const nlohmann::json sidecar = {
      {"voxel_size", {voxel_size_.x(), voxel_size_.y(), voxel_size_.z()}},
      {"num_classes", num_classes_},
      {"lambda", lambda_},
      {"strategy", fusion_strategy_name(strategy)},
  };
  io::write_file_atomic(csv_path, csv_string(include_probs));
  io::write_file_atomic(sidecar_path, sidecar.dump(2) + "\n");
}

}  // namespace voxfuse::csu
