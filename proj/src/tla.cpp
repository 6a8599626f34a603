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

#include "voxfuse/tla.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "voxfuse/io.hpp"
#include "voxfuse/rng.hpp"
#include "voxfuse/threading.hpp"

namespace voxfuse::tla {

namespace {

constexpr std::uint64_t kStreamInit = 0x31;
constexpr int kBatchChunk = 1024;

Eigen::Vector2d softmax2(const Eigen::Vector2d& o) {
  const double m = o.maxCoeff();
  const double e0 = std::exp(o[0] - m);
  const double e1 = std::exp(o[1] - m);
  return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

nlohmann::json tensor_to_json(const Eigen::MatrixXd& m) {
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) values.push_back(m(r, c));
  }
  return {{"shape", {m.rows(), m.cols()}}, {"values", values}};
}

nlohmann::json tensor_to_json(const Eigen::VectorXd& v) {
  std::vector<double> values(v.data(), v.data() + v.size());
  return {{"shape", {v.size()}}, {"values", values}};
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, const char* name) {
  const auto& shape = j.at("shape");
  if (shape.size() != 2) {
    throw std::runtime_error(std::string("MlpWeights: ") + name +
                             " must have a 2-D shape");
  }
  const Eigen::Index rows = shape.at(0), cols = shape.at(1);
  const auto& values = j.at("values");
  if (static_cast<Eigen::Index>(values.size()) != rows * cols) {
    throw std::runtime_error(std::string("MlpWeights: ") + name +
                             " value count does not match shape");
  }
  Eigen::MatrixXd m(rows, cols);
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = values.at(i++);
  }
  return m;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j, const char* name) {
  const auto& shape = j.at("shape");
  if (shape.size() != 1) {
    throw std::runtime_error(std::string("MlpWeights: ") + name +
                             " must have a 1-D shape");
  }
  const Eigen::Index n = shape.at(0);
  const auto& values = j.at("values");
  if (static_cast<Eigen::Index>(values.size()) != n) {
    throw std::runtime_error(std::string("MlpWeights: ") + name +
                             " value count does not match shape");
  }
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = values.at(i);
  return v;
}

}  // namespace

MlpWeights MlpWeights::zeros(int in_dim, int hidden) {
  MlpWeights w;
  w.layer1 = Eigen::MatrixXd::Zero(hidden, in_dim);
  w.bias1 = Eigen::VectorXd::Zero(hidden);
  w.layer2 = Eigen::MatrixXd::Zero(2, hidden);
  w.bias2 = Eigen::VectorXd::Zero(2);
  return w;
}

MlpWeights MlpWeights::seeded(std::uint64_t seed, int in_dim, int hidden) {
  MlpWeights w = zeros(in_dim, hidden);
  const rng::CounterRng gen{seed, kStreamInit};
  const double s1 = 1.0 / std::sqrt(static_cast<double>(in_dim));
  for (int r = 0; r < hidden; ++r) {
    for (int c = 0; c < in_dim; ++c) {
      w.layer1(r, c) = s1 * gen.symmetric(0, static_cast<std::uint64_t>(
                                                 r * in_dim + c));
    }
  }
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < hidden; ++c) {
      w.layer2(r, c) = s2 * gen.symmetric(1, static_cast<std::uint64_t>(
                                                 r * hidden + c));
    }
  }
  return w;
}

bool operator==(const MlpWeights& a, const MlpWeights& b) {
  return a.layer1 == b.layer1 && a.bias1 == b.bias1 && a.layer2 == b.layer2 &&
         a.bias2 == b.bias2;
}

nlohmann::json MlpWeights::to_json() const {
  return {{"in_dim", in_dim()},
          {"hidden", hidden()},
          {"layer1", tensor_to_json(layer1)},
          {"bias1", tensor_to_json(bias1)},
          {"layer2", tensor_to_json(layer2)},
          {"bias2", tensor_to_json(bias2)}};
}

MlpWeights MlpWeights::from_json(const nlohmann::json& j) {
  MlpWeights w;
  w.layer1 = matrix_from_json(j.at("layer1"), "layer1");
  w.bias1 = vector_from_json(j.at("bias1"), "bias1");
  w.layer2 = matrix_from_json(j.at("layer2"), "layer2");
  w.bias2 = vector_from_json(j.at("bias2"), "bias2");
  const int in_dim = j.at("in_dim"), hidden = j.at("hidden");
  if (w.layer1.rows() != hidden || w.layer1.cols() != in_dim ||
      w.bias1.size() != hidden || w.layer2.rows() != 2 ||
      w.layer2.cols() != hidden || w.bias2.size() != 2) {
    throw std::runtime_error("MlpWeights: inconsistent shapes");
  }
  return w;
}

void save_weights(const MlpWeights& w, const std::filesystem::path& path) {
  io::write_file_atomic(path, w.to_json().dump(2) + "\n");
}

MlpWeights load_weights(const std::filesystem::path& path) {
  return MlpWeights::from_json(nlohmann::json::parse(io::read_file(path)));
}

Eigen::VectorXd position_encoding(const Eigen::Vector3d& p_world,
                                  const geometry::GeometricPrior& prior,
                                  int num_bands) {
  const Eigen::Vector3d p_cam =
      geometry::world_to_camera(p_world, prior.pose);
  const geometry::PixelProjection proj =
      geometry::project_to_image(p_world, prior);
  if (!proj.in_front) {
    throw std::invalid_argument(
        "position_encoding: point is behind the camera");
  }
  Eigen::VectorXd coords(5);
  coords << p_cam.x(), p_cam.y(), p_cam.z(),
      proj.u / prior.intrinsics.width, proj.v / prior.intrinsics.height;
  return geometry::sinusoidal_encode(coords, num_bands);
}

TemporalPairSet build_temporal_pairs(
    const std::vector<geometry::VoxelCoord>& current_visible,
    const sim::LocalVolumes& vol_t, const sim::LocalVolumes* vol_prev) {
  TemporalPairSet out;
  if (vol_prev == nullptr) return out;

  const std::vector<geometry::VoxelCoord> prev_visible =
      geometry::visible_voxels(vol_prev->prior);

  // Both lists are (ix, iy, iz)-sorted.
  std::vector<int> indices;
  std::vector<geometry::VoxelCoord> both;
  std::size_t a = 0, b = 0;
  while (a < current_visible.size() && b < prev_visible.size()) {
    if (current_visible[a] < prev_visible[b]) {
      ++a;
    } else if (prev_visible[b] < current_visible[a]) {
      ++b;
    } else {
      indices.push_back(static_cast<int>(a));
      both.push_back(current_visible[a]);
      ++a;
      ++b;
    }
  }

  out.pairs.resize(both.size());
  out.index_in_frame = std::move(indices);
  const Eigen::Vector3d& vs = vol_t.prior.voxel_size;
  threading::parallel_for(
      static_cast<std::int64_t>(both.size()),
      [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i) {
          const geometry::VoxelCoord coord = both[i];
          const Eigen::Vector3d center = geometry::voxel_center(coord, vs);
          TemporalPair& pair = out.pairs[i];
          pair.voxel = coord;
          pair.logits_t = geometry::trilinear_sample(
              vol_t.logits, geometry::world_to_local_index(center, vol_t.prior));
          pair.feat_t = geometry::trilinear_sample(
              vol_t.features,
              geometry::world_to_local_index(center, vol_t.prior));
          pair.logits_prev = geometry::trilinear_sample(
              vol_prev->logits,
              geometry::world_to_local_index(center, vol_prev->prior));
          pair.feat_prev = geometry::trilinear_sample(
              vol_prev->features,
              geometry::world_to_local_index(center, vol_prev->prior));
          pair.pos_t = position_encoding(center, vol_t.prior);
          pair.pos_prev = position_encoding(center, vol_prev->prior);
        }
      });
  return out;
}

Eigen::VectorXd pair_feature(const TemporalPair& pair) {
  const Eigen::Index cf = pair.feat_t.size();
  const Eigen::Index pe = pair.pos_t.size();
  Eigen::VectorXd f(2 * (cf + pe) + 2 * cf);
  f << pair.feat_t, pair.pos_t, pair.feat_prev, pair.pos_prev,
      (pair.feat_t - pair.feat_prev).eval(),
      pair.feat_t.cwiseProduct(pair.feat_prev);
  return f;
}

Eigen::Vector2d fusion_weights(const MlpWeights& w,
                               const Eigen::VectorXd& feature) {
  if (feature.size() != w.in_dim()) {
    throw std::invalid_argument("fusion_weights: feature size mismatch");
  }
  const Eigen::VectorXd hidden =
      ((w.layer1 * feature + w.bias1).array().max(0.0)).matrix();
  const Eigen::Vector2d logits = w.layer2 * hidden + w.bias2;
  if (!logits.allFinite()) {
    throw std::runtime_error("fusion_weights: non-finite MLP output");
  }
  return softmax2(logits);
}

Eigen::Matrix2Xd fusion_weights_batch(const MlpWeights& w,
                                      const Eigen::MatrixXd& features) {
  if (features.rows() != w.in_dim()) {
    throw std::invalid_argument("fusion_weights_batch: feature size mismatch");
  }
  const Eigen::Index n = features.cols();
  Eigen::Matrix2Xd out(2, n);
  const std::int64_t chunks = (n + kBatchChunk - 1) / kBatchChunk;
  threading::parallel_for(chunks, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t c = lo; c < hi; ++c) {
      const Eigen::Index begin = c * kBatchChunk;
      const Eigen::Index width = std::min<Eigen::Index>(kBatchChunk, n - begin);
      const auto block = features.middleCols(begin, width);
      Eigen::MatrixXd hidden =
          ((w.layer1 * block).colwise() + w.bias1).array().max(0.0);
      Eigen::MatrixXd logits = (w.layer2 * hidden).colwise() + w.bias2;
      if (!logits.allFinite()) {
        throw std::runtime_error("fusion_weights_batch: non-finite output");
      }
      for (Eigen::Index k = 0; k < width; ++k) {
        out.col(begin + k) = softmax2(logits.col(k));
      }
    }
  });
  return out;
}

double ce_loss(const Eigen::VectorXd& fused_logits, int label) {
  if (label < 0 || label >= fused_logits.size()) {
    throw std::invalid_argument("ce_loss: label out of range");
  }
  const double m = fused_logits.maxCoeff();
  const double lse =
      m + std::log((fused_logits.array() - m).exp().sum());
  return lse - fused_logits[label];
}

double batch_loss(const MlpWeights& w,
                  const std::vector<TrainingExample>& batch) {
  if (batch.empty()) {
    throw std::invalid_argument("batch_loss: empty batch");
  }
  double total = 0.0;
  for (const TrainingExample& ex : batch) {
    const Eigen::Vector2d wt = fusion_weights(w, pair_feature(ex.pair));
    const Eigen::VectorXd fused =
        aggregate_logits(ex.pair.logits_t, ex.pair.logits_prev, wt[0], wt[1]);
    total += ce_loss(fused, ex.label);
  }
  return total / static_cast<double>(batch.size());
}

std::pair<MlpGradients, double> batch_gradients(
    const MlpWeights& w, const std::vector<TrainingExample>& batch) {
  if (batch.empty()) {
    throw std::invalid_argument("batch_gradients: empty batch");
  }
  MlpGradients g{Eigen::MatrixXd::Zero(w.layer1.rows(), w.layer1.cols()),
                 Eigen::VectorXd::Zero(w.bias1.size()),
                 Eigen::MatrixXd::Zero(2, w.layer2.cols()),
                 Eigen::VectorXd::Zero(2)};
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;

  for (const TrainingExample& ex : batch) {
    const Eigen::VectorXd feat = pair_feature(ex.pair);
    const Eigen::VectorXd pre = w.layer1 * feat + w.bias1;
    const Eigen::VectorXd hidden = pre.array().max(0.0);
    const Eigen::Vector2d mlp_logits = w.layer2 * hidden + w.bias2;
    if (!mlp_logits.allFinite()) {
      throw std::runtime_error("batch_gradients: non-finite MLP output");
    }
    const Eigen::Vector2d wt = softmax2(mlp_logits);
    const Eigen::VectorXd fused =
        aggregate_logits(ex.pair.logits_t, ex.pair.logits_prev, wt[0], wt[1]);
    total += ce_loss(fused, ex.label);

    // d(mean CE)/d(fused) = (softmax(fused) - onehot) / n
    const double m = fused.maxCoeff();
    Eigen::VectorXd p = (fused.array() - m).exp();
    p /= p.sum();
    p[ex.label] -= 1.0;
    p *= inv_n;

    Eigen::Vector2d d_weights(p.dot(ex.pair.logits_t),
                              p.dot(ex.pair.logits_prev));
    // softmax backward over the two fusion weights
    const double inner = wt.dot(d_weights);
    const Eigen::Vector2d d_out =
        (wt.array() * (d_weights.array() - inner)).matrix();

    g.layer2.noalias() += d_out * hidden.transpose();
    g.bias2 += d_out;
    Eigen::VectorXd d_hidden = w.layer2.transpose() * d_out;
    for (Eigen::Index i = 0; i < d_hidden.size(); ++i) {
      if (pre[i] <= 0.0) d_hidden[i] = 0.0;
    }
    g.layer1.noalias() += d_hidden * feat.transpose();
    g.bias1 += d_hidden;
  }

  if (!g.layer1.allFinite() || !g.bias1.allFinite() ||
      !g.layer2.allFinite() || !g.bias2.allFinite()) {
    throw std::runtime_error("batch_gradients: non-finite gradient");
  }
  return {std::move(g), total * inv_n};
}

std::pair<MlpWeights, double> train_step(
    const MlpWeights& w, const std::vector<TrainingExample>& batch,
    double learning_rate) {
  auto [g, loss] = batch_gradients(w, batch);
  MlpWeights next = w;
  next.layer1 -= learning_rate * g.layer1;
  next.bias1 -= learning_rate * g.bias1;
  next.layer2 -= learning_rate * g.layer2;
  next.bias2 -= learning_rate * g.bias2;
  return {std::move(next), loss};
}

}  // namespace voxfuse::tla
