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

#include <cmath>
#include <random>
#include <set>
#include <tuple>
#include <vector>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "voxfuse/tla.hpp"
#include "test_util.hpp"

using namespace voxfuse;
using namespace voxfuse::tla;

namespace {

TemporalPair random_pair(std::mt19937& gen, int nc, int cf, int pe) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const auto vec = [&](int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = u(gen);
    return v;
  };
  TemporalPair pair;
  pair.voxel = {0, 0, 0};
  pair.logits_t = vec(nc);
  pair.logits_prev = vec(nc);
  pair.feat_t = vec(cf);
  pair.feat_prev = vec(cf);
  pair.pos_t = vec(pe);
  pair.pos_prev = vec(pe);
  return pair;
}

std::vector<TrainingExample> random_batch(std::mt19937& gen, int n, int nc,
                                          int cf, int pe) {
  std::uniform_int_distribution<int> label(0, nc - 1);
  std::vector<TrainingExample> batch;
  batch.reserve(n);
  for (int i = 0; i < n; ++i) {
    batch.push_back({random_pair(gen, nc, cf, pe), label(gen)});
  }
  return batch;
}

// Central finite differences of batch_loss over every parameter tensor.
double max_gradient_relative_error(MlpWeights& w,
                                   const std::vector<TrainingExample>& batch,
                                   double eps = 1e-5) {
  const auto [analytic, loss] = batch_gradients(w, batch);
  (void)loss;
  double worst = 0.0;
  const auto probe = [&](double* data, const double* grad, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double saved = data[i];
      data[i] = saved + eps;
      const double plus = batch_loss(w, batch);
      data[i] = saved - eps;
      const double minus = batch_loss(w, batch);
      data[i] = saved;
      const double fd = (plus - minus) / (2.0 * eps);
      const double err =
          std::abs(fd - grad[i]) /
          std::max({std::abs(fd), std::abs(grad[i]), 1e-8});
      worst = std::max(worst, err);
    }
  };
  probe(w.layer1.data(), analytic.layer1.data(), w.layer1.size());
  probe(w.bias1.data(), analytic.bias1.data(), w.bias1.size());
  probe(w.layer2.data(), analytic.layer2.data(), w.layer2.size());
  probe(w.bias2.data(), analytic.bias2.data(), w.bias2.size());
  return worst;
}

// Current frame is reliable exactly when feature channel 0 is positive.
std::vector<TrainingExample> separable_set(std::mt19937& gen, int n,
                                           double logit_scale = 6.0) {
  constexpr int kNc = 4, kCf = 3, kPe = 4;
  std::uniform_int_distribution<int> label_dist(0, kNc - 1);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::normal_distribution<double> jitter(0.0, 0.3);
  std::vector<TrainingExample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const int label = label_dist(gen);
    int wrong = label_dist(gen);
    while (wrong == label) wrong = label_dist(gen);
    const bool current_reliable = (i % 2) == 0;

    TrainingExample ex;
    ex.label = label;
    ex.pair.voxel = {0, 0, 0};
    ex.pair.logits_t = Eigen::VectorXd::Zero(kNc);
    ex.pair.logits_prev = Eigen::VectorXd::Zero(kNc);
    ex.pair.logits_t[current_reliable ? label : wrong] = logit_scale;
    ex.pair.logits_prev[current_reliable ? wrong : label] = logit_scale;
    for (int c = 0; c < kNc; ++c) {
      ex.pair.logits_t[c] += jitter(gen);
      ex.pair.logits_prev[c] += jitter(gen);
    }
    ex.pair.feat_t = Eigen::VectorXd::Zero(kCf);
    ex.pair.feat_prev = Eigen::VectorXd::Zero(kCf);
    ex.pair.feat_t[0] = current_reliable ? 1.0 : -1.0;
    ex.pair.feat_prev[0] = -ex.pair.feat_t[0];
    for (int c = 1; c < kCf; ++c) {
      ex.pair.feat_t[c] = u(gen);
      ex.pair.feat_prev[c] = u(gen);
    }
    ex.pair.pos_t = Eigen::VectorXd::Zero(kPe);
    ex.pair.pos_prev = Eigen::VectorXd::Zero(kPe);
    out.push_back(std::move(ex));
  }
  return out;
}

double fused_accuracy(const MlpWeights& w,
                      const std::vector<TrainingExample>& set) {
  int hits = 0;
  for (const TrainingExample& ex : set) {
    const Eigen::Vector2d wt = fusion_weights(w, pair_feature(ex.pair));
    const Eigen::VectorXd fused =
        aggregate_logits(ex.pair.logits_t, ex.pair.logits_prev, wt[0], wt[1]);
    int best = 0;
    fused.maxCoeff(&best);
    hits += best == ex.label;
  }
  return static_cast<double>(hits) / static_cast<double>(set.size());
}

}  // namespace

TEST_SUITE_BEGIN("tla");

TEST_CASE("position_encoding has the documented width") {
  const geometry::GeometricPrior prior = testutil::identity_prior();
  const Eigen::VectorXd pe = position_encoding({0.2, -0.1, 2.0}, prior);
  CHECK(pe.size() == kPositionDim);
  CHECK(kPositionDim == 40);
  CHECK_THROWS_AS(position_encoding({0.0, 0.0, -1.0}, prior),
                  std::invalid_argument);
}

TEST_CASE("build_temporal_pairs: first frame, identical and disjoint") {
  const geometry::GeometricPrior prior =
      testutil::identity_prior({-0.5, -0.5, 2.0}, {4, 4, 4});
  sim::LocalVolumes vol{Grid4(4, 4, 4, 3), Grid4(4, 4, 4, 2), prior};

  const std::vector<geometry::VoxelCoord> visible =
      geometry::visible_voxels(prior);
  REQUIRE(!visible.empty());

  // t = 0: no previous volumes.
  CHECK(build_temporal_pairs(visible, vol, nullptr).pairs.empty());

  // Identical consecutive priors: every visible voxel is temporal.
  sim::LocalVolumes prev = vol;
  const TemporalPairSet same = build_temporal_pairs(visible, vol, &prev);
  CHECK(same.pairs.size() == visible.size());
  for (std::size_t i = 0; i < same.pairs.size(); ++i) {
    CHECK(same.index_in_frame[i] == static_cast<int>(i));
    CHECK(same.pairs[i].voxel == visible[i]);
  }

  // Camera rotated 180 degrees with the volume moved behind it: the
  // visible sets cannot intersect.
  geometry::GeometricPrior opposite = prior;
  opposite.pose.rotation << -1, 0, 0, 0, 1, 0, 0, 0, -1;
  opposite.origin = Eigen::Vector3d(-0.5, -0.5, -3.0);
  sim::LocalVolumes prev2{Grid4(4, 4, 4, 3), Grid4(4, 4, 4, 2), opposite};
  const TemporalPairSet disjoint = build_temporal_pairs(visible, vol, &prev2);

  // Independent route: intersect the two visible sets directly.
  std::set<std::tuple<int, int, int>> a, b;
  for (const auto& c : visible) a.insert({c.ix, c.iy, c.iz});
  for (const auto& c : geometry::visible_voxels(opposite)) {
    b.insert({c.ix, c.iy, c.iz});
  }
  std::size_t common = 0;
  for (const auto& c : a) common += b.count(c);
  CHECK(common == 0);
  CHECK(disjoint.pairs.empty());
}

TEST_CASE("build_temporal_pairs samples both volumes at voxel centers") {
  const geometry::GeometricPrior prior =
      testutil::identity_prior({-0.5, -0.5, 2.0}, {4, 4, 4});
  sim::LocalVolumes vol{Grid4(4, 4, 4, 2), Grid4(4, 4, 4, 2), prior};
  sim::LocalVolumes prev = vol;
  std::mt19937 gen(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& v : vol.logits.raw()) v = u(gen);
  for (double& v : prev.logits.raw()) v = u(gen);

  const std::vector<geometry::VoxelCoord> visible =
      geometry::visible_voxels(prior);
  const TemporalPairSet pairs = build_temporal_pairs(visible, vol, &prev);
  REQUIRE(!pairs.pairs.empty());
  for (const TemporalPair& pair : pairs.pairs) {
    // Lattice-aligned origin: centers land exactly on grid nodes, so the
    // trilinear sample equals the stored cell.
    const Eigen::Vector3d idx = geometry::world_to_local_index(
        geometry::voxel_center(pair.voxel, prior.voxel_size), prior);
    const int x = static_cast<int>(std::llround(idx.x()));
    const int y = static_cast<int>(std::llround(idx.y()));
    const int z = static_cast<int>(std::llround(idx.z()));
    CHECK(pair.logits_t[0] == doctest::Approx(vol.logits.cell(x, y, z)[0]));
    CHECK(pair.logits_prev[0] ==
          doctest::Approx(prev.logits.cell(x, y, z)[0]));
  }
}

TEST_CASE("pair_feature layout and dimension") {
  std::mt19937 gen(5);
  TemporalPair pair = random_pair(gen, 3, 8, 40);
  const Eigen::VectorXd f = pair_feature(pair);
  CHECK(f.size() == 2 * 48 + 16);
  CHECK(f.size() == kPairFeatureDim);

  pair.feat_prev = pair.feat_t;
  const Eigen::VectorXd same = pair_feature(pair);
  CHECK(same.segment(96, 8).cwiseAbs().maxCoeff() == 0.0);  // difference

  pair.feat_t.setZero();
  const Eigen::VectorXd zero = pair_feature(pair);
  CHECK(zero.segment(104, 8).cwiseAbs().maxCoeff() == 0.0);  // interaction
}

TEST_CASE("fusion_weights: zero MLP gives (0.5, 0.5)") {
  const MlpWeights w = MlpWeights::zeros(20, 8);
  std::mt19937 gen(7);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  Eigen::VectorXd feat(20);
  for (int i = 0; i < 20; ++i) feat[i] = u(gen);
  const Eigen::Vector2d wt = fusion_weights(w, feat);
  CHECK(wt[0] == doctest::Approx(0.5));
  CHECK(wt[1] == doctest::Approx(0.5));
}

TEST_CASE("fusion_weights: closed-form softmax and normalization") {
  // Crafted weights producing output logits (ln 3, 0).
  MlpWeights w = MlpWeights::zeros(4, 6);
  w.bias1.setOnes();
  w.layer2.row(0).setConstant(std::log(3.0) / 6.0);
  const Eigen::Vector2d wt = fusion_weights(w, Eigen::VectorXd::Zero(4));
  CHECK(wt[0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(wt[1] == doctest::Approx(0.25).epsilon(1e-12));

  std::mt19937 gen(9);
  for (int trial = 0; trial < 100; ++trial) {
    const MlpWeights rw = MlpWeights::seeded(trial, 20, 8);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    Eigen::VectorXd feat(20);
    for (int i = 0; i < 20; ++i) feat[i] = u(gen);
    const Eigen::Vector2d random_wt = fusion_weights(rw, feat);
    CHECK(std::abs(random_wt.sum() - 1.0) < 1e-12);
    CHECK(random_wt[0] > 0.0);
    CHECK(random_wt[1] > 0.0);
  }
}

TEST_CASE("fusion_weights_batch matches the per-pair path") {
  const MlpWeights w = MlpWeights::seeded(31, 20, 8);
  std::mt19937 gen(33);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  Eigen::MatrixXd feats(20, 300);
  for (Eigen::Index i = 0; i < feats.size(); ++i) feats.data()[i] = u(gen);
  const Eigen::Matrix2Xd batch = fusion_weights_batch(w, feats);
  for (int i = 0; i < 300; ++i) {
    const Eigen::Vector2d single = fusion_weights(w, feats.col(i));
    CHECK((batch.col(i) - single).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("aggregate_logits: degenerate weights and convexity") {
  Eigen::VectorXd zt(2), zp(2);
  zt << 2.0, 0.0;
  zp << 0.0, 2.0;
  CHECK(aggregate_logits(zt, zp, 1.0, 0.0) == zt);
  const Eigen::VectorXd mid = aggregate_logits(zt, zp, 0.5, 0.5);
  CHECK(mid[0] == doctest::Approx(1.0));
  CHECK(mid[1] == doctest::Approx(1.0));

  std::mt19937 gen(11);
  std::uniform_real_distribution<double> u(-4.0, 4.0), wdist(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    Eigen::VectorXd a(5), b(5);
    for (int i = 0; i < 5; ++i) {
      a[i] = u(gen);
      b[i] = u(gen);
    }
    const double wt = wdist(gen);
    const Eigen::VectorXd fused = aggregate_logits(a, b, wt, 1.0 - wt);
    for (int i = 0; i < 5; ++i) {
      CHECK(fused[i] >= std::min(a[i], b[i]) - 1e-12);
      CHECK(fused[i] <= std::max(a[i], b[i]) + 1e-12);
    }
  }
}

TEST_CASE("ce_loss values") {
  Eigen::VectorXd two = Eigen::VectorXd::Zero(2);
  CHECK(ce_loss(two, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  Eigen::VectorXd sharp = Eigen::VectorXd::Zero(4);
  sharp[2] = 200.0;
  CHECK(ce_loss(sharp, 2) < 1e-12);

  Eigen::VectorXd three = Eigen::VectorXd::Zero(3);
  three[0] = 1.0;
  const double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + 2.0));
  CHECK(ce_loss(three, 0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("train_step: lr = 0 leaves weights unchanged") {
  std::mt19937 gen(13);
  const MlpWeights w = MlpWeights::seeded(1, 20, 8);
  const auto batch = random_batch(gen, 8, 3, 3, 4);
  const auto [next, loss] = train_step(w, batch, 0.0);
  CHECK(next == w);
  CHECK(std::isfinite(loss));
}

TEST_CASE("analytic gradients match central finite differences") {
  std::mt19937 gen(17);
  for (int trial = 0; trial < 5; ++trial) {
    MlpWeights w = MlpWeights::seeded(100 + trial, 20, 8);
    const auto batch = random_batch(gen, 8, 3, 3, 4);
    CHECK(max_gradient_relative_error(w, batch) < 1e-4);
  }
  // One spot check at the production shape.
  MlpWeights big = MlpWeights::seeded(7);
  const auto batch = random_batch(gen, 8, 12, 8, kPositionDim);
  CHECK(max_gradient_relative_error(big, batch) < 1e-4);
}

TEST_CASE("training on a separable set reduces the loss") {
  std::mt19937 gen(19);
  const auto train_set = separable_set(gen, 128);
  MlpWeights w = MlpWeights::seeded(3, 20, 8);
  const double initial = batch_loss(w, train_set);
  double last = initial;
  for (int iter = 0; iter < 200; ++iter) {
    auto [next, loss] = train_step(w, train_set, 1e-2);
    w = std::move(next);
    last = loss;
  }
  CHECK(last < initial);
  CHECK(batch_loss(w, train_set) < initial);
}

TEST_CASE("learned fusion beats untrained (0.5, 0.5) fusion") {
  int wins = 0;
  constexpr int kSeeds = 20;
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937 gen(1000 + seed);
    const auto train_set = separable_set(gen, 256);
    const auto held_out = separable_set(gen, 256);
    MlpWeights w = MlpWeights::seeded(seed, 20, 8);
    for (int iter = 0; iter < 200; ++iter) {
      w = train_step(w, train_set, 5e-2).first;
    }
    const double trained = fused_accuracy(w, held_out);
    const double untrained =
        fused_accuracy(MlpWeights::zeros(20, 8), held_out);
    wins += trained >= untrained;
  }
  CHECK(wins >= 19);  // >= 95% of seeds
}

TEST_CASE("weights serialization round-trips bit-exactly") {
  const MlpWeights w = MlpWeights::seeded(23);
  testutil::TempDir dir("tla_weights");
  const auto path = dir.path() / "weights.json";
  save_weights(w, path);
  const MlpWeights loaded = load_weights(path);
  CHECK(loaded == w);

  nlohmann::json j = w.to_json();
  j["hidden"] = 16;
  CHECK_THROWS_AS(MlpWeights::from_json(j), std::runtime_error);
}

TEST_SUITE_END();
