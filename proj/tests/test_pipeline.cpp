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
#include <map>
#include <vector>

#include <doctest.h>

#include "voxfuse/pipeline.hpp"
#include "voxfuse/threading.hpp"
#include "test_util.hpp"

using namespace voxfuse;
using namespace voxfuse::pipeline;

namespace {

struct Bench {
  sim::Scene scene;
  std::vector<geometry::GeometricPrior> traj;
  sim::NoiseConfig noise;
};

Bench small_bench(std::uint64_t seed, int frames) {
  sim::RoomConfig config;
  config.size_m = {3.2, 3.2, 1.92};
  config.voxel_size = Eigen::Vector3d::Constant(0.16);
  config.furniture_count = 2;
  Bench bench;
  bench.scene = sim::generate_scene(config, seed);
  bench.traj = sim::generate_trajectory(
      bench.scene, frames, seed,
      {testutil::default_intrinsics(), {3.2, 3.2, 1.92}});
  bench.noise.seed = seed;
  bench.noise.base_noise = 1.5;
  bench.noise.depth_noise_gain = 0.6;
  bench.noise.boundary_noise_gain = 2.0;
  bench.noise.label_flip_prob = 0.3;
  return bench;
}

}  // namespace

TEST_SUITE_BEGIN("pipeline");

TEST_CASE("step: toggles off with Overwrite keeps the latest argmax") {
  const Bench bench = small_bench(3, 6);
  PipelineConfig cfg;
  cfg.enable_tla = false;
  cfg.enable_rcm = false;
  cfg.strategy = csu::FusionStrategy::kOverwrite;

  csu::SparseGlobalMap map(bench.scene.num_classes, bench.scene.voxel_size);
  sim::LocalVolumes prev;
  bool have_prev = false;
  std::map<std::uint64_t, int> latest_label;
  for (std::size_t f = 0; f < bench.traj.size(); ++f) {
    const sim::LocalVolumes vol =
        sim::noisy_local(bench.scene, bench.traj[f], bench.noise,
                         static_cast<int>(f));
    step(map, have_prev ? &prev : nullptr, vol, cfg);
    // Reference: per frame, the argmax of the sampled logits.
    for (const geometry::VoxelCoord& c :
         geometry::visible_voxels(vol.prior)) {
      const Eigen::VectorXd z = geometry::trilinear_sample(
          vol.logits,
          geometry::world_to_local_index(
              geometry::voxel_center(c, vol.prior.voxel_size), vol.prior));
      latest_label[csu::pack_voxel_key(c)] = csu::argmax_label(z);
    }
    prev = vol;
    have_prev = true;
  }
  REQUIRE(map.size() == latest_label.size());
  for (const auto& [key, label] : latest_label) {
    CHECK(csu::argmax_label(map.state_for_key(key).probs) == label);
  }
}

TEST_CASE("oracle predictor gives ground truth for any toggles") {
  const Bench bench = small_bench(5, 5);
  for (const bool tla : {false, true}) {
    for (const bool rcm : {false, true}) {
      PipelineConfig cfg;
      cfg.enable_tla = tla;
      cfg.enable_rcm = rcm;
      const EpisodeResult result =
          run_episode(bench.scene, bench.traj,
                      oracle_predictor(bench.scene), cfg);
      CHECK(result.report.miou == 1.0);
      CHECK(result.report.iou == 1.0);
    }
  }
}

TEST_CASE("run_episode: single frame initializes every visible voxel") {
  const Bench bench = small_bench(7, 1);
  PipelineConfig cfg;
  const EpisodeResult result = run_episode(
      bench.scene, bench.traj,
      noisy_predictor(bench.scene, bench.noise), cfg);
  const std::vector<geometry::VoxelCoord> visible =
      geometry::visible_voxels(bench.traj[0]);
  CHECK(result.map.size() == visible.size());
  for (const geometry::VoxelCoord& c : visible) {
    const csu::VoxelState* state = result.map.find(c);
    REQUIRE(state != nullptr);
    CHECK(state->count == 1);
  }
  CHECK(result.trace.size() == 1);
}

TEST_CASE("metric trace has one entry per frame") {
  const Bench bench = small_bench(9, 8);
  PipelineConfig cfg;
  const EpisodeResult result = run_episode(
      bench.scene, bench.traj,
      noisy_predictor(bench.scene, bench.noise), cfg);
  CHECK(result.trace.size() == bench.traj.size());
  for (std::size_t f = 1; f < result.trace.size(); ++f) {
    CHECK(result.trace[f].map_entries >= result.trace[f - 1].map_entries);
  }
}

TEST_CASE("recursive update equals batch fusion with TLA off") {
  const Bench bench = small_bench(11, 8);
  PipelineConfig cfg;
  cfg.enable_tla = false;
  cfg.lambda = 1.0;
  const EpisodeResult result = run_episode(
      bench.scene, bench.traj,
      noisy_predictor(bench.scene, bench.noise), cfg);

  // Batch oracle: replay the frames, accumulate confidence-weighted sums.
  std::map<std::uint64_t, Eigen::VectorXd> weighted;
  std::map<std::uint64_t, double> conf_sum;
  std::map<std::uint64_t, int> seen;
  for (std::size_t f = 0; f < bench.traj.size(); ++f) {
    const sim::LocalVolumes vol =
        sim::noisy_local(bench.scene, bench.traj[f], bench.noise,
                         static_cast<int>(f));
    const std::vector<geometry::VoxelCoord> visible =
        geometry::visible_voxels(vol.prior);
    const std::vector<double> conf =
        rcm::modulate_frame(visible, vol.prior, cfg.rcm);
    for (std::size_t i = 0; i < visible.size(); ++i) {
      const Eigen::VectorXd probs =
          csu::logits_to_probs(geometry::trilinear_sample(
              vol.logits, geometry::world_to_local_index(
                              geometry::voxel_center(visible[i],
                                                     vol.prior.voxel_size),
                              vol.prior)));
      const std::uint64_t key = csu::pack_voxel_key(visible[i]);
      if (!seen.count(key)) {
        weighted[key] = conf[i] * probs;
        conf_sum[key] = conf[i];
        seen[key] = 1;
      } else {
        weighted[key] += conf[i] * probs;
        conf_sum[key] += conf[i];
        seen[key] += 1;
      }
    }
  }
  REQUIRE(result.map.size() == weighted.size());
  for (const auto& [key, sum] : weighted) {
    const csu::VoxelState& state = result.map.state_for_key(key);
    CHECK((state.probs - sum / conf_sum[key]).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(state.count == seen[key]);
  }
}

TEST_CASE("disabling RCM equals alpha=beta=0 exactly") {
  const Bench bench = small_bench(13, 6);
  PipelineConfig off;
  off.enable_rcm = false;
  PipelineConfig zeroed;
  zeroed.enable_rcm = true;
  zeroed.rcm.alpha = 0.0;
  zeroed.rcm.beta = 0.0;
  zeroed.rcm.c_min = 0.5;  // arbitrary: never reached

  const Predictor predictor = noisy_predictor(bench.scene, bench.noise);
  const EpisodeResult a =
      run_episode(bench.scene, bench.traj, predictor, off);
  const EpisodeResult b =
      run_episode(bench.scene, bench.traj, predictor, zeroed);
  CHECK(a.map.csv_string(true) == b.map.csv_string(true));
}

TEST_CASE("byte-identical results across thread counts") {
  const Bench bench = small_bench(17, 6);
  PipelineConfig cfg;  // TLA + RCM on
  const Predictor predictor = noisy_predictor(bench.scene, bench.noise);

  threading::set_thread_count(1);
  const EpisodeResult serial =
      run_episode(bench.scene, bench.traj, predictor, cfg);
  threading::set_thread_count(3);
  const EpisodeResult parallel =
      run_episode(bench.scene, bench.traj, predictor, cfg);
  threading::set_thread_count(1);

  CHECK(serial.map.csv_string(true) == parallel.map.csv_string(true));
  CHECK(serial.report.iou == parallel.report.iou);
  CHECK(serial.report.miou == parallel.report.miou);
}

TEST_CASE("run_episode_multi matches independent runs bitwise") {
  const Bench bench = small_bench(19, 6);
  const Predictor predictor = noisy_predictor(bench.scene, bench.noise);

  PipelineConfig a;  // defaults: TLA+RCM on, weighted probability
  PipelineConfig b;
  b.strategy = csu::FusionStrategy::kOverwrite;
  PipelineConfig c;
  c.enable_tla = false;
  PipelineConfig d;
  d.enable_rcm = false;
  d.strategy = csu::FusionStrategy::kWeightedLogit;
  const std::vector<PipelineConfig> grid = {a, b, c, d};

  const std::vector<EpisodeResult> multi =
      run_episode_multi(bench.scene, bench.traj, predictor, grid);
  REQUIRE(multi.size() == grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const EpisodeResult solo =
        run_episode(bench.scene, bench.traj, predictor, grid[i]);
    CHECK(multi[i].map.csv_string(true) == solo.map.csv_string(true));
    CHECK(multi[i].report.miou == solo.report.miou);
    REQUIRE(multi[i].trace.size() == solo.trace.size());
    for (std::size_t f = 0; f < solo.trace.size(); ++f) {
      CHECK(multi[i].trace[f].miou == solo.trace[f].miou);
    }
  }
}

TEST_CASE("step validates map consistency") {
  const Bench bench = small_bench(23, 1);
  const sim::LocalVolumes vol =
      sim::oracle_local(bench.scene, bench.traj[0]);
  PipelineConfig cfg;
  csu::SparseGlobalMap wrong_classes(5, bench.scene.voxel_size);
  CHECK_THROWS_AS(step(wrong_classes, nullptr, vol, cfg),
                  std::invalid_argument);
  csu::SparseGlobalMap wrong_voxel(bench.scene.num_classes,
                                   Eigen::Vector3d::Constant(0.2));
  CHECK_THROWS_AS(step(wrong_voxel, nullptr, vol, cfg),
                  std::invalid_argument);
}

TEST_SUITE_END();
