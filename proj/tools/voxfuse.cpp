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

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "voxfuse/io.hpp"
#include "voxfuse/pipeline.hpp"
#include "voxfuse/rng.hpp"
#include "voxfuse/scenario.hpp"
#include "voxfuse/threading.hpp"

namespace vf = voxfuse;
namespace fs = std::filesystem;

namespace {

struct CommonArgs {
  std::string config_path;
  bool dump_config = false;
};

void write_trace_csv(const std::vector<vf::pipeline::FrameMetrics>& trace,
                     const fs::path& path) {
  std::ostringstream csv;
  csv << "frame,iou,miou,map_entries\n";
  for (const vf::pipeline::FrameMetrics& m : trace) {
    csv << m.frame << ',' << vf::io::format_g9(m.iou) << ','
        << vf::io::format_g9(m.miou) << ',' << m.map_entries << '\n';
  }
  vf::io::write_file_atomic(path, csv.str());
}

int cmd_run(const vf::scenario::ScenarioConfig& cfg) {
  const vf::sim::Scene scene = vf::scenario::build_scene(cfg);
  const std::vector<vf::geometry::GeometricPrior> traj =
      vf::scenario::build_trajectory(cfg, scene);
  const vf::pipeline::Predictor predictor =
      vf::scenario::build_predictor(cfg, scene);
  const vf::pipeline::PipelineConfig pipeline_cfg =
      vf::scenario::build_pipeline_config(cfg);

  const vf::pipeline::EpisodeResult result = vf::pipeline::run_episode(
      scene, traj, predictor, pipeline_cfg, cfg.metrics.mask);

  const fs::path dir = cfg.output.dir;
  if (!fs::is_directory(dir)) {
    throw std::runtime_error("output directory does not exist: " +
                             dir.string());
  }
  result.map.dump_csv(dir / "map.csv", dir / "map.json",
                      pipeline_cfg.strategy, cfg.output.dump_probs);
  nlohmann::json metrics = result.report.to_json();
  metrics["mask"] = vf::metrics::mask_mode_name(cfg.metrics.mask);
  metrics["frames"] = traj.size();
  metrics["map_entries"] = result.map.size();
  metrics["strategy"] = cfg.pipeline.strategy;
  vf::io::write_file_atomic(dir / "metrics.json", metrics.dump(2) + "\n");
  write_trace_csv(result.trace, dir / "trace.csv");

  std::cout << "iou=" << vf::io::format_g9(result.report.iou)
            << " miou=" << vf::io::format_g9(result.report.miou) << "\n";
  return 0;
}

int cmd_ablate(const vf::scenario::ScenarioConfig& cfg, int seeds) {
  const fs::path dir = cfg.output.dir;
  if (!fs::is_directory(dir)) {
    throw std::runtime_error("output directory does not exist: " +
                             dir.string());
  }

  const vf::csu::FusionStrategy strategies[] = {
      vf::csu::FusionStrategy::kWeightedProbability,
      vf::csu::FusionStrategy::kWeightedLogit,
      vf::csu::FusionStrategy::kHighestProbability,
      vf::csu::FusionStrategy::kOverwrite,
  };
  const vf::pipeline::PipelineConfig base =
      vf::scenario::build_pipeline_config(cfg);

  std::vector<vf::pipeline::PipelineConfig> grid;
  for (const vf::csu::FusionStrategy strategy : strategies) {
    for (const bool tla : {true, false}) {
      for (const bool rcm : {true, false}) {
        vf::pipeline::PipelineConfig c = base;
        c.strategy = strategy;
        c.enable_tla = tla;
        c.enable_rcm = rcm;
        grid.push_back(std::move(c));
      }
    }
  }

  std::ostringstream csv;
  csv << "strategy,tla,rcm,seed,iou,miou\n";
  std::vector<double> iou_sum(grid.size(), 0.0), miou_sum(grid.size(), 0.0);
  for (int seed = 0; seed < seeds; ++seed) {
    const vf::scenario::ScenarioConfig run_cfg =
        vf::scenario::with_seed_offset(cfg, static_cast<std::uint64_t>(seed));
    const vf::sim::Scene scene = vf::scenario::build_scene(run_cfg);
    const std::vector<vf::geometry::GeometricPrior> traj =
        vf::scenario::build_trajectory(run_cfg, scene);
    const std::vector<vf::pipeline::EpisodeResult> results =
        vf::pipeline::run_episode_multi(
            scene, traj, vf::scenario::build_predictor(run_cfg, scene), grid,
            run_cfg.metrics.mask);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      csv << vf::csu::fusion_strategy_name(grid[i].strategy) << ','
          << (grid[i].enable_tla ? 1 : 0) << ','
          << (grid[i].enable_rcm ? 1 : 0) << ',' << seed << ','
          << vf::io::format_g9(results[i].report.iou) << ','
          << vf::io::format_g9(results[i].report.miou) << '\n';
      iou_sum[i] += results[i].report.iou;
      miou_sum[i] += results[i].report.miou;
    }
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    csv << vf::csu::fusion_strategy_name(grid[i].strategy) << ','
        << (grid[i].enable_tla ? 1 : 0) << ','
        << (grid[i].enable_rcm ? 1 : 0) << ",mean,"
        << vf::io::format_g9(iou_sum[i] / seeds) << ','
        << vf::io::format_g9(miou_sum[i] / seeds) << '\n';
  }
  vf::io::write_file_atomic(dir / "ablation.csv", csv.str());
  std::cout << "wrote " << (dir / "ablation.csv").string() << "\n";
  return 0;
}

int cmd_train_tla(const vf::scenario::ScenarioConfig& cfg,
                  const vf::scenario::TrainOptions& options,
                  const std::string& out_path) {
  const vf::scenario::TrainResult result =
      vf::scenario::train_tla_weights(cfg, options);
  for (std::size_t epoch = 0; epoch < result.epoch_losses.size(); ++epoch) {
    std::cout << "epoch=" << epoch
              << " loss=" << vf::io::format_g9(result.epoch_losses[epoch])
              << "\n";
  }
  vf::tla::save_weights(result.weights, out_path);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_import_poses(const std::string& csv_path,
                     const std::string& out_path) {
  const std::vector<vf::geometry::CameraPose> poses =
      vf::scenario::load_pose_csv(csv_path);
  for (const vf::geometry::CameraPose& pose : poses) pose.validate();
  if (!out_path.empty()) {
    std::ostringstream csv;
    csv << "frame,tx,ty,tz,qw,qx,qy,qz\n";
    for (std::size_t i = 0; i < poses.size(); ++i) {
      const Eigen::Matrix3d& r = poses[i].rotation;
      // Rotation matrix back to a unit quaternion (w >= 0).
      const double w = std::sqrt(std::max(0.0, 1.0 + r(0, 0) + r(1, 1) +
                                                   r(2, 2))) /
                       2.0;
      const double x = (r(2, 1) - r(1, 2)) / (4.0 * std::max(w, 1e-12));
      const double y = (r(0, 2) - r(2, 0)) / (4.0 * std::max(w, 1e-12));
      const double z = (r(1, 0) - r(0, 1)) / (4.0 * std::max(w, 1e-12));
      csv << i << ',' << vf::io::format_g9(poses[i].translation.x()) << ','
          << vf::io::format_g9(poses[i].translation.y()) << ','
          << vf::io::format_g9(poses[i].translation.z()) << ','
          << vf::io::format_g9(w) << ',' << vf::io::format_g9(x) << ','
          << vf::io::format_g9(y) << ',' << vf::io::format_g9(z) << '\n';
    }
    vf::io::write_file_atomic(out_path, csv.str());
  }
  std::cout << "poses=" << poses.size() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voxfuse: incremental semantic occupancy fusion"};
  app.require_subcommand(1);

  int threads = 0;
  app.add_option("--threads", threads,
                 "worker threads (default: VOXFUSE_THREADS or 1)");
  bool dump_config = false;
  app.add_flag("--dump-config", dump_config,
               "print the parsed config as canonical JSON and exit");

  std::string run_cfg_path;
  CLI::App* run = app.add_subcommand("run", "run one scenario episode");
  run->add_option("config", run_cfg_path, "scenario JSON")->required();

  std::string ablate_cfg_path;
  int ablate_seeds = 1;
  CLI::App* ablate =
      app.add_subcommand("ablate", "strategy x TLA x RCM sweep");
  ablate->add_option("config", ablate_cfg_path, "scenario JSON")->required();
  ablate->add_option("--seeds", ablate_seeds, "number of seeds")
      ->check(CLI::PositiveNumber);

  std::string train_cfg_path, train_out = "tla_weights.json";
  vf::scenario::TrainOptions train_options;
  CLI::App* train =
      app.add_subcommand("train-tla", "train the TLA fusion MLP");
  train->add_option("config", train_cfg_path, "scenario JSON")->required();
  train->add_option("--epochs", train_options.epochs, "training epochs")
      ->check(CLI::NonNegativeNumber);
  train->add_option("--out", train_out, "weights JSON output path");
  train->add_option("--episodes", train_options.episodes,
                    "training episodes")
      ->check(CLI::PositiveNumber);
  train->add_option("--lr", train_options.learning_rate, "SGD learning rate");
  train->add_option("--batch", train_options.batch_size, "minibatch size")
      ->check(CLI::PositiveNumber);
  train->add_option("--pairs-per-frame", train_options.pairs_per_frame,
                    "temporal pairs kept per frame")
      ->check(CLI::PositiveNumber);

  std::string poses_csv, poses_out;
  CLI::App* import_poses =
      app.add_subcommand("import-poses", "validate a COLMAP-style pose CSV");
  import_poses->add_option("csv", poses_csv, "pose CSV")->required();
  import_poses->add_option("--out", poses_out,
                           "write normalized pose CSV here");

  CLI11_PARSE(app, argc, argv);
  if (threads > 0) vf::threading::set_thread_count(threads);

  try {
    if (run->parsed() || ablate->parsed() || train->parsed()) {
      const std::string& path = run->parsed()     ? run_cfg_path
                                : ablate->parsed() ? ablate_cfg_path
                                                   : train_cfg_path;
      const vf::scenario::ScenarioConfig cfg =
          vf::scenario::load_scenario(path);
      if (dump_config) {
        std::cout << vf::scenario::dump_scenario(cfg).dump(2) << "\n";
        return 0;
      }
      if (run->parsed()) return cmd_run(cfg);
      if (ablate->parsed()) return cmd_ablate(cfg, ablate_seeds);
      return cmd_train_tla(cfg, train_options, train_out);
    }
    if (import_poses->parsed()) {
      return cmd_import_poses(poses_csv, poses_out);
    }
  } catch (const vf::scenario::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
