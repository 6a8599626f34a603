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

#include "voxfuse/sim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "voxfuse/io.hpp"
#include "voxfuse/rng.hpp"
#include "voxfuse/threading.hpp"

namespace voxfuse::sim {

namespace {

using geometry::GeometricPrior;
using geometry::VoxelCoord;

constexpr std::uint64_t kEmbedSeed = 0x5eedf00dULL;  // run-independent
constexpr std::uint64_t kStreamClassEmbed = 0x11;
constexpr std::uint64_t kStreamVoxelHash = 0x12;
constexpr std::uint64_t kStreamLogitNoise = 0x21;
constexpr std::uint64_t kStreamFeatureNoise = 0x22;
constexpr std::uint64_t kStreamFlip = 0x23;
constexpr std::uint64_t kStreamFlipTarget = 0x24;

const int kFurnitureClasses[] = {kChair, kBed,       kSofa,
                                 kTable, kFurniture, kObjects};

int shape_cells(double extent_m, double voxel_m, const char* what) {
  const double cells = extent_m / voxel_m;
  const double rounded = std::round(cells);
  if (!(voxel_m > 0.0) || rounded < 1.0 ||
      std::abs(cells - rounded) > 1e-6 * std::max(1.0, rounded)) {
    throw std::invalid_argument(std::string(what) +
                                ": extent must be a positive integer "
                                "multiple of voxel_size");
  }
  return static_cast<int>(rounded);
}

std::uint64_t coord_key(std::int64_t ix, std::int64_t iy, std::int64_t iz) {
  return rng::combine(rng::combine(static_cast<std::uint64_t>(ix),
                                   static_cast<std::uint64_t>(iy)),
                      static_cast<std::uint64_t>(iz));
}

double class_embed(int label, int channel) {
  const rng::CounterRng gen{kEmbedSeed, kStreamClassEmbed};
  return gen.symmetric(static_cast<std::uint64_t>(label),
                       static_cast<std::uint64_t>(channel));
}

struct Box {
  Eigen::Vector3i lo, hi;  // inclusive
  bool overlaps(const Box& o) const {
    for (int a = 0; a < 3; ++a) {
      if (hi[a] < o.lo[a] || o.hi[a] < lo[a]) return false;
    }
    return true;
  }
};

}  // namespace

const char* scene_class_name(int id) {
  static const char* names[kNumSceneClasses] = {
      "empty", "ceiling", "floor", "wall",      "window",  "chair",
      "bed",   "sofa",    "table", "tvs", "furniture", "objects"};
  if (id < 0 || id >= kNumSceneClasses) return "unknown";
  return names[id];
}

int Scene::label_at(const VoxelCoord& c) const {
  const int lx = c.ix - bbox_min.x();
  const int ly = c.iy - bbox_min.y();
  const int lz = c.iz - bbox_min.z();
  if (lx < 0 || lx >= shape.x() || ly < 0 || ly >= shape.y() || lz < 0 ||
      lz >= shape.z()) {
    return kEmpty;
  }
  return at(lx, ly, lz);
}

void Scene::validate() const {
  if (num_classes < 2) {
    throw std::invalid_argument("Scene: num_classes must be >= 2");
  }
  if ((shape.array() < 1).any()) {
    throw std::invalid_argument("Scene: shape must be positive");
  }
  if (labels.size() != static_cast<std::size_t>(shape.x()) * shape.y() *
                           shape.z()) {
    throw std::invalid_argument("Scene: label buffer does not match shape");
  }
  for (std::int16_t l : labels) {
    if (l < 0 || l >= num_classes) {
      throw std::invalid_argument("Scene: label out of range");
    }
  }
}

void NoiseConfig::validate() const {
  if (logit_scale < 0 || base_noise < 0 || depth_noise_gain < 0 ||
      boundary_noise_gain < 0 || label_flip_prob < 0 ||
      label_flip_prob > 1) {
    throw std::invalid_argument("NoiseConfig: parameters out of range");
  }
}

void LocalVolumes::validate() const {
  const Eigen::Vector3i shape = prior.grid_shape();
  if (logits.spatial_shape() != shape || features.spatial_shape() != shape) {
    throw std::invalid_argument(
        "LocalVolumes: grid shapes do not match the prior");
  }
  for (double v : logits.raw()) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("LocalVolumes: non-finite logit");
    }
  }
  for (double v : features.raw()) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("LocalVolumes: non-finite feature");
    }
  }
}

Scene generate_scene(const RoomConfig& config, std::uint64_t seed) {
  if (config.num_classes != kNumSceneClasses) {
    throw std::invalid_argument(
        "generate_scene: only the 12-class palette is supported");
  }
  Scene scene;
  scene.voxel_size = config.voxel_size;
  scene.num_classes = config.num_classes;
  scene.bbox_min.setZero();
  for (int a = 0; a < 3; ++a) {
    scene.shape[a] =
        shape_cells(config.size_m[a], config.voxel_size[a], "generate_scene");
  }
  if ((scene.shape.array() < 3).any()) {
    throw std::invalid_argument(
        "generate_scene: room must be at least 3 voxels per axis");
  }
  const int X = scene.shape.x(), Y = scene.shape.y(), Z = scene.shape.z();
  scene.labels.assign(static_cast<std::size_t>(X) * Y * Z, kEmpty);

  // Shell: floor, ceiling, four walls.
  for (int x = 0; x < X; ++x) {
    for (int y = 0; y < Y; ++y) {
      scene.at(x, y, 0) = kFloor;
      scene.at(x, y, Z - 1) = kCeiling;
    }
  }
  for (int z = 1; z < Z - 1; ++z) {
    for (int x = 0; x < X; ++x) {
      scene.at(x, 0, z) = kWall;
      scene.at(x, Y - 1, z) = kWall;
    }
    for (int y = 1; y < Y - 1; ++y) {
      scene.at(0, y, z) = kWall;
      scene.at(X - 1, y, z) = kWall;
    }
  }

  // Furniture: non-overlapping axis-aligned cuboids standing on the floor.
  const Eigen::Vector3i interior = scene.shape - Eigen::Vector3i(2, 2, 2);
  rng::SequentialRng gen(rng::combine(seed, 0x5ce7e));
  std::vector<Box> placed;
  for (int item = 0; item < config.furniture_count; ++item) {
    if ((interior.array() < 2).any()) {
      throw std::runtime_error(
          "generate_scene: room too small to place requested furniture");
    }
    const int cls = kFurnitureClasses[gen.uniform_int(
        std::size(kFurnitureClasses))];
    bool done = false;
    for (int attempt = 0; attempt < 100 && !done; ++attempt) {
      Eigen::Vector3i size;
      for (int a = 0; a < 3; ++a) {
        const int cap = std::min(interior[a], a == 2 ? 8 : 12);
        size[a] = 2 + static_cast<int>(gen.uniform_int(
                          static_cast<std::uint64_t>(cap - 1)));
      }
      Box box;
      box.lo.x() = 1 + static_cast<int>(gen.uniform_int(
                           static_cast<std::uint64_t>(interior.x() - size.x() + 1)));
      box.lo.y() = 1 + static_cast<int>(gen.uniform_int(
                           static_cast<std::uint64_t>(interior.y() - size.y() + 1)));
      box.lo.z() = 1;  // stands on the floor
      box.hi = box.lo + size - Eigen::Vector3i::Ones();
      bool clash = false;
      for (const Box& other : placed) {
        if (box.overlaps(other)) {
          clash = true;
          break;
        }
      }
      if (clash) continue;
      for (int x = box.lo.x(); x <= box.hi.x(); ++x) {
        for (int y = box.lo.y(); y <= box.hi.y(); ++y) {
          for (int z = box.lo.z(); z <= box.hi.z(); ++z) {
            scene.at(x, y, z) = static_cast<std::int16_t>(cls);
          }
        }
      }
      placed.push_back(box);
      done = true;
    }
    if (!done) {
      throw std::runtime_error(
          "generate_scene: room too small to place requested furniture");
    }
  }
  return scene;
}

geometry::CameraPose yaw_pose(const Eigen::Vector3d& position, double yaw) {
  geometry::CameraPose pose;
  const Eigen::Vector3d forward(std::cos(yaw), std::sin(yaw), 0.0);
  const Eigen::Vector3d right(std::sin(yaw), -std::cos(yaw), 0.0);
  const Eigen::Vector3d down(0.0, 0.0, -1.0);
  pose.rotation.col(0) = right;
  pose.rotation.col(1) = down;
  pose.rotation.col(2) = forward;
  pose.translation = position;
  return pose;
}

GeometricPrior prior_from_pose(const geometry::CameraPose& pose,
                               const CameraModel& camera,
                               const Eigen::Vector3d& voxel_size) {
  Eigen::Vector3d forward = pose.rotation.col(2);
  forward.z() = 0.0;
  if (forward.norm() < 1e-6) forward = Eigen::Vector3d::UnitX();
  forward.normalize();

  const Eigen::Vector3d& extent = camera.local_extent;
  Eigen::Vector3d center =
      pose.translation + forward * (0.5 * extent.x());
  center.z() = pose.translation.z();
  Eigen::Vector3d origin = center - 0.5 * extent;
  for (int a = 0; a < 3; ++a) {
    origin[a] = static_cast<double>(std::llround(origin[a] / voxel_size[a])) *
                voxel_size[a];
  }

  GeometricPrior prior;
  prior.intrinsics = camera.intrinsics;
  prior.pose = pose;
  prior.origin = origin;
  prior.extent = extent;
  prior.voxel_size = voxel_size;
  prior.validate();
  return prior;
}

namespace {

// Free with one-voxel xy clearance at the camera layer.
bool walkable(const Scene& scene, const Eigen::Vector3d& pos) {
  const Eigen::Vector3d rel =
      pos - scene.bbox_min.cast<double>().cwiseProduct(scene.voxel_size);
  Eigen::Vector3i cell;
  for (int a = 0; a < 3; ++a) {
    cell[a] = static_cast<int>(std::floor(rel[a] / scene.voxel_size[a]));
  }
  if (cell.z() < 0 || cell.z() >= scene.shape.z()) return false;
  for (int dx = -1; dx <= 1; ++dx) {
    for (int dy = -1; dy <= 1; ++dy) {
      const int x = cell.x() + dx, y = cell.y() + dy;
      if (x < 0 || x >= scene.shape.x() || y < 0 || y >= scene.shape.y()) {
        return false;
      }
      if (scene.at(x, y, cell.z()) != kEmpty) return false;
    }
  }
  return true;
}

}  // namespace

std::vector<GeometricPrior> generate_trajectory(const Scene& scene,
                                                int n_frames,
                                                std::uint64_t seed,
                                                const CameraModel& camera,
                                                double step) {
  if (n_frames < 1) {
    throw std::invalid_argument("generate_trajectory: n_frames must be >= 1");
  }
  const Eigen::Vector3d base =
      scene.bbox_min.cast<double>().cwiseProduct(scene.voxel_size);
  const int layer = scene.shape.z() / 2;
  const double cam_z = base.z() + (layer + 0.5) * scene.voxel_size.z();

  // Start at the walkable cell closest to the room center.
  const Eigen::Vector3d room_center =
      base + 0.5 * scene.shape.cast<double>().cwiseProduct(scene.voxel_size);
  Eigen::Vector3d start;
  double best = -1.0;
  for (int x = 0; x < scene.shape.x(); ++x) {
    for (int y = 0; y < scene.shape.y(); ++y) {
      const Eigen::Vector3d pos(base.x() + (x + 0.5) * scene.voxel_size.x(),
                                base.y() + (y + 0.5) * scene.voxel_size.y(),
                                cam_z);
      if (!walkable(scene, pos)) continue;
      const double d2 = (pos - room_center).head<2>().squaredNorm();
      if (best < 0.0 || d2 < best) {
        best = d2;
        start = pos;
      }
    }
  }
  if (best < 0.0) {
    throw std::runtime_error("generate_trajectory: no free space in scene");
  }

  rng::SequentialRng gen(rng::combine(seed, 0x70a11));
  Eigen::Vector3d pos = start;
  double yaw = gen.uniform(0.0, 2.0 * M_PI);

  std::vector<GeometricPrior> priors;
  priors.reserve(n_frames);
  for (int frame = 0; frame < n_frames; ++frame) {
    priors.push_back(
        prior_from_pose(yaw_pose(pos, yaw), camera, scene.voxel_size));
    if (frame + 1 == n_frames) break;

    const double wander = gen.uniform(-0.3, 0.3);
    static const double kTurns[] = {0.0, 0.4,  -0.4, 0.8,  -0.8, 1.2, -1.2,
                                    1.6, -1.6, 2.0,  -2.0, 2.4,  -2.4, 2.8};
    bool moved = false;
    for (double turn : kTurns) {
      const double trial_yaw = yaw + wander + turn;
      const Eigen::Vector3d trial =
          pos + step * Eigen::Vector3d(std::cos(trial_yaw),
                                       std::sin(trial_yaw), 0.0);
      if (walkable(scene, trial)) {
        pos = trial;
        yaw = trial_yaw;
        moved = true;
        break;
      }
    }
    if (!moved) yaw += 0.7;  // boxed in: turn in place
  }
  return priors;
}

LocalVolumes oracle_local(const Scene& scene, const GeometricPrior& prior,
                          double logit_scale) {
  const Eigen::Vector3i shape = prior.grid_shape();
  LocalVolumes vol{Grid4(shape.x(), shape.y(), shape.z(), scene.num_classes),
                   Grid4(shape.x(), shape.y(), shape.z(), kFeatureChannels),
                   prior};
  const Eigen::Vector3d& vs = prior.voxel_size;
  const rng::CounterRng hash{kEmbedSeed, kStreamVoxelHash};
  const int Cf = kFeatureChannels;
  const int Y = shape.y(), Z = shape.z();
  threading::parallel_for(vol.logits.num_cells(), [&](std::int64_t lo,
                                                      std::int64_t hi) {
    for (std::int64_t cell = lo; cell < hi; ++cell) {
      const int x = static_cast<int>(cell / (Y * Z));
      const int y = static_cast<int>((cell / Z) % Y);
      const int z = static_cast<int>(cell % Z);
      const Eigen::Vector3d center =
          prior.origin +
          Eigen::Vector3d((x + 0.5) * vs.x(), (y + 0.5) * vs.y(),
                          (z + 0.5) * vs.z());
      VoxelCoord coord{
          static_cast<std::int32_t>(std::llround(center.x() / vs.x() - 0.5)),
          static_cast<std::int32_t>(std::llround(center.y() / vs.y() - 0.5)),
          static_cast<std::int32_t>(std::llround(center.z() / vs.z() - 0.5))};
      const int label = scene.label_at(coord);
      vol.logits.cell(cell)[label] = logit_scale;
      const std::uint64_t vkey = coord_key(coord.ix, coord.iy, coord.iz);
      auto feat = vol.features.cell(cell);
      for (int c = 0; c < Cf; ++c) {
        feat[c] = class_embed(label, c) + 0.05 * hash.symmetric(vkey, c);
      }
    }
  });
  return vol;
}

LocalVolumes noisy_local(const Scene& scene, const GeometricPrior& prior,
                         const NoiseConfig& noise, int frame) {
  noise.validate();
  LocalVolumes vol = oracle_local(scene, prior, noise.logit_scale);
  const Eigen::Vector3i shape = prior.grid_shape();
  const Eigen::Vector3d& vs = prior.voxel_size;
  const double d_max = prior.extent.norm();
  const int Nc = scene.num_classes;
  const int Cf = kFeatureChannels;
  const int Y = shape.y(), Z = shape.z();

  const std::uint64_t fkey = static_cast<std::uint64_t>(frame);
  const rng::CounterRng logit_rng{noise.seed,
                                  rng::combine(kStreamLogitNoise, fkey)};
  const rng::CounterRng feat_rng{noise.seed,
                                 rng::combine(kStreamFeatureNoise, fkey)};
  const rng::CounterRng flip_rng{noise.seed,
                                 rng::combine(kStreamFlip, fkey)};

  threading::parallel_for(vol.logits.num_cells(), [&](std::int64_t lo,
                                                      std::int64_t hi) {
    for (std::int64_t cell = lo; cell < hi; ++cell) {
      const int x = static_cast<int>(cell / (Y * Z));
      const int y = static_cast<int>((cell / Z) % Y);
      const int z = static_cast<int>(cell % Z);
      const Eigen::Vector3d center =
          prior.origin +
          Eigen::Vector3d((x + 0.5) * vs.x(), (y + 0.5) * vs.y(),
                          (z + 0.5) * vs.z());
      const geometry::PixelProjection proj =
          geometry::project_to_image(center, prior);
      const double d = proj.in_front ? proj.depth : 0.0;
      const double b =
          proj.in_front
              ? geometry::boundary_proximity(proj.u, proj.v, prior.intrinsics)
              : 1.0;
      const double sigma = noise.base_noise + noise.depth_noise_gain * d +
                           noise.boundary_noise_gain * b;

      auto logits = vol.logits.cell(cell);
      // Flip the clean one-hot peak before adding Gaussian noise. The flip
      // target is a fixed function of the voxel, not the frame: systematic
      // confusions (a voxel consistently mistaken for its neighbor's class)
      // are what depth ambiguity produces, unlike per-frame label dice.
      const double p_flip = noise.label_flip_prob * (0.5 + 0.5 * b) *
                            std::min(1.0, d / d_max);
      if (noise.label_flip_prob > 0.0 &&
          flip_rng.uniform(cell, 0) < p_flip) {
        int true_label = 0;
        for (int c = 0; c < Nc; ++c) {
          if (logits[c] != 0.0) {
            true_label = c;
            break;
          }
        }
        const VoxelCoord coord{
            static_cast<std::int32_t>(
                std::llround(center.x() / vs.x() - 0.5)),
            static_cast<std::int32_t>(
                std::llround(center.y() / vs.y() - 0.5)),
            static_cast<std::int32_t>(
                std::llround(center.z() / vs.z() - 0.5))};
        const rng::CounterRng target_rng{noise.seed, kStreamFlipTarget};
        int wrong =
            static_cast<int>(
                target_rng.uniform(coord_key(coord.ix, coord.iy, coord.iz),
                                   0) *
                (Nc - 1)) %
            (Nc - 1);
        if (wrong >= true_label) ++wrong;
        logits[true_label] = 0.0;
        logits[wrong] = noise.logit_scale;
      }
      for (int c = 0; c < Nc; ++c) {
        logits[c] += sigma * logit_rng.gaussian(cell, c);
      }
      auto feat = vol.features.cell(cell);
      for (int c = 0; c < Cf; ++c) {
        feat[c] += sigma * feat_rng.gaussian(cell, c);
      }
    }
  });
  return vol;
}

void save_scene(const Scene& scene, const std::filesystem::path& csv_path,
                const std::filesystem::path& sidecar_path) {
  scene.validate();
  std::ostringstream csv;
  csv << "ix,iy,iz,label\n";
  for (int x = 0; x < scene.shape.x(); ++x) {
    for (int y = 0; y < scene.shape.y(); ++y) {
      for (int z = 0; z < scene.shape.z(); ++z) {
        const std::int16_t label = scene.at(x, y, z);
        if (label == kEmpty) continue;
        csv << (scene.bbox_min.x() + x) << ',' << (scene.bbox_min.y() + y)
            << ',' << (scene.bbox_min.z() + z) << ',' << label << '\n';
      }
    }
  }
  nlohmann::json sidecar = {
      {"voxel_size",
       {scene.voxel_size.x(), scene.voxel_size.y(), scene.voxel_size.z()}},
      {"num_classes", scene.num_classes},
      {"bbox_min", {scene.bbox_min.x(), scene.bbox_min.y(),
                    scene.bbox_min.z()}},
      {"shape", {scene.shape.x(), scene.shape.y(), scene.shape.z()}},
  };
  io::write_file_atomic(csv_path, csv.str());
  io::write_file_atomic(sidecar_path, sidecar.dump(2) + "\n");
}

Scene load_scene(const std::filesystem::path& csv_path,
                 const std::filesystem::path& sidecar_path) {
  const nlohmann::json sidecar =
      nlohmann::json::parse(io::read_file(sidecar_path));
  Scene scene;
  scene.voxel_size = Eigen::Vector3d(sidecar.at("voxel_size").at(0),
                                     sidecar.at("voxel_size").at(1),
                                     sidecar.at("voxel_size").at(2));
  scene.num_classes = sidecar.at("num_classes");
  scene.bbox_min = Eigen::Vector3i(sidecar.at("bbox_min").at(0),
                                   sidecar.at("bbox_min").at(1),
                                   sidecar.at("bbox_min").at(2));
  scene.shape = Eigen::Vector3i(sidecar.at("shape").at(0),
                                sidecar.at("shape").at(1),
                                sidecar.at("shape").at(2));
  scene.labels.assign(static_cast<std::size_t>(scene.shape.x()) *
                          scene.shape.y() * scene.shape.z(),
                      kEmpty);

  std::istringstream csv(io::read_file(csv_path));
  std::string line;
  if (!std::getline(csv, line) || line != "ix,iy,iz,label") {
    throw std::runtime_error("load_scene: bad CSV header in " +
                             csv_path.string());
  }
  int row = 1;
  while (std::getline(csv, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::int64_t ix, iy, iz;
    int label;
    char c1, c2, c3;
    if (!(fields >> ix >> c1 >> iy >> c2 >> iz >> c3 >> label) || c1 != ',' ||
        c2 != ',' || c3 != ',') {
      throw std::runtime_error("load_scene: bad row " + std::to_string(row));
    }
    const int lx = static_cast<int>(ix - scene.bbox_min.x());
    const int ly = static_cast<int>(iy - scene.bbox_min.y());
    const int lz = static_cast<int>(iz - scene.bbox_min.z());
    if (lx < 0 || lx >= scene.shape.x() || ly < 0 || ly >= scene.shape.y() ||
        lz < 0 || lz >= scene.shape.z()) {
      throw std::runtime_error("load_scene: cell outside bbox at row " +
                               std::to_string(row));
    }
    scene.at(lx, ly, lz) = static_cast<std::int16_t>(label);
  }
  scene.validate();
  return scene;
}

}  // namespace voxfuse::sim
