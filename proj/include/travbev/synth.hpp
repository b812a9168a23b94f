#ifndef TRAVBEV_SYNTH_HPP
#define TRAVBEV_SYNTH_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "travbev/autolabel.hpp"
#include "travbev/bev_builder.hpp"
#include "travbev/geometry.hpp"
#include "travbev/rng.hpp"

namespace travbev {

/// Texture palette selector for domain-shift experiments; the world
/// geometry (and hence the ground truth) never depends on it.
enum class Season { kSpring, kWinter };

struct SceneSpec {
  double extent = 48.0;     // square world, [-extent/2, extent/2] each axis
  double cell_size = 0.2;   // class-map raster resolution
  int obstacle_count = 14;
  double obstacle_min_radius = 0.4;
  double obstacle_max_radius = 1.1;
  double obstacle_min_height = 0.5;
  double obstacle_max_height = 1.5;
  double road_half_width = 2.0;
  double road_amplitude = 3.0;   // lateral swing of the sine road
  double road_wavelength = 24.0;
  /// Obstacles keep this margin beyond the road edge, reserving room for
  /// the weaving drive path.
  double corridor_clearance = 3.5;
  /// Texture difficulty: multiplies every per-class color noise sigma.
  double noise_scale = 1.0;
  /// Appearance variety of the rocks: each obstacle blends its color
  /// toward the road palette by a per-obstacle factor in [0, rock_tint].
  double rock_tint = 0.0;
  Season season = Season::kSpring;
  std::uint64_t seed = 0;
};

/// Terrain classes of the generated world.
enum TerrainId : int {
  kTerrainRoad = 0,
  kTerrainGrass = 1,
  kTerrainRock = 2,   // obstacles; the only untraversable class
  kTerrainOutside = -1,
};

struct Obstacle {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double radius = 0.0;
  double height = 0.0;
  double tint = 0.0;  // blend factor toward the road palette
};

/// World model: a sine road through grass, plus cylindrical rock
/// obstacles kept clear of the driving corridor. All queries are exact
/// (analytic), so ground truth is free of rasterization error.
struct Scene {
  SceneSpec spec;
  std::vector<Obstacle> obstacles;

  double road_center_y(double x) const;
  /// Terrain class at a world point; kTerrainOutside beyond the extent.
  int class_at(double x, double y) const;
  bool traversable_at(double x, double y) const;
  /// Top surface height: obstacle height inside a rock footprint, else 0.
  double height_at(double x, double y) const;

  Rgb base_color(int terrain) const;      // palette under spec.season
  double noise_sigma(int terrain) const;  // texture noise per channel

  /// Row-major class raster at spec.cell_size covering the whole world;
  /// row 0 holds the largest y (north-up image convention).
  std::vector<std::uint8_t> class_map(int* cells_per_side = nullptr) const;
};

/// Deterministic world synthesis; throws ConfigError when the spec is
/// inconsistent or the obstacles cannot be placed.
Scene generate_scene(const SceneSpec& spec);

struct DriveSpec {
  double speed = 2.0;        // m/s along the road direction
  double frame_rate = 10.0;  // frames per second
  double duration = 5.0;     // seconds
  /// First-frame x; the default centers the drive on the world.
  double start_x = -5.0;
  /// Lateral wander around the road centerline; wider than the road
  /// half-width so the drive also touches grass and both traversable
  /// classes appear in the labels.
  double weave_amplitude = 3.0;
  double weave_wavelength = 8.0;
  double vehicle_half_width = 0.5;  // corridor-clearance validation
  double sensor_range = 12.0;       // per-frame sensing disc
  int points_per_frame = 8000;
  double pose_noise = 0.0;  // optional Gaussian translation jitter (m)
  GridSpec grid;            // alignment of the per-frame masks
  std::uint64_t seed = 1;
};

/// One simulated sensor frame in the exact shape the pipeline ingests.
struct SyntheticFrame {
  double timestamp = 0.0;
  Pose pose;                 // vehicle pose in the odometry frame
  PointCloud cloud;          // raw (uncolored), vehicle frame
  ImageU8 image;             // overhead camera render
  ObstacleMask obstacle_mask;
  LabelMask ground_truth;    // exact labels within the sensing disc
};

struct SyntheticSequence {
  Scene scene;
  CameraModel camera;
  std::vector<SyntheticFrame> frames;
};

/// The mast-mounted nadir camera used for all synthetic renders.
CameraModel overhead_camera();

/// Drives the weaving path at constant speed, sampling a range-limited
/// surface point cloud, the consistent camera image, and exact masks for
/// every frame. Deterministic given the scene and drive seeds.
SyntheticSequence simulate_drive(const Scene& scene, const DriveSpec& drive);

/// Writes poses.csv, camera.json, dataset.json and the clouds/, images/,
/// obstacles/, gt/ directories consumed by the pipeline stages.
void write_dataset(const SyntheticSequence& seq,
                   const std::filesystem::path& dir);

}  // namespace travbev

#endif  // TRAVBEV_SYNTH_HPP
