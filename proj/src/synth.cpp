#include "travbev/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "travbev/errors.hpp"
#include "travbev/io.hpp"
#include "travbev/png_io.hpp"

namespace travbev {

namespace {

constexpr double kMastHeight = 50.0;  // nadir camera height above the vehicle

std::uint8_t clamp_channel(double v) {
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

Rgb noisy_color(Rgb base, double sigma, Rng& rng) {
  return Rgb{
      clamp_channel(base.r + sigma * rng.gaussian()),
      clamp_channel(base.g + sigma * rng.gaussian()),
      clamp_channel(base.b + sigma * rng.gaussian()),
  };
}

void validate_scene_spec(const SceneSpec& spec) {
  if (!(spec.extent > 0.0) || !(spec.cell_size > 0.0) ||
      spec.obstacle_count < 0 || !(spec.obstacle_min_radius > 0.0) ||
      spec.obstacle_max_radius < spec.obstacle_min_radius ||
      !(spec.obstacle_min_height > 0.0) ||
      spec.obstacle_max_height < spec.obstacle_min_height ||
      !(spec.road_half_width > 0.0) || spec.road_amplitude < 0.0 ||
      !(spec.road_wavelength > 0.0) || spec.corridor_clearance < 0.0 ||
      spec.noise_scale < 0.0 || spec.rock_tint < 0.0 ||
      spec.rock_tint > 1.0) {
    throw ConfigError("invalid scene specification");
  }
}

void validate_drive_spec(const Scene& scene, const DriveSpec& drive) {
  if (drive.speed < 0.0 || !(drive.frame_rate > 0.0) ||
      !(drive.duration >= 0.0) || drive.weave_amplitude < 0.0 ||
      !(drive.weave_wavelength > 0.0) || drive.vehicle_half_width < 0.0 ||
      !(drive.sensor_range > 0.0) || drive.points_per_frame < 0 ||
      drive.pose_noise < 0.0 || drive.grid.width_cells < 1 ||
      drive.grid.height_cells < 1 || !(drive.grid.resolution > 0.0)) {
    throw ConfigError("invalid drive specification");
  }
  if (drive.weave_amplitude + drive.vehicle_half_width >
      scene.spec.corridor_clearance) {
    throw ConfigError(
        "weave amplitude plus vehicle half-width exceeds the obstacle-free "
        "corridor");
  }
  const double half = scene.spec.extent / 2.0;
  const double x_end = drive.start_x + drive.speed * drive.duration;
  if (std::abs(drive.start_x) > half || std::abs(x_end) > half) {
    throw ConfigError("drive path leaves the world");
  }
}

}  // namespace

double Scene::road_center_y(double x) const {
  return spec.road_amplitude *
         std::sin(2.0 * std::numbers::pi * x / spec.road_wavelength);
}

int Scene::class_at(double x, double y) const {
  const double half = spec.extent / 2.0;
  if (std::abs(x) > half || std::abs(y) > half) {
    return kTerrainOutside;
  }
  for (const Obstacle& ob : obstacles) {
    if ((Eigen::Vector2d(x, y) - ob.center).squaredNorm() <=
        ob.radius * ob.radius) {
      return kTerrainRock;
    }
  }
  if (std::abs(y - road_center_y(x)) <= spec.road_half_width) {
    return kTerrainRoad;
  }
  return kTerrainGrass;
}

bool Scene::traversable_at(double x, double y) const {
  const int c = class_at(x, y);
  return c == kTerrainRoad || c == kTerrainGrass;
}

double Scene::height_at(double x, double y) const {
  double top = 0.0;
  for (const Obstacle& ob : obstacles) {
    if ((Eigen::Vector2d(x, y) - ob.center).squaredNorm() <=
        ob.radius * ob.radius) {
      top = std::max(top, ob.height);
    }
  }
  return top;
}

Rgb Scene::base_color(int terrain) const {
  const bool winter = spec.season == Season::kWinter;
  switch (terrain) {
    case kTerrainRoad:
      return winter ? Rgb{150, 150, 160} : Rgb{120, 100, 80};
    case kTerrainGrass:
      return winter ? Rgb{210, 215, 225} : Rgb{70, 160, 60};
    case kTerrainRock:
      // Dark in both seasons, keeping rocks off the road-grass color axis.
      return winter ? Rgb{60, 60, 75} : Rgb{45, 45, 60};
    default:
      return Rgb{0, 0, 0};
  }
}

double Scene::noise_sigma(int terrain) const {
  switch (terrain) {
    case kTerrainRoad:
      return 5.0 * spec.noise_scale;
    case kTerrainGrass:
      return 8.0 * spec.noise_scale;
    case kTerrainRock:
      return 4.0 * spec.noise_scale;
    default:
      return 0.0;
  }
}

std::vector<std::uint8_t> Scene::class_map(int* cells_per_side) const {
  const int n = static_cast<int>(std::lround(spec.extent / spec.cell_size));
  if (cells_per_side != nullptr) {
    *cells_per_side = n;
  }
  std::vector<std::uint8_t> map(static_cast<std::size_t>(n) * n, 0);
  const double half = spec.extent / 2.0;
  for (int row = 0; row < n; ++row) {
    const double y = half - (row + 0.5) * spec.cell_size;
    for (int col = 0; col < n; ++col) {
      const double x = -half + (col + 0.5) * spec.cell_size;
      map[static_cast<std::size_t>(row) * n + col] =
          static_cast<std::uint8_t>(class_at(x, y));
    }
  }
  return map;
}

Scene generate_scene(const SceneSpec& spec) {
  validate_scene_spec(spec);
  Scene scene;
  scene.spec = spec;

  Rng rng(spec.seed);
  const double half = spec.extent / 2.0;
  const int max_tries = 200 * std::max(spec.obstacle_count, 1);
  int tries = 0;
  while (static_cast<int>(scene.obstacles.size()) < spec.obstacle_count) {
    if (++tries > max_tries) {
      throw ConfigError(
          "could not place the requested obstacles off the corridor");
    }
    Obstacle ob;
    ob.radius = rng.uniform(spec.obstacle_min_radius,
                            spec.obstacle_max_radius);
    ob.height = rng.uniform(spec.obstacle_min_height,
                            spec.obstacle_max_height);
    ob.center.x() = rng.uniform(-half + ob.radius, half - ob.radius);
    ob.center.y() = rng.uniform(-half + ob.radius, half - ob.radius);
    // Keep the driving corridor (road plus weave margin) obstacle free.
    const double keepout = spec.road_half_width + spec.corridor_clearance +
                           ob.radius;
    if (std::abs(ob.center.y() - scene.road_center_y(ob.center.x())) <
        keepout) {
      continue;
    }
    scene.obstacles.push_back(ob);
  }
  // Tints are drawn in a second pass so the obstacle layout for a given seed
  // does not depend on the tint setting.
  for (Obstacle& ob : scene.obstacles) {
    ob.tint = rng.uniform(0.0, spec.rock_tint);
  }
  return scene;
}

CameraModel overhead_camera() {
  CameraModel cam;
  cam.fx = 500.0;
  cam.fy = 500.0;
  cam.cx = 128.0;
  cam.cy = 128.0;
  cam.image_width = 256;
  cam.image_height = 256;
  // Nadir view: x_cam = -y_vehicle, y_cam = -x_vehicle, z_cam = -z_vehicle
  // (right-handed, looking straight down from the mast).
  cam.lidar_to_cam_rotation << 0.0, -1.0, 0.0,  //
      -1.0, 0.0, 0.0,                           //
      0.0, 0.0, -1.0;
  cam.lidar_to_cam_translation = Eigen::Vector3d(0.0, 0.0, kMastHeight);
  return cam;
}

namespace {

/// Paints the overhead view seen from `pose`: per pixel, the first
/// surface its viewing ray hits (tallest obstacle plane first, then the
/// ground), colored by terrain class plus texture noise.
ImageU8 render_overhead(const Scene& scene, const Pose& pose,
                        const CameraModel& cam,
                        const std::vector<const Obstacle*>& by_height,
                        Rng& rng) {
  ImageU8 image =
      ImageU8::make(cam.image_width, cam.image_height, 3, 0);
  for (int v = 0; v < cam.image_height; ++v) {
    for (int u = 0; u < cam.image_width; ++u) {
      const double un = (u + 0.5 - cam.cx) / cam.fx;
      const double vn = (v + 0.5 - cam.cy) / cam.fy;

      int terrain = kTerrainOutside;
      bool hit = false;
      double tint = 0.0;
      // Obstacle tops, tallest (nearest to the camera) first.
      for (const Obstacle* ob : by_height) {
        const double drop = kMastHeight - ob->height;
        const Eigen::Vector3d p_vehicle(-drop * vn, -drop * un, ob->height);
        const Eigen::Vector3d p_world =
            pose.rotation * p_vehicle + pose.translation;
        if ((p_world.head<2>() - ob->center).squaredNorm() <=
            ob->radius * ob->radius) {
          terrain = kTerrainRock;
          hit = true;
          tint = ob->tint;
          break;
        }
      }
      if (!hit) {
        const Eigen::Vector3d p_vehicle(-kMastHeight * vn, -kMastHeight * un,
                                        0.0);
        const Eigen::Vector3d p_world =
            pose.rotation * p_vehicle + pose.translation;
        terrain = scene.class_at(p_world.x(), p_world.y());
      }

      if (terrain == kTerrainOutside) {
        image.set_rgb(u, v, Rgb{0, 0, 0});
      } else {
        Rgb base = scene.base_color(terrain);
        if (terrain == kTerrainRock && tint > 0.0) {
          // Each rock leans toward the road palette by its own factor, so
          // individual obstacles range from distinctive to camouflaged.
          const Rgb road = scene.base_color(kTerrainRoad);
          base = Rgb{
              clamp_channel(base.r + tint * (road.r - base.r)),
              clamp_channel(base.g + tint * (road.g - base.g)),
              clamp_channel(base.b + tint * (road.b - base.b)),
          };
        }
        image.set_rgb(u, v,
                      noisy_color(base, scene.noise_sigma(terrain), rng));
      }
    }
  }
  return image;
}

}  // namespace

SyntheticSequence simulate_drive(const Scene& scene, const DriveSpec& drive) {
  validate_drive_spec(scene, drive);

  SyntheticSequence seq;
  seq.scene = scene;
  seq.camera = overhead_camera();

  std::vector<const Obstacle*> by_height;
  by_height.reserve(scene.obstacles.size());
  for (const Obstacle& ob : scene.obstacles) by_height.push_back(&ob);
  std::sort(by_height.begin(), by_height.end(),
            [](const Obstacle* a, const Obstacle* b) {
              return a->height > b->height;
            });

  const int frame_count = static_cast<int>(
      std::lround(drive.duration * drive.frame_rate));
  const double half = scene.spec.extent / 2.0;
  Rng root(drive.seed);

  for (int k = 0; k < frame_count; ++k) {
    Rng frame_rng = root.fork();
    SyntheticFrame frame;
    frame.timestamp = static_cast<double>(k) / drive.frame_rate;

    // Weaving path around the road centerline, heading along the tangent.
    const double x = drive.start_x + drive.speed * frame.timestamp;
    const auto path_y = [&](double px) {
      return scene.road_center_y(px) +
             drive.weave_amplitude *
                 std::sin(2.0 * std::numbers::pi * px /
                          drive.weave_wavelength);
    };
    const double y = path_y(x);
    const double two_pi = 2.0 * std::numbers::pi;
    const double dy =
        scene.spec.road_amplitude * (two_pi / scene.spec.road_wavelength) *
            std::cos(two_pi * x / scene.spec.road_wavelength) +
        drive.weave_amplitude * (two_pi / drive.weave_wavelength) *
            std::cos(two_pi * x / drive.weave_wavelength);
    Eigen::Vector3d position(x, y, 0.0);
    if (drive.pose_noise > 0.0) {
      for (int a = 0; a < 3; ++a) {
        position[a] += drive.pose_noise * frame_rng.gaussian();
      }
    }
    frame.pose = Pose::yaw(std::atan2(dy, 1.0), position, frame.timestamp);

    // Range-limited surface samples around the vehicle, vehicle frame.
    frame.cloud.frame = CloudFrame::kVehicle;
    frame.cloud.points.reserve(
        static_cast<std::size_t>(drive.points_per_frame));
    for (int i = 0; i < drive.points_per_frame; ++i) {
      const double r = drive.sensor_range * std::sqrt(frame_rng.uniform());
      const double phi = frame_rng.uniform(0.0, two_pi);
      const double wx = frame.pose.translation.x() + r * std::cos(phi);
      const double wy = frame.pose.translation.y() + r * std::sin(phi);
      if (std::abs(wx) > half || std::abs(wy) > half) {
        continue;  // outside the world: nothing to return a surface from
      }
      const Eigen::Vector3d world(wx, wy, scene.height_at(wx, wy));
      frame.cloud.points.push_back(frame.pose.rotation.transpose() *
                                   (world - frame.pose.translation));
    }

    frame.image =
        render_overhead(scene, frame.pose, seq.camera, by_height, frame_rng);

    // Exact masks on the vehicle-centered grid, within the sensing disc.
    frame.obstacle_mask = ObstacleMask::make(drive.grid);
    frame.ground_truth = LabelMask::make(drive.grid, frame.timestamp);
    for (int row = 0; row < drive.grid.height_cells; ++row) {
      for (int col = 0; col < drive.grid.width_cells; ++col) {
        const Eigen::Vector2d local = drive.grid.cell_center(row, col);
        if (local.norm() > drive.sensor_range) {
          continue;  // beyond sensing: unlabeled
        }
        const Eigen::Vector3d world =
            frame.pose.rotation * Eigen::Vector3d(local.x(), local.y(), 0.0) +
            frame.pose.translation;
        const int terrain = scene.class_at(world.x(), world.y());
        if (terrain == kTerrainOutside) {
          continue;
        }
        const std::size_t idx = frame.ground_truth.index(row, col);
        if (terrain == kTerrainRock) {
          frame.obstacle_mask.cells[idx] = 1;
          frame.ground_truth.labels[idx] =
              static_cast<std::uint8_t>(CellLabel::kUntraversable);
        } else {
          frame.ground_truth.labels[idx] =
              static_cast<std::uint8_t>(CellLabel::kTraversable);
        }
      }
    }

    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

void write_dataset(const SyntheticSequence& seq,
                   const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "clouds", ec);
  fs::create_directories(dir / "images", ec);
  fs::create_directories(dir / "obstacles", ec);
  fs::create_directories(dir / "gt", ec);
  if (ec) {
    throw IoError("cannot create dataset directories under " + dir.string());
  }

  std::vector<Pose> poses;
  poses.reserve(seq.frames.size());
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const SyntheticFrame& frame = seq.frames[i];
    poses.push_back(frame.pose);
    const std::string stem = frame_stem(static_cast<int>(i));
    save_point_cloud(dir / "clouds" / (stem + ".pts"), frame.cloud);
    write_png_rgb8(dir / "images" / (stem + ".png"), frame.image);

    ImageU8 obstacle_img =
        ImageU8::make(frame.obstacle_mask.spec.width_cells,
                      frame.obstacle_mask.spec.height_cells, 1, 0);
    for (std::size_t c = 0; c < frame.obstacle_mask.cells.size(); ++c) {
      obstacle_img.data[c] = frame.obstacle_mask.cells[c] ? 255 : 0;
    }
    write_png_gray8(dir / "obstacles" / (stem + ".png"), obstacle_img);
    write_png_indexed(dir / "gt" / (stem + ".png"),
                      label_to_image(frame.ground_truth), label_palette());
  }
  save_pose_log(dir / "poses.csv", poses);
  save_camera_json(dir / "camera.json", seq.camera);

  const GridSpec& grid = seq.frames.empty()
                             ? GridSpec{}
                             : seq.frames.front().ground_truth.spec;
  const Json manifest = {
      {"frames", seq.frames.size()},
      {"grid",
       {{"width_cells", grid.width_cells},
        {"height_cells", grid.height_cells},
        {"resolution", grid.resolution}}},
      {"season",
       seq.scene.spec.season == Season::kWinter ? "winter" : "spring"},
      {"scene_seed", seq.scene.spec.seed},
      {"obstacles", seq.scene.obstacles.size()},
  };
  save_json(dir / "dataset.json", manifest);
}

}  // namespace travbev
