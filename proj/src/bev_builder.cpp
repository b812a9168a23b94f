#include "travbev/bev_builder.hpp"

#include <cmath>
#include <limits>

#include "travbev/errors.hpp"

namespace travbev {

void validate_grid(const GridSpec& spec) {
  if (spec.width_cells <= 0 || spec.height_cells <= 0) {
    throw ConfigError("grid dimensions must be positive");
  }
  if (!(spec.resolution > 0.0)) {
    throw ConfigError("grid resolution must be positive");
  }
}

std::optional<std::pair<int, int>> world_to_cell(const Eigen::Vector3d& p,
                                                 const GridSpec& spec) {
  const long row = spec.height_cells / 2 - std::lround(p.x() / spec.resolution);
  const long col = spec.width_cells / 2 - std::lround(p.y() / spec.resolution);
  if (row < 0 || row >= spec.height_cells || col < 0 ||
      col >= spec.width_cells) {
    return std::nullopt;
  }
  return std::make_pair(static_cast<int>(row), static_cast<int>(col));
}

BevGrid BevGrid::make(const GridSpec& spec, double timestamp) {
  BevGrid grid;
  grid.spec = spec;
  grid.timestamp = timestamp;
  grid.colors.assign(spec.cell_count(), Rgb{});
  grid.occupancy.assign(spec.cell_count(), 0);
  return grid;
}

std::size_t BevGrid::occupied_count() const {
  std::size_t n = 0;
  for (const std::uint8_t o : occupancy) {
    n += o;
  }
  return n;
}

BevGrid rasterize(const PointCloud& cloud, const GridSpec& spec,
                  double timestamp) {
  validate_grid(spec);
  BevGrid grid = BevGrid::make(spec, timestamp);
  // Per-cell winner: highest z, later input order on ties.
  std::vector<double> best_z(spec.cell_count(),
                             -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto cell = world_to_cell(cloud.points[i], spec);
    if (!cell) {
      continue;
    }
    const std::size_t idx = grid.index(cell->first, cell->second);
    const double z = cloud.points[i].z();
    if (!grid.occupancy[idx] || z >= best_z[idx]) {
      best_z[idx] = z;
      grid.colors[idx] = cloud.has_colors() ? cloud.colors[i] : Rgb{};
      grid.occupancy[idx] = 1;
    }
  }
  return grid;
}

BevAccumulator::BevAccumulator(const GridSpec& spec,
                               const AccumulatorParams& params)
    : spec_(spec), params_(params) {
  validate_grid(spec);
  if (params.window_frames < 1 || params.per_cell_cap < 1 ||
      !(params.max_range > 0.0)) {
    throw ConfigError("invalid accumulator parameters");
  }
  fused_odom_.frame = CloudFrame::kOdometry;
}

BevGrid BevAccumulator::step(const Pose& pose_t, const PointCloud& cloud_t,
                             const ImageU8& image, const CameraModel& cam) {
  if (frame_index_ >= 0 && pose_t.timestamp < last_timestamp_) {
    throw SequenceError("frame timestamp regressed");
  }
  ++frame_index_;
  last_timestamp_ = pose_t.timestamp;

  const PointCloud colored = colorize_cloud(cloud_t, image, cam);
  const PointCloud fused_veh = fuse_clouds(fused_odom_, pose_t, colored);
  std::vector<int> births = birth_frames_;
  births.resize(fused_veh.size(), frame_index_);

  BevGrid grid = rasterize(fused_veh, spec_, pose_t.timestamp);

  // Prune: too old, out of range, or beyond the per-cell cap (oldest out
  // first; points are stored oldest to newest).
  const std::size_t n = fused_veh.size();
  std::vector<std::uint8_t> keep(n, 0);
  std::vector<int> cell_counts(spec_.cell_count(), 0);
  const double max_range2 = params_.max_range * params_.max_range;
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t i = n - 1 - r;  // newest first
    if (frame_index_ - births[i] >= params_.window_frames) {
      continue;
    }
    if (fused_veh.points[i].squaredNorm() > max_range2) {
      continue;
    }
    const auto cell = world_to_cell(fused_veh.points[i], spec_);
    if (cell) {
      int& count = cell_counts[grid.index(cell->first, cell->second)];
      if (count >= params_.per_cell_cap) {
        continue;
      }
      ++count;
    }
    keep[i] = 1;
  }

  PointCloud kept;
  kept.frame = CloudFrame::kVehicle;
  std::vector<int> kept_births;
  kept.points.reserve(n);
  kept.colors.reserve(n);
  kept_births.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (keep[i]) {
      kept.points.push_back(fused_veh.points[i]);
      kept.colors.push_back(fused_veh.colors.empty() ? Rgb{}
                                                     : fused_veh.colors[i]);
      kept_births.push_back(births[i]);
    }
  }
  fused_odom_ = to_odom(kept, pose_t);
  birth_frames_ = std::move(kept_births);
  return grid;
}

ImageU8 bev_to_image(const BevGrid& grid) {
  ImageU8 img = ImageU8::make(grid.spec.width_cells, grid.spec.height_cells, 3);
  for (int r = 0; r < grid.spec.height_cells; ++r) {
    for (int c = 0; c < grid.spec.width_cells; ++c) {
      img.set_rgb(c, r, grid.color_at(r, c));
    }
  }
  return img;
}

ImageU8 occupancy_to_image(const BevGrid& grid) {
  ImageU8 img = ImageU8::make(grid.spec.width_cells, grid.spec.height_cells, 1);
  for (std::size_t i = 0; i < grid.spec.cell_count(); ++i) {
    img.data[i] = grid.occupancy[i] ? 255 : 0;
  }
  return img;
}

BevGrid bev_from_images(const ImageU8& rgb, const ImageU8& occupancy,
                        const GridSpec& spec, double timestamp) {
  if (rgb.width != spec.width_cells || rgb.height != spec.height_cells ||
      rgb.channels != 3) {
    throw FormatError("BEV image dimensions do not match the grid spec");
  }
  if (occupancy.width != spec.width_cells ||
      occupancy.height != spec.height_cells || occupancy.channels != 1) {
    throw FormatError("occupancy image dimensions do not match the grid spec");
  }
  BevGrid grid = BevGrid::make(spec, timestamp);
  for (int r = 0; r < spec.height_cells; ++r) {
    for (int c = 0; c < spec.width_cells; ++c) {
      grid.colors[grid.index(r, c)] = rgb.rgb_at(c, r);
      grid.occupancy[grid.index(r, c)] = occupancy.at(c, r, 0) ? 1 : 0;
    }
  }
  return grid;
}

}  // namespace travbev
