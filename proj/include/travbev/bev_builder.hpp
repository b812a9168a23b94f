#ifndef TRAVBEV_BEV_BUILDER_HPP
#define TRAVBEV_BEV_BUILDER_HPP

#include <optional>
#include <utility>
#include <vector>

#include "travbev/geometry.hpp"

namespace travbev {

/// Vehicle-centered grid: +x (forward) toward decreasing row, +y (left)
/// toward decreasing column, vehicle at cell (H/2, W/2).
struct GridSpec {
  int width_cells = 300;
  int height_cells = 300;
  double resolution = 0.2;  // meters per cell

  bool operator==(const GridSpec&) const = default;
  std::size_t cell_count() const {
    return static_cast<std::size_t>(width_cells) * height_cells;
  }
  /// Center of cell (row, col) in vehicle coordinates (x forward, y left).
  Eigen::Vector2d cell_center(int row, int col) const {
    return {(height_cells / 2 - row) * resolution,
            (width_cells / 2 - col) * resolution};
  }
};

/// Throws ConfigError on non-positive dimensions or resolution.
void validate_grid(const GridSpec& spec);

/// Cell index of a vehicle-frame point, or nothing when off grid.
std::optional<std::pair<int, int>> world_to_cell(const Eigen::Vector3d& p,
                                                 const GridSpec& spec);

/// Rasterized RGB top view. Unoccupied cells are black with occupancy false.
struct BevGrid {
  GridSpec spec;
  double timestamp = 0.0;
  std::vector<Rgb> colors;          // row-major height x width
  std::vector<std::uint8_t> occupancy;  // 0 or 1, same layout

  static BevGrid make(const GridSpec& spec, double timestamp = 0.0);
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * spec.width_cells + col;
  }
  Rgb color_at(int row, int col) const { return colors[index(row, col)]; }
  bool occupied(int row, int col) const {
    return occupancy[index(row, col)] != 0;
  }
  std::size_t occupied_count() const;
};

/// Top-down rasterization: each occupied cell takes the color of its
/// maximum-z point, ties broken by the latest point in input order.
BevGrid rasterize(const PointCloud& cloud, const GridSpec& spec,
                  double timestamp = 0.0);

struct AccumulatorParams {
  int window_frames = 50;   // drop points older than this many frames
  double max_range = 40.0;  // meters from the current vehicle position
  int per_cell_cap = 32;    // newest points kept per grid cell
};

/// Sliding-window point accumulator implementing the fuse / rasterize /
/// re-project recurrence. Single writer per sequence.
class BevAccumulator {
 public:
  BevAccumulator(const GridSpec& spec, const AccumulatorParams& params);

  /// Colorize cloud_t, fuse with the accumulated cloud, rasterize, then
  /// re-project the fused cloud to the odometry frame and prune it.
  /// Throws SequenceError when timestamps regress.
  BevGrid step(const Pose& pose_t, const PointCloud& cloud_t,
               const ImageU8& image, const CameraModel& cam);

  const PointCloud& fused_odom() const { return fused_odom_; }
  const std::vector<int>& birth_frames() const { return birth_frames_; }
  int frames_processed() const { return frame_index_ + 1; }
  const GridSpec& spec() const { return spec_; }
  const AccumulatorParams& params() const { return params_; }

 private:
  GridSpec spec_;
  AccumulatorParams params_;
  PointCloud fused_odom_;  // colored, odometry frame
  std::vector<int> birth_frames_;
  int frame_index_ = -1;
  double last_timestamp_ = 0.0;
};

// BevGrid <-> raster conversions used by the file interfaces.
ImageU8 bev_to_image(const BevGrid& grid);
ImageU8 occupancy_to_image(const BevGrid& grid);
BevGrid bev_from_images(const ImageU8& rgb, const ImageU8& occupancy,
                        const GridSpec& spec, double timestamp);

}  // namespace travbev

#endif  // TRAVBEV_BEV_BUILDER_HPP
