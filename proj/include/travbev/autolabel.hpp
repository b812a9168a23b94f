#ifndef TRAVBEV_AUTOLABEL_HPP
#define TRAVBEV_AUTOLABEL_HPP

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "travbev/bev_builder.hpp"
#include "travbev/geometry.hpp"

namespace travbev {

enum class CellLabel : std::uint8_t {
  kUnlabeled = 0,
  kTraversable = 1,
  kUntraversable = 2,
};

/// Boolean obstacle raster aligned to a BEV grid.
struct ObstacleMask {
  GridSpec spec;
  std::vector<std::uint8_t> cells;  // row-major, nonzero = obstacle

  static ObstacleMask make(const GridSpec& spec);
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * spec.width_cells + col;
  }
  bool at(int row, int col) const { return cells[index(row, col)] != 0; }
};

/// Trichotomy label raster aligned to a BEV grid.
struct LabelMask {
  GridSpec spec;
  double timestamp = 0.0;
  std::vector<std::uint8_t> labels;  // CellLabel values

  static LabelMask make(const GridSpec& spec, double timestamp = 0.0);
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * spec.width_cells + col;
  }
  CellLabel at(int row, int col) const {
    return static_cast<CellLabel>(labels[index(row, col)]);
  }
  std::size_t count(CellLabel label) const;
  double unlabeled_fraction() const;
};

/// Grid cells in first-touch order (trajectory order, scanline order within
/// one pose's footprint), each cell listed once.
using CellList = std::vector<std::pair<int, int>>;

/// Cells swept by the wheel-contact quadrilateral along the trajectory
/// slice within +-horizon seconds of pose_t, expressed in pose_t's grid.
CellList footprint_cells(const std::vector<Pose>& trajectory,
                         const WheelFootprint& fp, const Pose& pose_t,
                         const GridSpec& spec, double horizon_s);

/// Cells covered by one wheel-contact quadrilateral (vehicle-frame xy,
/// contacts ordered as transform_footprint returns them). Cell centers are
/// tested with a half-open rule so abutting footprints do not double-cover.
CellList fill_quad(const std::array<Eigen::Vector3d, 4>& contacts,
                   const GridSpec& spec);

struct LabelResult {
  LabelMask mask;
  std::size_t conflict_cells = 0;  // traversed and flagged as obstacle
};

/// Trajectory evidence dominates: traversed cells label Traversable even
/// when the obstacle mask claims otherwise (counted as conflicts).
LabelResult build_label_mask(const CellList& trav_cells,
                             const ObstacleMask& obstacles,
                             double timestamp = 0.0);

// Palette raster interface: 0 = gray, 1 = green, 2 = red.
const std::vector<Rgb>& label_palette();
ImageU8 label_to_image(const LabelMask& mask);
LabelMask label_from_image(const ImageU8& indices, const GridSpec& spec,
                           double timestamp);

}  // namespace travbev

#endif  // TRAVBEV_AUTOLABEL_HPP
