#include "travbev/autolabel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "travbev/errors.hpp"

namespace travbev {

ObstacleMask ObstacleMask::make(const GridSpec& spec) {
  validate_grid(spec);
  ObstacleMask mask;
  mask.spec = spec;
  mask.cells.assign(spec.cell_count(), 0);
  return mask;
}

LabelMask LabelMask::make(const GridSpec& spec, double timestamp) {
  validate_grid(spec);
  LabelMask mask;
  mask.spec = spec;
  mask.timestamp = timestamp;
  mask.labels.assign(spec.cell_count(),
                     static_cast<std::uint8_t>(CellLabel::kUnlabeled));
  return mask;
}

std::size_t LabelMask::count(CellLabel label) const {
  return static_cast<std::size_t>(
      std::count(labels.begin(), labels.end(),
                 static_cast<std::uint8_t>(label)));
}

double LabelMask::unlabeled_fraction() const {
  if (labels.empty()) return 0.0;
  return static_cast<double>(count(CellLabel::kUnlabeled)) /
         static_cast<double>(labels.size());
}

namespace {

// y-extent of a convex quad along the vertical line x = x0, or nothing if
// the line misses the quad. Vertices must be in boundary order.
std::optional<std::pair<double, double>> quad_slice(
    const std::array<Eigen::Vector2d, 4>& quad, double x0) {
  double y_lo = std::numeric_limits<double>::infinity();
  double y_hi = -std::numeric_limits<double>::infinity();
  bool hit = false;
  for (int i = 0; i < 4; ++i) {
    const Eigen::Vector2d& p = quad[i];
    const Eigen::Vector2d& q = quad[(i + 1) % 4];
    const double dp = p.x() - x0;
    const double dq = q.x() - x0;
    if (dp == 0.0 && dq == 0.0) {
      y_lo = std::min({y_lo, p.y(), q.y()});
      y_hi = std::max({y_hi, p.y(), q.y()});
      hit = true;
    } else if ((dp <= 0.0 && dq >= 0.0) || (dp >= 0.0 && dq <= 0.0)) {
      const double t = dp / (p.x() - q.x());
      const double y = p.y() + t * (q.y() - p.y());
      y_lo = std::min(y_lo, y);
      y_hi = std::max(y_hi, y);
      hit = true;
    }
  }
  if (!hit) return std::nullopt;
  return std::make_pair(y_lo, y_hi);
}

}  // namespace

CellList fill_quad(const std::array<Eigen::Vector3d, 4>& contacts,
                   const GridSpec& spec) {
  // Contacts arrive as {lf, lr, rf, rr}; walk the boundary lf-rf-rr-lr.
  const std::array<int, 4> order = {0, 2, 3, 1};
  std::array<Eigen::Vector2d, 4> quad;
  for (int i = 0; i < 4; ++i) quad[i] = contacts[order[i]].head<2>();

  double x_min = quad[0].x(), x_max = quad[0].x();
  for (const auto& v : quad) {
    x_min = std::min(x_min, v.x());
    x_max = std::max(x_max, v.x());
  }

  // Cell centers along x: (H/2 - row) * res. Half-open [x_min, x_max) and
  // [y_lo, y_hi) keep abutting footprints from double-covering cells.
  const int half_h = spec.height_cells / 2;
  const int half_w = spec.width_cells / 2;
  const double res = spec.resolution;
  int row_first = half_h - static_cast<int>(std::floor(x_max / res));
  int row_last = half_h - static_cast<int>(std::ceil(x_min / res));
  row_first = std::max(row_first, 0);
  row_last = std::min(row_last, spec.height_cells - 1);

  CellList cells;
  for (int row = row_first; row <= row_last; ++row) {
    const double x0 = (half_h - row) * res;
    if (!(x0 >= x_min && x0 < x_max) && !(x_min == x_max && x0 == x_min)) {
      continue;
    }
    const auto slice = quad_slice(quad, x0);
    if (!slice) continue;
    const auto [y_lo, y_hi] = *slice;
    // Cell centers along y: (W/2 - col) * res; y decreases with col.
    int col_first = half_w - static_cast<int>(std::floor(y_hi / res));
    int col_last = half_w - static_cast<int>(std::ceil(y_lo / res));
    col_first = std::max(col_first, 0);
    col_last = std::min(col_last, spec.width_cells - 1);
    for (int col = col_first; col <= col_last; ++col) {
      const double y0 = (half_w - col) * res;
      if ((y0 >= y_lo && y0 < y_hi) || (y_lo == y_hi && y0 == y_lo)) {
        cells.emplace_back(row, col);
      }
    }
  }
  return cells;
}

CellList footprint_cells(const std::vector<Pose>& trajectory,
                         const WheelFootprint& fp, const Pose& pose_t,
                         const GridSpec& spec, double horizon_s) {
  validate_grid(spec);
  if (horizon_s < 0.0) {
    throw ConfigError("footprint horizon must be non-negative");
  }
  CellList ordered;
  std::vector<std::uint8_t> seen(spec.cell_count(), 0);
  for (const Pose& pose_tau : trajectory) {
    if (std::abs(pose_tau.timestamp - pose_t.timestamp) > horizon_s) continue;
    const auto contacts = transform_footprint(fp, pose_tau, pose_t);
    for (const auto& cell : fill_quad(contacts, spec)) {
      std::uint8_t& flag =
          seen[static_cast<std::size_t>(cell.first) * spec.width_cells +
               cell.second];
      if (!flag) {
        flag = 1;
        ordered.push_back(cell);
      }
    }
  }
  return ordered;
}

LabelResult build_label_mask(const CellList& trav_cells,
                             const ObstacleMask& obstacles, double timestamp) {
  validate_grid(obstacles.spec);
  if (obstacles.cells.size() != obstacles.spec.cell_count()) {
    throw ConfigError("obstacle mask storage does not match its grid");
  }
  LabelResult result;
  result.mask = LabelMask::make(obstacles.spec, timestamp);
  for (std::size_t i = 0; i < obstacles.cells.size(); ++i) {
    if (obstacles.cells[i] != 0) {
      result.mask.labels[i] =
          static_cast<std::uint8_t>(CellLabel::kUntraversable);
    }
  }
  for (const auto& [row, col] : trav_cells) {
    std::uint8_t& label = result.mask.labels[result.mask.index(row, col)];
    if (label == static_cast<std::uint8_t>(CellLabel::kUntraversable)) {
      ++result.conflict_cells;
    }
    label = static_cast<std::uint8_t>(CellLabel::kTraversable);
  }
  return result;
}

const std::vector<Rgb>& label_palette() {
  static const std::vector<Rgb> palette = {
      Rgb{128, 128, 128},  // unlabeled
      Rgb{0, 200, 0},      // traversable
      Rgb{220, 0, 0},      // untraversable
  };
  return palette;
}

ImageU8 label_to_image(const LabelMask& mask) {
  ImageU8 image = ImageU8::make(mask.spec.width_cells, mask.spec.height_cells,
                                1);
  image.data = mask.labels;
  return image;
}

LabelMask label_from_image(const ImageU8& indices, const GridSpec& spec,
                           double timestamp) {
  if (indices.channels != 1 || indices.width != spec.width_cells ||
      indices.height != spec.height_cells) {
    throw FormatError("label raster does not match the grid dimensions");
  }
  LabelMask mask = LabelMask::make(spec, timestamp);
  for (std::size_t i = 0; i < indices.data.size(); ++i) {
    if (indices.data[i] > 2) {
      throw FormatError("label raster contains an unknown class index");
    }
    mask.labels[i] = indices.data[i];
  }
  return mask;
}

}  // namespace travbev
