#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "support/generators.hpp"
#include "travbev/autolabel.hpp"
#include "travbev/errors.hpp"
#include "travbev/png_io.hpp"
#include "travbev/rng.hpp"

using namespace travbev;

namespace {

std::set<std::pair<int, int>> as_set(const CellList& cells) {
  return {cells.begin(), cells.end()};
}

std::vector<Pose> straight_line(int n, double spacing, double dt = 0.1) {
  std::vector<Pose> poses(n);
  for (int i = 0; i < n; ++i) {
    poses[i].translation = {spacing * i, 0.0, 0.0};
    poses[i].timestamp = dt * i;
  }
  return poses;
}

}  // namespace

TEST_CASE("a single axis-aligned footprint fills an exact cell rectangle") {
  const GridSpec spec;  // 0.2 m cells, center (150, 150)
  const WheelFootprint fp = WheelFootprint::box(2.0, 1.0);
  Pose pose;  // identity, at the grid center

  const CellList cells = footprint_cells({pose}, fp, pose, spec, 1.0);
  // 2 m x 1 m covers 10 x 5 cells under the half-open corner rule.
  CHECK(cells.size() == 50);
  const auto got = as_set(cells);
  std::set<std::pair<int, int>> expect;
  for (int row = 146; row <= 155; ++row) {
    for (int col = 148; col <= 152; ++col) {
      expect.insert({row, col});
    }
  }
  CHECK(got == expect);
}

TEST_CASE("abutting footprints do not double-cover cells") {
  const GridSpec spec;
  const WheelFootprint fp = WheelFootprint::box(2.0, 1.0);
  Pose front;
  front.translation = {2.0, 0.0, 0.0};  // rear edge meets the first's front
  Pose base;

  const CellList a = fill_quad(transform_footprint(fp, base, base), spec);
  const CellList b = fill_quad(transform_footprint(fp, front, base), spec);
  std::set<std::pair<int, int>> sa = as_set(a);
  std::set<std::pair<int, int>> sb = as_set(b);
  CHECK(a.size() == 50);
  CHECK(b.size() == 50);
  for (const auto& cell : sb) {
    CHECK(sa.count(cell) == 0);
  }
}

TEST_CASE("a straight drive sweeps a band of the footprint width") {
  const GridSpec spec;
  const WheelFootprint fp = WheelFootprint::box(2.0, 1.0);
  const auto poses = straight_line(21, 0.5);
  const Pose& anchor = poses[10];  // 5 m along, centered in the swept band

  const CellList cells =
      footprint_cells(poses, fp, anchor, spec, /*horizon_s=*/10.0);
  // The band runs from -5 - 1 to +5 + 1 m around the anchor (rear edge of
  // the first pose to the front edge of the last), 1 m wide: the swept
  // rectangle is 12 m x 1 m = 60 x 5 cells.
  CHECK(cells.size() == 60 * 5);
  for (const auto& [row, col] : cells) {
    CHECK(col >= 148);
    CHECK(col <= 152);
    CHECK(row >= 150 - 30);
    CHECK(row <= 150 + 30);
  }
}

TEST_CASE("footprint cells grow monotonically with the horizon") {
  const GridSpec spec;
  const WheelFootprint fp = WheelFootprint::box(2.0, 1.0);
  const auto poses = straight_line(41, 0.3);
  const Pose& anchor = poses[20];

  std::size_t last = 0;
  for (double horizon : {0.0, 0.3, 0.9, 2.1, 4.5}) {
    const auto cells = footprint_cells(poses, fp, anchor, spec, horizon);
    const auto narrow =
        horizon > 0.0
            ? footprint_cells(poses, fp, anchor, spec, horizon - 0.05)
            : CellList{};
    if (horizon > 0.0) {
      // Every cell claimed by the narrower horizon is kept by the wider one.
      const auto wide = as_set(cells);
      for (const auto& cell : narrow) {
        CHECK(wide.count(cell) == 1);
      }
    }
    CHECK(cells.size() >= last);
    last = cells.size();
  }
}

TEST_CASE("rotated footprints stay within the exact swept disc") {
  const GridSpec spec;
  const WheelFootprint fp = WheelFootprint::box(2.0, 1.0);
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    Pose pose = Pose::yaw(rng.uniform(0.0, 2.0 * M_PI),
                          {rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0), 0.0});
    const CellList cells =
        fill_quad(transform_footprint(fp, pose, Pose{}), spec);
    // Area sanity: the quad covers 2 m^2 = 50 cells; rasterization with the
    // half-open rule can differ by the boundary cells only.
    CHECK(cells.size() >= 35);
    CHECK(cells.size() <= 65);
    const double radius = std::hypot(1.0, 0.5) + spec.resolution;
    for (const auto& [row, col] : cells) {
      const Eigen::Vector2d center = spec.cell_center(row, col);
      CHECK((center - pose.translation.head<2>()).norm() <= radius);
    }
  }
}

TEST_CASE("footprint horizon filters the trajectory by time") {
  const GridSpec spec;
  const WheelFootprint fp = WheelFootprint::box(2.0, 1.0);
  auto poses = straight_line(3, 5.0, /*dt=*/1.0);  // 0 m, 5 m, 10 m apart
  const Pose& anchor = poses[0];

  const auto near = footprint_cells(poses, fp, anchor, spec, 0.5);
  const auto mid = footprint_cells(poses, fp, anchor, spec, 1.0);
  const auto far = footprint_cells(poses, fp, anchor, spec, 2.0);
  CHECK(near.size() == 50);
  CHECK(mid.size() == 100);
  CHECK(far.size() == 150);

  CHECK_THROWS_AS(footprint_cells(poses, fp, anchor, spec, -1.0), ConfigError);
}

TEST_CASE("cells appear in trajectory order without duplicates") {
  const GridSpec spec;
  const WheelFootprint fp = WheelFootprint::box(2.0, 1.0);
  const auto poses = straight_line(11, 0.4);
  const auto cells = footprint_cells(poses, fp, poses[0], spec, 100.0);

  const auto unique = as_set(cells);
  CHECK(unique.size() == cells.size());

  // First-touch order: the first 50 cells belong to the first footprint.
  const auto first = as_set(fill_quad(transform_footprint(fp, poses[0], poses[0]), spec));
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(first.count(cells[i]) == 1);
  }
}

TEST_CASE("label mask combines trajectory and obstacle evidence") {
  const GridSpec spec{10, 10, 0.5};
  ObstacleMask obstacles = ObstacleMask::make(spec);
  obstacles.cells[obstacles.index(2, 3)] = 1;
  obstacles.cells[obstacles.index(7, 7)] = 1;

  const CellList trav = {{4, 4}, {4, 5}, {7, 7}};
  const LabelResult result = build_label_mask(trav, obstacles, 3.5);

  CHECK(result.mask.timestamp == 3.5);
  CHECK(result.mask.at(4, 4) == CellLabel::kTraversable);
  CHECK(result.mask.at(4, 5) == CellLabel::kTraversable);
  CHECK(result.mask.at(2, 3) == CellLabel::kUntraversable);
  // Driven-over obstacle cell: trajectory evidence wins, conflict recorded.
  CHECK(result.mask.at(7, 7) == CellLabel::kTraversable);
  CHECK(result.conflict_cells == 1);
  CHECK(result.mask.at(0, 0) == CellLabel::kUnlabeled);

  CHECK(result.mask.count(CellLabel::kTraversable) == 3);
  CHECK(result.mask.count(CellLabel::kUntraversable) == 1);
  CHECK(result.mask.unlabeled_fraction() == doctest::Approx(96.0 / 100.0));
}

TEST_CASE("label masks round-trip through indexed png") {
  const GridSpec spec{12, 9, 0.2};
  LabelMask mask = LabelMask::make(spec, 1.25);
  Rng rng(404);
  for (auto& v : mask.labels) {
    v = static_cast<std::uint8_t>(rng.uniform_index(3));
  }

  const auto dir = std::filesystem::temp_directory_path() / "travbev_labels";
  std::filesystem::create_directories(dir);
  const auto path = dir / "labels.png";
  write_png_indexed(path, label_to_image(mask), label_palette());
  const LabelMask loaded = label_from_image(read_png_indexed(path), spec, 1.25);
  CHECK(loaded.labels == mask.labels);

  ImageU8 bad = label_to_image(mask);
  bad.data[0] = 7;
  CHECK_THROWS_AS(label_from_image(bad, spec, 0.0), FormatError);
  const GridSpec other{12, 10, 0.2};
  CHECK_THROWS_AS(label_from_image(label_to_image(mask), other, 0.0),
                  FormatError);
}
