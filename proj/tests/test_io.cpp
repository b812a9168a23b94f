#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "support/generators.hpp"
#include "travbev/errors.hpp"
#include "travbev/io.hpp"
#include "travbev/png_io.hpp"
#include "travbev/rng.hpp"

namespace fs = std::filesystem;
using namespace travbev;

namespace {

fs::path temp_dir() {
  const fs::path dir = fs::temp_directory_path() / "travbev_io_tests";
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

}  // namespace

TEST_CASE("pose log round-trips exactly") {
  Rng rng(17);
  std::vector<Pose> poses;
  for (int i = 0; i < 25; ++i) {
    Pose p = testing::random_pose(rng);
    p.timestamp = 0.1 * i + 1e-3 * rng.uniform();
    poses.push_back(p);
  }
  const fs::path path = temp_dir() / "poses.csv";
  save_pose_log(path, poses);
  const std::vector<Pose> loaded = load_pose_log(path);
  REQUIRE(loaded.size() == poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    CHECK(loaded[i].timestamp == poses[i].timestamp);
    CHECK(loaded[i].rotation == poses[i].rotation);
    CHECK(loaded[i].translation == poses[i].translation);
  }
}

TEST_CASE("pose log header and field layout") {
  Pose p;
  p.timestamp = 1.5;
  p.translation = {0.25, -2.0, 3.0};
  const fs::path path = temp_dir() / "one_pose.csv";
  save_pose_log(path, {p});
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "timestamp,r00,r01,r02,r10,r11,r12,r20,r21,r22,tx,ty,tz");
  CHECK(row == "1.5,1,0,0,0,1,0,0,0,1,0.25,-2,3");
}

TEST_CASE("pose log rejects malformed input") {
  const fs::path dir = temp_dir();

  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_pose_log(dir / "does_not_exist.csv"), IoError);
  }
  SUBCASE("bad header") {
    const fs::path path = dir / "bad_header.csv";
    write_text(path, "time,x,y,z\n0,0,0,0\n");
    CHECK_THROWS_AS(load_pose_log(path), FormatError);
  }
  SUBCASE("wrong field count") {
    const fs::path path = dir / "short_row.csv";
    write_text(path,
               "timestamp,r00,r01,r02,r10,r11,r12,r20,r21,r22,tx,ty,tz\n"
               "0.0,1,0,0,0,1,0,0,0,1,0,0\n");
    CHECK_THROWS_AS(load_pose_log(path), FormatError);
  }
  SUBCASE("non-numeric field") {
    const fs::path path = dir / "nan_row.csv";
    write_text(path,
               "timestamp,r00,r01,r02,r10,r11,r12,r20,r21,r22,tx,ty,tz\n"
               "0.0,1,0,0,0,1,0,0,0,1,zero,0,0\n");
    CHECK_THROWS_AS(load_pose_log(path), FormatError);
  }
  SUBCASE("non-orthonormal rotation") {
    const fs::path path = dir / "bad_rot.csv";
    write_text(path,
               "timestamp,r00,r01,r02,r10,r11,r12,r20,r21,r22,tx,ty,tz\n"
               "0.0,2,0,0,0,1,0,0,0,1,0,0,0\n");
    CHECK_THROWS_AS(load_pose_log(path), FormatError);
  }
  SUBCASE("timestamps must strictly increase") {
    const fs::path path = dir / "regress.csv";
    write_text(path,
               "timestamp,r00,r01,r02,r10,r11,r12,r20,r21,r22,tx,ty,tz\n"
               "1.0,1,0,0,0,1,0,0,0,1,0,0,0\n"
               "1.0,1,0,0,0,1,0,0,0,1,1,0,0\n");
    CHECK_THROWS_AS(load_pose_log(path), FormatError);
  }
}

TEST_CASE("camera json round-trips") {
  CameraModel cam;
  cam.fx = 400.5;
  cam.fy = 399.25;
  cam.cx = 320.0;
  cam.cy = 240.125;
  cam.image_width = 640;
  cam.image_height = 480;
  cam.lidar_to_cam_rotation =
      Eigen::AngleAxisd(0.3, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  cam.lidar_to_cam_translation = {0.1, -0.2, 0.05};

  const fs::path path = temp_dir() / "camera.json";
  save_camera_json(path, cam);
  const CameraModel loaded = load_camera_json(path);
  CHECK(loaded.fx == cam.fx);
  CHECK(loaded.fy == cam.fy);
  CHECK(loaded.cx == cam.cx);
  CHECK(loaded.cy == cam.cy);
  CHECK(loaded.image_width == cam.image_width);
  CHECK(loaded.image_height == cam.image_height);
  CHECK((loaded.lidar_to_cam_rotation - cam.lidar_to_cam_rotation)
            .cwiseAbs()
            .maxCoeff() < 1e-15);
  CHECK(loaded.lidar_to_cam_translation == cam.lidar_to_cam_translation);
}

TEST_CASE("camera json validation") {
  const fs::path dir = temp_dir();
  SUBCASE("missing key") {
    const fs::path path = dir / "cam_missing.json";
    write_text(path, "{\"fx\": 100.0}");
    CHECK_THROWS_AS(load_camera_json(path), FormatError);
  }
  SUBCASE("non-positive focal length") {
    CameraModel cam;
    cam.fx = -1.0;
    cam.fy = 100.0;
    cam.image_width = 10;
    cam.image_height = 10;
    const fs::path path = dir / "cam_bad.json";
    CHECK_THROWS_AS(save_camera_json(path, cam), ConfigError);
  }
  SUBCASE("invalid json text") {
    const fs::path path = dir / "cam_syntax.json";
    write_text(path, "{not json");
    CHECK_THROWS_AS(load_camera_json(path), FormatError);
  }
}

TEST_CASE("colored point cloud round-trips") {
  Rng rng(23);
  PointCloud cloud = testing::random_cloud(rng, 128, 20.0, /*colored=*/true);
  const fs::path path = temp_dir() / "colored.pts";
  save_point_cloud(path, cloud);
  CHECK(fs::file_size(path) == 128 * 15);
  const PointCloud loaded = load_point_cloud(path, /*expect_colors=*/true);
  REQUIRE(loaded.size() == cloud.size());
  REQUIRE(loaded.has_colors());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    // Coordinates pass through float32, so compare at float precision.
    CHECK(static_cast<float>(cloud.points[i].x()) ==
          static_cast<float>(loaded.points[i].x()));
    CHECK(static_cast<float>(cloud.points[i].y()) ==
          static_cast<float>(loaded.points[i].y()));
    CHECK(static_cast<float>(cloud.points[i].z()) ==
          static_cast<float>(loaded.points[i].z()));
    CHECK(cloud.colors[i] == loaded.colors[i]);
  }
}

TEST_CASE("raw point cloud round-trips") {
  Rng rng(29);
  PointCloud cloud = testing::random_cloud(rng, 64, 20.0, /*colored=*/false);
  const fs::path path = temp_dir() / "raw.pts";
  save_point_cloud(path, cloud);
  CHECK(fs::file_size(path) == 64 * 12);
  const PointCloud loaded = load_point_cloud(path, /*expect_colors=*/false);
  REQUIRE(loaded.size() == cloud.size());
  CHECK_FALSE(loaded.has_colors());
}

TEST_CASE("point cloud file errors") {
  const fs::path dir = temp_dir();
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_point_cloud(dir / "nope.pts", true), IoError);
  }
  SUBCASE("truncated record") {
    const fs::path path = dir / "truncated.pts";
    write_text(path, std::string(13, '\0'));  // one colored record is 15 B
    CHECK_THROWS_AS(load_point_cloud(path, true), FormatError);
  }
  SUBCASE("non-finite coordinate") {
    const fs::path path = dir / "nonfinite.pts";
    std::ofstream out(path, std::ios::binary);
    const float values[3] = {0.0F, std::numeric_limits<float>::infinity(),
                             1.0F};
    out.write(reinterpret_cast<const char*>(values), sizeof(values));
    out.close();
    CHECK_THROWS_AS(load_point_cloud(path, false), FormatError);
  }
  SUBCASE("empty file yields empty cloud") {
    const fs::path path = dir / "empty.pts";
    write_text(path, "");
    CHECK(load_point_cloud(path, true).size() == 0);
  }
}

TEST_CASE("rgb png round-trips") {
  Rng rng(31);
  ImageU8 image = ImageU8::make(37, 21, 3);
  for (auto& v : image.data) {
    v = static_cast<std::uint8_t>(rng.uniform_index(256));
  }
  const fs::path path = temp_dir() / "rgb.png";
  write_png_rgb8(path, image);
  const ImageU8 loaded = read_png_rgb8(path);
  CHECK(loaded.width == image.width);
  CHECK(loaded.height == image.height);
  CHECK(loaded.channels == 3);
  CHECK(loaded.data == image.data);
}

TEST_CASE("gray8 and gray16 png round-trip") {
  Rng rng(37);
  ImageU8 gray = ImageU8::make(15, 9, 1);
  for (auto& v : gray.data) {
    v = static_cast<std::uint8_t>(rng.uniform_index(256));
  }
  const fs::path p8 = temp_dir() / "gray8.png";
  write_png_gray8(p8, gray);
  CHECK(read_png_gray8(p8).data == gray.data);

  ImageU16 wide = ImageU16::make(11, 7);
  for (auto& v : wide.data) {
    v = static_cast<std::uint16_t>(rng.uniform_index(65536));
  }
  const fs::path p16 = temp_dir() / "gray16.png";
  write_png_gray16(p16, wide);
  const ImageU16 loaded = read_png_gray16(p16);
  CHECK(loaded.width == wide.width);
  CHECK(loaded.height == wide.height);
  CHECK(loaded.data == wide.data);
}

TEST_CASE("indexed png preserves raw palette indices") {
  ImageU8 indices = ImageU8::make(6, 4, 1);
  for (std::size_t i = 0; i < indices.data.size(); ++i) {
    indices.data[i] = static_cast<std::uint8_t>(i % 3);
  }
  const std::vector<Rgb> palette = {Rgb{128, 128, 128}, Rgb{0, 200, 0},
                                    Rgb{220, 0, 0}};
  const fs::path path = temp_dir() / "indexed.png";
  write_png_indexed(path, indices, palette);
  const ImageU8 loaded = read_png_indexed(path);
  CHECK(loaded.width == indices.width);
  CHECK(loaded.height == indices.height);
  CHECK(loaded.data == indices.data);
}

TEST_CASE("png readers reject mismatched formats") {
  const fs::path dir = temp_dir();
  SUBCASE("missing file") {
    CHECK_THROWS_AS(read_png_rgb8(dir / "ghost.png"), IoError);
  }
  SUBCASE("not a png") {
    const fs::path path = dir / "not_a_png.png";
    write_text(path, "plain text");
    CHECK_THROWS_AS(read_png_rgb8(path), FormatError);
  }
}

TEST_CASE("json helpers and frame stems") {
  const fs::path path = temp_dir() / "meta.json";
  Json j = {{"alpha", 0.9}, {"items", {1, 2, 3}}};
  save_json(path, j);
  CHECK(load_json(path) == j);
  CHECK_THROWS_AS(load_json(temp_dir() / "missing.json"), IoError);

  CHECK(frame_stem(0) == "000000");
  CHECK(frame_stem(7) == "000007");
  CHECK(frame_stem(123456) == "123456");
}
