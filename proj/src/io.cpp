#include "travbev/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "travbev/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "file formats are little endian");

namespace travbev {

namespace {

constexpr const char* kPoseHeader =
    "timestamp,r00,r01,r02,r10,r11,r12,r20,r21,r22,tx,ty,tz";

std::ifstream open_input(const std::filesystem::path& path,
                         std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  return in;
}

std::ofstream open_output(const std::filesystem::path& path,
                          std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  return out;
}

}  // namespace

std::vector<Pose> load_pose_log(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!std::getline(in, line) || line != kPoseHeader) {
    throw FormatError("bad pose log header in " + path.string());
  }
  std::vector<Pose> poses;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    std::istringstream ss(line);
    double v[13];
    std::string tok;
    for (int i = 0; i < 13; ++i) {
      if (!std::getline(ss, tok, ',')) {
        throw FormatError("pose log " + path.string() + " line " +
                          std::to_string(line_no) + ": expected 13 fields");
      }
      try {
        v[i] = std::stod(tok);
      } catch (const std::exception&) {
        throw FormatError("pose log " + path.string() + " line " +
                          std::to_string(line_no) + ": bad number '" + tok +
                          "'");
      }
    }
    Pose pose;
    pose.timestamp = v[0];
    pose.rotation << v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9];
    pose.translation << v[10], v[11], v[12];
    validate_pose(pose);
    if (!poses.empty() && pose.timestamp <= poses.back().timestamp) {
      throw FormatError("pose log " + path.string() + " line " +
                        std::to_string(line_no) +
                        ": timestamps must strictly increase");
    }
    poses.push_back(pose);
  }
  return poses;
}

void save_pose_log(const std::filesystem::path& path,
                   const std::vector<Pose>& poses) {
  std::ofstream out = open_output(path);
  out << kPoseHeader << "\n";
  out << std::setprecision(17);
  for (const Pose& p : poses) {
    out << p.timestamp;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        out << ',' << p.rotation(r, c);
      }
    }
    for (int i = 0; i < 3; ++i) {
      out << ',' << p.translation[i];
    }
    out << "\n";
  }
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

CameraModel load_camera_json(const std::filesystem::path& path) {
  const Json j = load_json(path);
  CameraModel cam;
  try {
    cam.fx = j.at("fx").get<double>();
    cam.fy = j.at("fy").get<double>();
    cam.cx = j.at("cx").get<double>();
    cam.cy = j.at("cy").get<double>();
    cam.image_width = j.at("image_width").get<int>();
    cam.image_height = j.at("image_height").get<int>();
    const auto rot = j.at("lidar_to_cam_rotation").get<std::vector<double>>();
    const auto tr = j.at("lidar_to_cam_translation").get<std::vector<double>>();
    if (rot.size() != 9 || tr.size() != 3) {
      throw FormatError("camera extrinsics must be 9 + 3 numbers: " +
                        path.string());
    }
    cam.lidar_to_cam_rotation << rot[0], rot[1], rot[2], rot[3], rot[4],
        rot[5], rot[6], rot[7], rot[8];
    cam.lidar_to_cam_translation << tr[0], tr[1], tr[2];
  } catch (const Json::exception& e) {
    throw FormatError("camera json " + path.string() + ": " + e.what());
  }
  validate_camera(cam);
  return cam;
}

void save_camera_json(const std::filesystem::path& path,
                      const CameraModel& cam) {
  validate_camera(cam);
  Json j;
  j["fx"] = cam.fx;
  j["fy"] = cam.fy;
  j["cx"] = cam.cx;
  j["cy"] = cam.cy;
  j["image_width"] = cam.image_width;
  j["image_height"] = cam.image_height;
  std::vector<double> rot(9), tr(3);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      rot[r * 3 + c] = cam.lidar_to_cam_rotation(r, c);
    }
    tr[r] = cam.lidar_to_cam_translation[r];
  }
  j["lidar_to_cam_rotation"] = rot;
  j["lidar_to_cam_translation"] = tr;
  save_json(path, j);
}

void save_point_cloud(const std::filesystem::path& path,
                      const PointCloud& cloud) {
  if (!cloud.color_invariant_holds()) {
    throw ConfigError("point cloud colors must cover all points or none");
  }
  std::ofstream out = open_output(path, std::ios::binary);
  const bool colored = cloud.has_colors();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const float xyz[3] = {static_cast<float>(cloud.points[i].x()),
                          static_cast<float>(cloud.points[i].y()),
                          static_cast<float>(cloud.points[i].z())};
    out.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
    if (colored) {
      const Rgb& c = cloud.colors[i];
      const std::uint8_t rgb[3] = {c.r, c.g, c.b};
      out.write(reinterpret_cast<const char*>(rgb), sizeof(rgb));
    }
  }
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

PointCloud load_point_cloud(const std::filesystem::path& path,
                            bool expect_colors) {
  std::ifstream in = open_input(path, std::ios::binary | std::ios::ate);
  const std::streamoff size = in.tellg();
  in.seekg(0);
  const std::size_t record = expect_colors ? 15 : 12;
  if (size % record != 0) {
    throw FormatError("point cloud " + path.string() +
                      " is not a whole number of records");
  }
  const std::size_t n = static_cast<std::size_t>(size) / record;
  PointCloud cloud;
  cloud.points.reserve(n);
  if (expect_colors) {
    cloud.colors.reserve(n);
  }
  for (std::size_t i = 0; i < n; ++i) {
    float xyz[3];
    in.read(reinterpret_cast<char*>(xyz), sizeof(xyz));
    cloud.points.emplace_back(xyz[0], xyz[1], xyz[2]);
    if (expect_colors) {
      std::uint8_t rgb[3];
      in.read(reinterpret_cast<char*>(rgb), sizeof(rgb));
      cloud.colors.push_back(Rgb{rgb[0], rgb[1], rgb[2]});
    }
  }
  if (!in) {
    throw FormatError("truncated point cloud: " + path.string());
  }
  for (const auto& p : cloud.points) {
    if (!p.allFinite()) {
      throw FormatError("non-finite point in " + path.string());
    }
  }
  return cloud;
}

Json load_json(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  try {
    Json j;
    in >> j;
    return j;
  } catch (const Json::exception& e) {
    throw FormatError("invalid json in " + path.string() + ": " + e.what());
  }
}

void save_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out = open_output(path);
  out << j.dump(2) << "\n";
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

std::string frame_stem(int index) {
  std::ostringstream os;
  os << std::setw(6) << std::setfill('0') << index;
  return os.str();
}

}  // namespace travbev
