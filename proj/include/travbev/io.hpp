#ifndef TRAVBEV_IO_HPP
#define TRAVBEV_IO_HPP

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "travbev/geometry.hpp"

namespace travbev {

using Json = nlohmann::json;

// Pose log: CSV with header timestamp,r00..r22,tx,ty,tz (row-major rotation).
std::vector<Pose> load_pose_log(const std::filesystem::path& path);
void save_pose_log(const std::filesystem::path& path,
                   const std::vector<Pose>& poses);

// Camera model JSON.
CameraModel load_camera_json(const std::filesystem::path& path);
void save_camera_json(const std::filesystem::path& path,
                      const CameraModel& cam);

// Point clouds, `.pts`: little-endian records, 3x float32 coordinates plus
// 3x uint8 color when colored; coordinates only when raw.
void save_point_cloud(const std::filesystem::path& path,
                      const PointCloud& cloud);
PointCloud load_point_cloud(const std::filesystem::path& path,
                            bool expect_colors);

// Generic JSON helpers used for sidecar files.
Json load_json(const std::filesystem::path& path);
void save_json(const std::filesystem::path& path, const Json& j);

/// Zero-padded frame stem, e.g. 7 -> "000007".
std::string frame_stem(int index);

}  // namespace travbev

#endif  // TRAVBEV_IO_HPP
