#ifndef TRAVBEV_GEOMETRY_HPP
#define TRAVBEV_GEOMETRY_HPP

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace travbev {

/// Rigid body pose (vehicle frame -> odometry frame).
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  double timestamp = 0.0;  // seconds, monotonic per sequence

  /// max|R^T R - I|, used by the orthonormality invariant.
  double orthonormality_error() const {
    return (rotation.transpose() * rotation - Eigen::Matrix3d::Identity())
        .cwiseAbs()
        .maxCoeff();
  }

  bool is_valid(double tol = 1e-6) const {
    return orthonormality_error() < tol &&
           std::abs(rotation.determinant() - 1.0) < tol;
  }

  static Pose yaw(double angle_rad, const Eigen::Vector3d& t,
                  double timestamp = 0.0);
};

/// Throws FormatError if the pose violates the orthonormality invariants.
void validate_pose(const Pose& pose, double tol = 1e-6);

/// Pinhole camera intrinsics plus the LiDAR-to-camera extrinsics.
struct CameraModel {
  double fx = 0.0, fy = 0.0;       // focal lengths, pixels
  double cx = 0.0, cy = 0.0;       // principal point, pixels
  int image_width = 0, image_height = 0;
  Eigen::Matrix3d lidar_to_cam_rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d lidar_to_cam_translation = Eigen::Vector3d::Zero();
};

/// Throws ConfigError if intrinsics/extrinsics violate their invariants.
void validate_camera(const CameraModel& cam);

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

enum class CloudFrame { kVehicle, kOdometry };

/// Point set with optional per-point color. Colors are present for all
/// points or for none.
struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<Rgb> colors;  // empty, or same size as points
  CloudFrame frame = CloudFrame::kVehicle;

  bool has_colors() const { return !colors.empty(); }
  std::size_t size() const { return points.size(); }
  bool color_invariant_holds() const {
    return colors.empty() || colors.size() == points.size();
  }
};

/// Ground-contact offsets of the four wheels in the vehicle frame.
struct WheelFootprint {
  Eigen::Vector3d left_front;
  Eigen::Vector3d left_rear;
  Eigen::Vector3d right_front;
  Eigen::Vector3d right_rear;

  /// Axis-aligned footprint: length along +x (forward), width along +y (left).
  static WheelFootprint box(double length, double width);
  bool is_valid() const;
};

/// Simple interleaved 8-bit raster (1 or 3 channels, row-major).
struct ImageU8 {
  int width = 0, height = 0, channels = 1;
  std::vector<std::uint8_t> data;

  static ImageU8 make(int width, int height, int channels,
                      std::uint8_t fill = 0);
  std::uint8_t& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  Rgb rgb_at(int x, int y) const {
    return Rgb{at(x, y, 0), at(x, y, 1), at(x, y, 2)};
  }
  void set_rgb(int x, int y, Rgb color) {
    at(x, y, 0) = color.r;
    at(x, y, 1) = color.g;
    at(x, y, 2) = color.b;
  }
};

/// Projects a LiDAR-frame point into the image. Returns the real-valued
/// pixel, or nothing when the point is behind the camera or out of frame.
std::optional<Eigen::Vector2d> project_point(const Eigen::Vector3d& p,
                                             const CameraModel& cam);

/// Assigns each point the color of its projected pixel (nearest pixel).
/// Points with no valid projection are dropped. Throws ConfigError when the
/// image dimensions do not match the camera model.
PointCloud colorize_cloud(const PointCloud& cloud, const ImageU8& image,
                          const CameraModel& cam);

/// Maps the previous fused odometry-frame cloud into the vehicle frame at
/// pose_t and appends the current vehicle-frame cloud (previous points
/// first, current points last).
PointCloud fuse_clouds(const PointCloud& prev_fused_odom, const Pose& pose_t,
                       const PointCloud& current);

/// Vehicle frame -> odometry frame: p |-> R p + T.
PointCloud to_odom(const PointCloud& cloud_vehicle, const Pose& pose_t);

/// The four wheel contacts of the pose at time tau expressed in the vehicle
/// frame at time t: inv(A_t) * A_tau applied to each contact.
std::array<Eigen::Vector3d, 4> transform_footprint(const WheelFootprint& fp,
                                                   const Pose& pose_tau,
                                                   const Pose& pose_t);

}  // namespace travbev

#endif  // TRAVBEV_GEOMETRY_HPP
