#include "travbev/geometry.hpp"

#include <cmath>

#include "travbev/errors.hpp"

namespace travbev {

Pose Pose::yaw(double angle_rad, const Eigen::Vector3d& t, double timestamp) {
  Pose pose;
  pose.rotation = Eigen::AngleAxisd(angle_rad, Eigen::Vector3d::UnitZ())
                      .toRotationMatrix();
  pose.translation = t;
  pose.timestamp = timestamp;
  return pose;
}

void validate_pose(const Pose& pose, double tol) {
  if (!pose.translation.allFinite() || !pose.rotation.allFinite()) {
    throw FormatError("pose has non-finite entries");
  }
  if (pose.orthonormality_error() >= tol) {
    throw FormatError("pose rotation is not orthonormal");
  }
  if (std::abs(pose.rotation.determinant() - 1.0) >= tol) {
    throw FormatError("pose rotation determinant is not +1");
  }
}

void validate_camera(const CameraModel& cam) {
  if (cam.fx <= 0.0 || cam.fy <= 0.0) {
    throw ConfigError("camera focal lengths must be positive");
  }
  if (cam.image_width <= 0 || cam.image_height <= 0) {
    throw ConfigError("camera image dimensions must be positive");
  }
  if (cam.cx < 0.0 || cam.cx >= cam.image_width || cam.cy < 0.0 ||
      cam.cy >= cam.image_height) {
    throw ConfigError("camera principal point lies outside the image");
  }
  Pose extr;
  extr.rotation = cam.lidar_to_cam_rotation;
  extr.translation = cam.lidar_to_cam_translation;
  if (!extr.is_valid()) {
    throw ConfigError("lidar-to-camera rotation is not orthonormal");
  }
}

WheelFootprint WheelFootprint::box(double length, double width) {
  const double hl = length / 2.0, hw = width / 2.0;
  WheelFootprint fp;
  fp.left_front = {hl, hw, 0.0};
  fp.left_rear = {-hl, hw, 0.0};
  fp.right_front = {hl, -hw, 0.0};
  fp.right_rear = {-hl, -hw, 0.0};
  return fp;
}

bool WheelFootprint::is_valid() const {
  return left_front.x() > left_rear.x() && right_front.x() > right_rear.x() &&
         left_front.y() > right_front.y() && left_rear.y() > right_rear.y();
}

ImageU8 ImageU8::make(int width, int height, int channels, std::uint8_t fill) {
  ImageU8 img;
  img.width = width;
  img.height = height;
  img.channels = channels;
  img.data.assign(static_cast<std::size_t>(width) * height * channels, fill);
  return img;
}

std::optional<Eigen::Vector2d> project_point(const Eigen::Vector3d& p,
                                             const CameraModel& cam) {
  const Eigen::Vector3d pc =
      cam.lidar_to_cam_rotation * p + cam.lidar_to_cam_translation;
  if (pc.z() <= 0.0) {
    return std::nullopt;
  }
  const double u = cam.fx * pc.x() / pc.z() + cam.cx;
  const double v = cam.fy * pc.y() / pc.z() + cam.cy;
  if (u < 0.0 || u >= cam.image_width || v < 0.0 || v >= cam.image_height) {
    return std::nullopt;
  }
  return Eigen::Vector2d(u, v);
}

PointCloud colorize_cloud(const PointCloud& cloud, const ImageU8& image,
                          const CameraModel& cam) {
  if (image.width != cam.image_width || image.height != cam.image_height) {
    throw ConfigError("image dimensions do not match the camera model");
  }
  if (image.channels != 3) {
    throw ConfigError("colorization requires a 3-channel image");
  }
  PointCloud out;
  out.frame = cloud.frame;
  out.points.reserve(cloud.size());
  out.colors.reserve(cloud.size());
  for (const Eigen::Vector3d& p : cloud.points) {
    const auto px = project_point(p, cam);
    if (!px) {
      continue;
    }
    const int u = std::min<int>(image.width - 1,
                                static_cast<int>(std::lround(px->x())));
    const int v = std::min<int>(image.height - 1,
                                static_cast<int>(std::lround(px->y())));
    out.points.push_back(p);
    out.colors.push_back(image.rgb_at(u, v));
  }
  return out;
}

PointCloud fuse_clouds(const PointCloud& prev_fused_odom, const Pose& pose_t,
                       const PointCloud& current) {
  const Eigen::Matrix3d rt = pose_t.rotation.transpose();
  const Eigen::Vector3d shift = -rt * pose_t.translation;

  PointCloud out;
  out.frame = CloudFrame::kVehicle;
  out.points.reserve(prev_fused_odom.size() + current.size());
  const bool colored = prev_fused_odom.has_colors() || current.has_colors();
  if (colored) {
    out.colors.reserve(prev_fused_odom.size() + current.size());
  }
  for (std::size_t i = 0; i < prev_fused_odom.size(); ++i) {
    out.points.emplace_back(rt * prev_fused_odom.points[i] + shift);
    if (colored) {
      out.colors.push_back(prev_fused_odom.has_colors()
                               ? prev_fused_odom.colors[i]
                               : Rgb{});
    }
  }
  for (std::size_t i = 0; i < current.size(); ++i) {
    out.points.push_back(current.points[i]);
    if (colored) {
      out.colors.push_back(current.has_colors() ? current.colors[i] : Rgb{});
    }
  }
  return out;
}

PointCloud to_odom(const PointCloud& cloud_vehicle, const Pose& pose_t) {
  PointCloud out;
  out.frame = CloudFrame::kOdometry;
  out.points.reserve(cloud_vehicle.size());
  out.colors = cloud_vehicle.colors;
  for (const Eigen::Vector3d& p : cloud_vehicle.points) {
    out.points.emplace_back(pose_t.rotation * p + pose_t.translation);
  }
  return out;
}

std::array<Eigen::Vector3d, 4> transform_footprint(const WheelFootprint& fp,
                                                   const Pose& pose_tau,
                                                   const Pose& pose_t) {
  // inv(A_t) * A_tau with A = [R|T]: p |-> R_t^T (R_tau p + T_tau - T_t).
  const Eigen::Matrix3d rt = pose_t.rotation.transpose();
  const Eigen::Vector3d dt = pose_tau.translation - pose_t.translation;
  const auto map = [&](const Eigen::Vector3d& p) -> Eigen::Vector3d {
    return rt * (pose_tau.rotation * p + dt);
  };
  return {map(fp.left_front), map(fp.left_rear), map(fp.right_front),
          map(fp.right_rear)};
}

}  // namespace travbev
