#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

namespace sgfuse {

using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;
using Quat = Eigen::Quaterniond;

/// Rigid transform mapping local coordinates into the parent frame.
/// The quaternion is kept normalized on construction.
struct Pose {
  Quat rotation{1.0, 0.0, 0.0, 0.0};
  Vec3 translation{0.0, 0.0, 0.0};

  Pose() = default;
  Pose(const Quat& q, const Vec3& t) : rotation(q.normalized()), translation(t) {}

  static Pose identity() { return Pose(); }

  static Pose from_yaw(double yaw_rad, const Vec3& t) {
    return Pose(Quat(Eigen::AngleAxisd(yaw_rad, Vec3::UnitZ())), t);
  }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  Pose compose(const Pose& rhs) const {
    return Pose(rotation * rhs.rotation, rotation * rhs.translation + translation);
  }

  Pose inverse() const {
    const Quat qi = rotation.conjugate();
    return Pose(qi, -(qi * translation));
  }

  bool equals_exact(const Pose& o) const {
    return rotation.w() == o.rotation.w() && rotation.x() == o.rotation.x() &&
           rotation.y() == o.rotation.y() && rotation.z() == o.rotation.z() &&
           translation == o.translation;
  }

  double yaw() const {
    const Eigen::Matrix3d r = rotation.toRotationMatrix();
    return std::atan2(r(1, 0), r(0, 0));
  }
};

/// Pixel a point was sampled from: image row and column.
struct PixelRC {
  int row = 0;
  int col = 0;
  bool operator==(const PixelRC&) const = default;
};

/// Points in the platform frame; optionally each point remembers the
/// image pixel it came from (same ordering as points).
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<PixelRC> pixels;  // empty or one entry per point

  bool has_pixels() const { return !pixels.empty(); }
  std::size_t size() const { return points.size(); }
};

/// Rotation of the usual forward-looking optical mount: camera +z maps to
/// platform +x (forward), camera +x to platform -y, camera +y to platform -z.
inline Quat optical_mount_rotation() {
  Eigen::Matrix3d r;
  r.col(0) = Vec3(0, -1, 0);
  r.col(1) = Vec3(0, 0, -1);
  r.col(2) = Vec3(1, 0, 0);
  return Quat(r);
}

/// Pinhole camera. The camera frame is x right, y down, z forward;
/// `extrinsic` is the pose of the camera in the platform frame.
struct CameraModel {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;
  Pose extrinsic{optical_mount_rotation(), Vec3::Zero()};

  // Near plane for projection; avoids numeric blow-up as z -> 0.
  static constexpr double kMinDepth = 0.05;

  bool valid() const {
    return fx > 0.0 && fy > 0.0 && width > 0 && height > 0 && cx >= 0.0 &&
           cx < width && cy >= 0.0 && cy < height;
  }
};

/// Nearest pixel for continuous image coordinates, or nullopt when the
/// rounded pixel falls outside the image.
inline std::optional<PixelRC> nearest_pixel(double u, double v, const CameraModel& cam) {
  const long col = std::lround(u);
  const long row = std::lround(v);
  if (col < 0 || col >= cam.width || row < 0 || row >= cam.height) return std::nullopt;
  return PixelRC{static_cast<int>(row), static_cast<int>(col)};
}

/// Pinhole projection of a camera-frame point. Absent when the point is
/// behind the near plane or lands outside the image.
inline std::optional<Vec2> project(const Vec3& p_cam, const CameraModel& cam) {
  if (!(p_cam.z() > CameraModel::kMinDepth)) return std::nullopt;
  const double u = cam.fx * p_cam.x() / p_cam.z() + cam.cx;
  const double v = cam.fy * p_cam.y() / p_cam.z() + cam.cy;
  if (!nearest_pixel(u, v, cam)) return std::nullopt;
  return Vec2(u, v);
}

/// Inverse pinhole: image coordinates plus depth back to a camera-frame point.
inline Vec3 backproject(double u, double v, double depth, const CameraModel& cam) {
  if (!(depth > 0.0)) throw std::invalid_argument("backproject: depth must be positive");
  return Vec3((u - cam.cx) * depth / cam.fx, (v - cam.cy) * depth / cam.fy, depth);
}

/// Rigidly transforms every point; pixel bookkeeping is preserved.
inline PointCloud transform_cloud(const PointCloud& cloud, const Pose& pose) {
  PointCloud out;
  out.points.reserve(cloud.points.size());
  for (const Vec3& p : cloud.points) out.points.push_back(pose.apply(p));
  out.pixels = cloud.pixels;
  return out;
}

}  // namespace sgfuse
