#pragma once

// Frames and camera models for ground-to-satellite alignment.
//
// Satellite frame: x east, y south, z down (right-handed). Satellite images
// are a parallel projection of that frame, u = x / gamma + c, v = y / gamma + c.
//
// Vehicle (GPS) body frame uses camera axes: x right, y down, z forward.
// Yaw 0 means the vehicle heads north (-y in the satellite frame); positive
// yaw turns the heading towards east (clockwise in the satellite image).

#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace cvloc {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat23 = Eigen::Matrix<double, 2, 3>;

inline constexpr double kEarthConstant = 156543.03392;
/// Points closer than this to the ground camera plane are invisible.
inline constexpr double kDepthMin = 0.1;

inline constexpr double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Wraps an angle to (-pi, pi].
double wrap_angle(double rad);

/// Ground resolution of a web-map tile in meters per pixel.
double meters_per_pixel(double latitude_deg, int zoom, int scale);

struct SatelliteGeoref {
  double center_px = 0.0;
  double gamma = 1.0;
  double latitude_deg = 0.0;
  int zoom = 18;
  int scale = 2;

  /// Builds a georeference whose gamma is evaluated from the tile parameters.
  static SatelliteGeoref from_tile(double center_px, double latitude_deg, int zoom, int scale);
  /// Builds a georeference for a given gamma; the latitude is solved so that
  /// the tile formula reproduces gamma at (zoom, scale).
  static SatelliteGeoref from_gamma(double center_px, double gamma, int zoom = 18, int scale = 2);

  /// Georeference of pyramid level `level` (resolution halved per level).
  SatelliteGeoref at_level(int level) const;

  /// Throws ContractError when an invariant does not hold.
  void validate() const;
};

struct CameraIntrinsics {
  double fx = 1.0, fy = 1.0;
  double cx = 0.0, cy = 0.0;
  int width = 1, height = 1;

  CameraIntrinsics at_level(int level) const;
  void validate() const;
};

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  RigidTransform inverse() const;
  RigidTransform operator*(const RigidTransform& rhs) const;

  void validate(double tol = 1e-9) const;
};

/// 3-DoF vehicle pose. (lateral, longitudinal) is the vehicle position along
/// the yaw-0 axes (east, north); yaw in radians.
struct Pose3 {
  double lateral = 0.0;
  double longitudinal = 0.0;
  double yaw = 0.0;

  /// Position in the satellite frame (east, south).
  Vec2 position() const { return {lateral, -longitudinal}; }
  /// Unit heading (longitudinal axis) in (east, south).
  Vec2 heading() const;
  /// Unit lateral axis, heading rotated +90 deg, in (east, south).
  Vec2 lateral_axis() const;

  /// Applies a vehicle-frame increment (lateral m, longitudinal m, yaw rad)
  /// expressed at the current yaw. Yaw is re-wrapped.
  Pose3 retract(const Vec3& delta) const;
  /// Translates the pose by a satellite-frame offset (east m, south m).
  Pose3 translated(double east, double south) const;

  static Pose3 from_degrees(double lateral_m, double longitudinal_m, double yaw_deg);
  double yaw_deg() const { return rad2deg(yaw); }

  void validate() const;
};

/// Quantities held fixed during one solve.
struct PoseContext {
  double roll = 0.0;
  double pitch = 0.0;
  double height = 0.0;
  RigidTransform cam_to_gps;
};

/// Ground-camera-frame points, meters.
struct PointSet {
  std::vector<Vec3> points;

  std::size_t size() const { return points.size(); }
  void validate() const;
};

/// Ground-camera frame -> satellite 3D frame for `pose`.
RigidTransform pose_to_transform(const Pose3& pose, const PoseContext& ctx);

std::vector<Vec3> transform_points(std::span<const Vec3> points, const RigidTransform& T);

std::vector<Vec2> project_satellite(std::span<const Vec3> points_sat, const SatelliteGeoref& georef);

struct GroundProjection {
  std::vector<Vec2> uv;
  std::vector<std::uint8_t> visible;
};

GroundProjection project_ground(std::span<const Vec3> points_cam, const CameraIntrinsics& K);

/// d(u^s, v^s) / d(lateral, longitudinal, yaw) for one camera-frame point,
/// with the increment taken in the vehicle frame at the current yaw.
Mat23 d_satproj_d_pose(const Vec3& point_cam, const Pose3& pose, const PoseContext& ctx,
                       const SatelliteGeoref& georef);
/// Same Jacobian for a point already mapped into the satellite frame.
Mat23 d_satproj_d_pose_sat(const Vec3& point_sat, const Pose3& pose, const SatelliteGeoref& georef);

/// Uniform subsample of `cloud`; without replacement unless n > cloud size.
PointSet sample_points(const PointSet& cloud, std::size_t n, std::uint64_t seed);

}  // namespace cvloc
