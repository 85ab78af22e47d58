#include "cvloc/geometry.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include <Eigen/Geometry>

#include "cvloc/errors.hpp"

namespace cvloc {

namespace {

// Vehicle body (x right, y down, z forward) -> satellite (east, south, down)
// at yaw 0.
Mat3 body_to_satellite_axes() {
  Mat3 r;
  r << 1, 0, 0,
       0, 0, -1,
       0, 1, 0;
  return r;
}

Mat3 rot_z(double a) {
  return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix();
}

Mat3 rot_x(double a) {
  return Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix();
}

}  // namespace

double wrap_angle(double rad) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(rad, two_pi);
  if (w <= -std::numbers::pi) w += two_pi;
  if (w > std::numbers::pi) w -= two_pi;
  return w;
}

double meters_per_pixel(double latitude_deg, int zoom, int scale) {
  if (!(std::abs(latitude_deg) < 90.0)) {
    throw DomainError("latitude must satisfy |latitude| < 90 deg, got " + std::to_string(latitude_deg));
  }
  if (zoom < 0) throw DomainError("zoom must be >= 0");
  if (scale < 1) throw DomainError("scale must be >= 1");
  return kEarthConstant * std::cos(deg2rad(latitude_deg)) / (std::ldexp(1.0, zoom) * scale);
}

SatelliteGeoref SatelliteGeoref::from_tile(double center_px, double latitude_deg, int zoom, int scale) {
  SatelliteGeoref g;
  g.center_px = center_px;
  g.latitude_deg = latitude_deg;
  g.zoom = zoom;
  g.scale = scale;
  g.gamma = meters_per_pixel(latitude_deg, zoom, scale);
  g.validate();
  return g;
}

SatelliteGeoref SatelliteGeoref::from_gamma(double center_px, double gamma, int zoom, int scale) {
  if (!(gamma > 0.0)) throw DomainError("gamma must be positive");
  const double c = gamma * std::ldexp(1.0, zoom) * scale / kEarthConstant;
  if (c > 1.0) throw DomainError("gamma too large for zoom/scale: no latitude reproduces it");
  SatelliteGeoref g;
  g.center_px = center_px;
  g.gamma = gamma;
  g.latitude_deg = rad2deg(std::acos(c));
  g.zoom = zoom;
  g.scale = scale;
  g.validate();
  return g;
}

SatelliteGeoref SatelliteGeoref::at_level(int level) const {
  SatelliteGeoref g = *this;
  g.center_px = std::ldexp(center_px, -level);
  g.gamma = std::ldexp(gamma, level);
  g.zoom = zoom - level;
  return g;
}

void SatelliteGeoref::validate() const {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ContractError("georef: gamma must be positive");
  if (!(std::abs(latitude_deg) < 90.0)) throw ContractError("georef: |latitude_deg| must be < 90");
  if (!std::isfinite(center_px)) throw ContractError("georef: center_px not finite");
  if (zoom < 0 || scale < 1) throw ContractError("georef: zoom must be >= 0 and scale >= 1");
  const double expected = meters_per_pixel(latitude_deg, zoom, scale);
  if (std::abs(gamma - expected) > 1e-9 * expected) {
    throw ContractError("georef: gamma " + std::to_string(gamma) + " does not match the tile resolution " +
                        std::to_string(expected));
  }
}

CameraIntrinsics CameraIntrinsics::at_level(int level) const {
  CameraIntrinsics k = *this;
  k.fx = std::ldexp(fx, -level);
  k.fy = std::ldexp(fy, -level);
  k.cx = std::ldexp(cx, -level);
  k.cy = std::ldexp(cy, -level);
  k.width = width >> level;
  k.height = height >> level;
  return k;
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ContractError("intrinsics: focal lengths must be positive");
  if (width < 1 || height < 1) throw ContractError("intrinsics: image size must be positive");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
    throw ContractError("intrinsics: principal point outside the image");
  }
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

RigidTransform RigidTransform::operator*(const RigidTransform& rhs) const {
  RigidTransform out;
  out.rotation = rotation * rhs.rotation;
  out.translation = rotation * rhs.translation + translation;
  return out;
}

void RigidTransform::validate(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) throw ContractError("transform: non-finite entries");
  if (((rotation.transpose() * rotation) - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) {
    throw ContractError("transform: rotation is not orthonormal");
  }
  if (std::abs(rotation.determinant() - 1.0) > tol) throw ContractError("transform: det(rotation) != +1");
}

Vec2 Pose3::heading() const { return {std::sin(yaw), -std::cos(yaw)}; }

Vec2 Pose3::lateral_axis() const { return {std::cos(yaw), std::sin(yaw)}; }

Pose3 Pose3::retract(const Vec3& delta) const {
  const Vec2 d = lateral_axis() * delta.x() + heading() * delta.y();
  return {lateral + d.x(), longitudinal - d.y(), wrap_angle(yaw + delta.z())};
}

Pose3 Pose3::translated(double east, double south) const {
  return {lateral + east, longitudinal - south, yaw};
}

Pose3 Pose3::from_degrees(double lateral_m, double longitudinal_m, double yaw_deg) {
  return {lateral_m, longitudinal_m, wrap_angle(deg2rad(yaw_deg))};
}

void Pose3::validate() const {
  if (!std::isfinite(lateral) || !std::isfinite(longitudinal) || !std::isfinite(yaw)) {
    throw ContractError("pose: non-finite field");
  }
  if (!(yaw > -std::numbers::pi && yaw <= std::numbers::pi)) throw ContractError("pose: yaw outside (-pi, pi]");
}

void PointSet::validate() const {
  if (points.empty()) throw ContractError("point set is empty");
  for (const auto& p : points) {
    if (!p.allFinite()) throw ContractError("point set contains a non-finite coordinate");
  }
}

RigidTransform pose_to_transform(const Pose3& pose, const PoseContext& ctx) {
  RigidTransform gps_to_sat;
  gps_to_sat.rotation = rot_z(pose.yaw) * body_to_satellite_axes() * rot_x(ctx.pitch) * rot_z(ctx.roll);
  gps_to_sat.translation = Vec3(pose.lateral, -pose.longitudinal, ctx.height);
  return gps_to_sat * ctx.cam_to_gps;
}

std::vector<Vec3> transform_points(std::span<const Vec3> points, const RigidTransform& T) {
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(T.apply(p));
  return out;
}

std::vector<Vec2> project_satellite(std::span<const Vec3> points_sat, const SatelliteGeoref& georef) {
  std::vector<Vec2> out;
  out.reserve(points_sat.size());
  const double inv = 1.0 / georef.gamma;
  for (const auto& p : points_sat) {
    out.emplace_back(p.x() * inv + georef.center_px, p.y() * inv + georef.center_px);
  }
  return out;
}

GroundProjection project_ground(std::span<const Vec3> points_cam, const CameraIntrinsics& K) {
  GroundProjection out;
  out.uv.reserve(points_cam.size());
  out.visible.reserve(points_cam.size());
  for (const auto& p : points_cam) {
    if (p.z() > kDepthMin) {
      const double u = K.fx * p.x() / p.z() + K.cx;
      const double v = K.fy * p.y() / p.z() + K.cy;
      out.uv.emplace_back(u, v);
      out.visible.push_back(u >= 0.0 && u < K.width && v >= 0.0 && v < K.height);
    } else {
      out.uv.emplace_back(0.0, 0.0);
      out.visible.push_back(0);
    }
  }
  return out;
}

Mat23 d_satproj_d_pose(const Vec3& point_cam, const Pose3& pose, const PoseContext& ctx,
                       const SatelliteGeoref& georef) {
  return d_satproj_d_pose_sat(pose_to_transform(pose, ctx).apply(point_cam), pose, georef);
}

Mat23 d_satproj_d_pose_sat(const Vec3& point_sat, const Pose3& pose, const SatelliteGeoref& georef) {
  // Yaw rotates about the vehicle origin.
  const Vec2 rel = point_sat.head<2>() - pose.position();
  const double inv = 1.0 / georef.gamma;
  Mat23 J;
  J.col(0) = pose.lateral_axis() * inv;
  J.col(1) = pose.heading() * inv;
  J.col(2) = Vec2(-rel.y(), rel.x()) * inv;
  return J;
}

PointSet sample_points(const PointSet& cloud, std::size_t n, std::uint64_t seed) {
  if (cloud.points.empty()) throw DomainError("sample_points: empty cloud");
  if (n < 1) throw DomainError("sample_points: n must be >= 1");
  std::mt19937_64 rng(seed);
  PointSet out;
  out.points.reserve(n);
  const std::size_t m = cloud.size();
  if (n > m) {
    std::uniform_int_distribution<std::size_t> pick(0, m - 1);
    for (std::size_t i = 0; i < n; ++i) out.points.push_back(cloud.points[pick(rng)]);
    return out;
  }
  // Partial Fisher-Yates.
  std::vector<std::size_t> idx(m);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, m - 1);
    std::swap(idx[i], idx[pick(rng)]);
    out.points.push_back(cloud.points[idx[i]]);
  }
  return out;
}

}  // namespace cvloc
