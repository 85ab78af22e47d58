#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include <Eigen/Geometry>

#include "cvloc/errors.hpp"
#include "cvloc/geometry.hpp"
#include "support.hpp"

using namespace cvloc;
using doctest::Approx;

namespace {

PoseContext random_context(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-1, 1);
  PoseContext ctx;
  ctx.roll = deg2rad(2 * U(rng));
  ctx.pitch = deg2rad(2 * U(rng));
  ctx.height = 1.6;
  ctx.cam_to_gps.rotation = (Eigen::AngleAxisd(0.05 * U(rng), Vec3::UnitY()) *
                             Eigen::AngleAxisd(0.05 * U(rng), Vec3::UnitX()))
                                .toRotationMatrix();
  ctx.cam_to_gps.translation = {0.3 * U(rng), 0.2 * U(rng), 0.5 * U(rng)};
  return ctx;
}

Vec2 sat_uv(const Vec3& p, const Pose3& pose, const PoseContext& ctx, const SatelliteGeoref& g) {
  const Vec3 s = pose_to_transform(pose, ctx).apply(p);
  return project_satellite(std::span<const Vec3>(&s, 1), g)[0];
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("meters_per_pixel hand evaluation") {
  // 156543.03392 / (2^18 * 2) with cos(0) = 1.
  CHECK(meters_per_pixel(0.0, 18, 2) == Approx(156543.03392 / 524288.0).epsilon(1e-15));
  CHECK(std::abs(meters_per_pixel(0.0, 18, 2) - 0.2985820) < 1e-6);
  const double kitti = meters_per_pixel(49.0, 18, 2);
  CHECK(kitti >= 0.195);
  CHECK(kitti <= 0.197);
  CHECK(meters_per_pixel(90.0 - 1e-9, 18, 2) > 0.0);
  CHECK(meters_per_pixel(90.0 - 1e-9, 18, 2) < 1e-9);
}

TEST_CASE("meters_per_pixel domain errors") {
  CHECK_THROWS_AS(meters_per_pixel(90.0, 18, 2), DomainError);
  CHECK_THROWS_AS(meters_per_pixel(-91.0, 18, 2), DomainError);
  CHECK_THROWS_AS(meters_per_pixel(std::nan(""), 18, 2), DomainError);
  CHECK_THROWS_AS(meters_per_pixel(10.0, -1, 2), DomainError);
  CHECK_THROWS_AS(meters_per_pixel(10.0, 18, 0), DomainError);
}

TEST_CASE("meters_per_pixel strictly decreasing in zoom and |latitude|") {
  for (int z = 0; z < 22; ++z) CHECK(meters_per_pixel(30.0, z + 1, 2) < meters_per_pixel(30.0, z, 2));
  for (double lat = 0; lat < 89; lat += 0.5) {
    CHECK(meters_per_pixel(lat + 0.5, 18, 2) < meters_per_pixel(lat, 18, 2));
    CHECK(meters_per_pixel(-lat - 0.5, 18, 2) < meters_per_pixel(-lat, 18, 2));
  }
}

TEST_CASE("georef construction and invariants") {
  const auto g = SatelliteGeoref::from_tile(640, 49.0, 18, 2);
  CHECK(g.gamma == meters_per_pixel(49.0, 18, 2));
  const auto h = SatelliteGeoref::from_gamma(256, 0.2);
  CHECK(std::abs(meters_per_pixel(h.latitude_deg, h.zoom, h.scale) - 0.2) / 0.2 < 1e-9);
  const auto l2 = h.at_level(2);
  CHECK(l2.gamma == Approx(0.8));
  CHECK(l2.center_px == Approx(64));
  SatelliteGeoref bad = g;
  bad.gamma = -1;
  CHECK_THROWS_AS(bad.validate(), ContractError);
  bad = g;
  bad.gamma = 0.3;  // no longer the tile formula value
  CHECK_THROWS_AS(bad.validate(), ContractError);
  CHECK_THROWS(SatelliteGeoref::from_gamma(256, 1.0));
}

TEST_CASE("intrinsics invariants") {
  CameraIntrinsics K{700, 700, 600, 180, 1241, 376};
  CHECK_NOTHROW(K.validate());
  auto bad = K;
  bad.fx = 0;
  CHECK_THROWS_AS(bad.validate(), ContractError);
  bad = K;
  bad.cx = 1241;
  CHECK_THROWS_AS(bad.validate(), ContractError);
  bad = K;
  bad.cy = -1;
  CHECK_THROWS_AS(bad.validate(), ContractError);
}

TEST_CASE("project_satellite examples") {
  SatelliteGeoref g;
  g.center_px = 640;
  g.gamma = 0.2;
  const std::vector<Vec3> pts = {{0, 0, -5}, {2.0, -1.0, 0}};
  const auto uv = project_satellite(pts, g);
  CHECK(uv[0].x() == Approx(640));
  CHECK(uv[0].y() == Approx(640));
  CHECK(uv[1].x() == Approx(650));
  CHECK(uv[1].y() == Approx(635));
  SatelliteGeoref g2 = g;
  g2.gamma = 0.4;
  const auto uv2 = project_satellite(pts, g2);
  CHECK((uv2[1] - Vec2(640, 640)).isApprox(0.5 * (uv[1] - Vec2(640, 640)), 1e-12));
}

TEST_CASE("project_ground examples") {
  CameraIntrinsics K{700, 700, 600, 180, 1241, 376};
  const std::vector<Vec3> pts = {{0, 0, 10}, {1.0, 0.5, 10}, {0, 0, -1}, {0, 0, 0.05}, {100, 0, 10}};
  const auto gp = project_ground(pts, K);
  CHECK(gp.uv[0].x() == Approx(600));
  CHECK(gp.uv[0].y() == Approx(180));
  CHECK(gp.visible[0]);
  CHECK(gp.uv[1].x() == Approx(670));
  CHECK(gp.uv[1].y() == Approx(215));
  CHECK(gp.visible[1]);
  CHECK_FALSE(gp.visible[2]);
  CHECK_FALSE(gp.visible[3]);  // inside the depth floor
  CHECK_FALSE(gp.visible[4]);  // outside the image
}

TEST_CASE("identity pose gives the fixed axis permutation") {
  PoseContext ctx;
  ctx.height = 1.65;
  const RigidTransform T = pose_to_transform(Pose3{}, ctx);
  Mat3 perm;
  perm << 1, 0, 0, 0, 0, -1, 0, 1, 0;
  CHECK((T.rotation - perm).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((T.translation - Vec3(0, 0, 1.65)).norm() < 1e-15);
  CHECK_NOTHROW(T.validate());
}

TEST_CASE("yaw periodicity") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(-1, 1);
  for (int i = 0; i < 50; ++i) {
    const PoseContext ctx = random_context(rng);
    const Pose3 p{10 * U(rng), 10 * U(rng), 3 * U(rng)};
    Pose3 q = p;
    q.yaw += 2 * std::numbers::pi;  // not re-wrapped on purpose
    const auto a = pose_to_transform(p, ctx), b = pose_to_transform(q, ctx);
    CHECK((a.rotation - b.rotation).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((a.translation - b.translation).norm() < 1e-9);
  }
}

TEST_CASE("pose_to_transform against a hand-coded rotation oracle") {
  // Camera axes: x right, y down, z forward. Satellite: x east, y south, z down.
  // Heading at yaw t is (sin t, -cos t); the right-hand axis is (cos t, sin t).
  PoseContext ctx;
  ctx.height = 1.65;
  {
    const Pose3 pose = Pose3::from_degrees(0, 0, 90);
    const Vec3 s = pose_to_transform(pose, ctx).apply(Vec3(0, 0, 10));
    CHECK(s.x() == Approx(10));
    CHECK(std::abs(s.y()) < 1e-12);
  }
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(-1, 1);
  for (int i = 0; i < 200; ++i) {
    const double t = std::numbers::pi * U(rng);
    const double e = 30 * U(rng), n = 30 * U(rng);
    const Vec3 p{5 * U(rng), 2 * U(rng), 20 * U(rng)};
    const Vec3 s = pose_to_transform(Pose3{e, n, t}, ctx).apply(p);
    const double ox = e + p.x() * std::cos(t) + p.z() * std::sin(t);
    const double oy = -n + p.x() * std::sin(t) - p.z() * std::cos(t);
    const double oz = ctx.height + p.y();
    CHECK(std::abs(s.x() - ox) < 1e-9);
    CHECK(std::abs(s.y() - oy) < 1e-9);
    CHECK(std::abs(s.z() - oz) < 1e-9);
  }
}

TEST_CASE("transform_points basics") {
  const std::vector<Vec3> pts = {{1, 2, 3}, {-4, 0.5, 9}, {0, 0, 0}};
  const auto same = transform_points(pts, RigidTransform::identity());
  for (std::size_t i = 0; i < pts.size(); ++i) CHECK(same[i] == pts[i]);
  RigidTransform shift;
  shift.translation = {1, 2, 3};
  const auto moved = transform_points(pts, shift);
  for (std::size_t i = 0; i < pts.size(); ++i) CHECK((moved[i] - pts[i] - Vec3(1, 2, 3)).norm() < 1e-15);

  std::mt19937_64 rng(2);
  for (int k = 0; k < 20; ++k) {
    const RigidTransform T = pose_to_transform(Pose3{3.0 * k, -2.0 * k, 0.3 * k}, random_context(rng));
    const auto there = transform_points(pts, T);
    const auto back = transform_points(there, T.inverse());
    for (std::size_t i = 0; i < pts.size(); ++i) CHECK((back[i] - pts[i]).norm() < 1e-9);
    // Rigid motions preserve pairwise distances.
    for (std::size_t i = 0; i < pts.size(); ++i) {
      for (std::size_t j = i + 1; j < pts.size(); ++j) {
        const double d0 = (pts[i] - pts[j]).norm(), d1 = (there[i] - there[j]).norm();
        CHECK(std::abs(d1 - d0) <= 1e-9 * d0);
      }
    }
  }
}

TEST_CASE("rigid transform validation") {
  RigidTransform T;
  T.rotation = Mat3::Identity() * 1.01;
  CHECK_THROWS_AS(T.validate(), ContractError);
  T.rotation = Mat3::Identity();
  T.rotation(2, 2) = -1;  // reflection
  CHECK_THROWS_AS(T.validate(), ContractError);
}

TEST_CASE("pose invariants") {
  const Pose3 p = Pose3::from_degrees(1, 2, 190);
  CHECK(p.yaw > -std::numbers::pi);
  CHECK(p.yaw <= std::numbers::pi);
  CHECK(p.yaw_deg() == Approx(-170));
  CHECK(wrap_angle(std::numbers::pi) == std::numbers::pi);
  CHECK(wrap_angle(-std::numbers::pi) == std::numbers::pi);
  Pose3 bad{std::nan(""), 0, 0};
  CHECK_THROWS_AS(bad.validate(), ContractError);
  bad = Pose3{0, 0, 4.0};
  CHECK_THROWS_AS(bad.validate(), ContractError);
}

TEST_CASE("translating the pose shifts every satellite pixel by the offset over gamma") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(-1, 1);
  const auto g = SatelliteGeoref::from_gamma(256, 0.2);
  for (int i = 0; i < 50; ++i) {
    const PoseContext ctx = random_context(rng);
    const Pose3 pose{10 * U(rng), 10 * U(rng), 3 * U(rng)};
    const double de = 7 * U(rng), ds = 7 * U(rng);
    const Pose3 moved = pose.translated(de, ds);
    const Vec3 p{5 * U(rng), U(rng), 15 + 10 * U(rng)};
    const Vec2 d = sat_uv(p, moved, ctx, g) - sat_uv(p, pose, ctx, g);
    CHECK(std::abs(d.x() - de / 0.2) < 1e-9);
    CHECK(std::abs(d.y() - ds / 0.2) < 1e-9);
  }
}

TEST_CASE("d_satproj_d_pose: translation block has magnitude 1/gamma") {
  PoseContext ctx;
  ctx.height = 1.6;
  const auto g = SatelliteGeoref::from_gamma(256, 0.2);
  const Mat23 J = d_satproj_d_pose(Vec3(1, 0, 8), Pose3::from_degrees(0, 0, 0), ctx, g);
  // A 1 m move to the right (east at yaw 0) moves u by 5 px.
  CHECK(J(0, 0) == Approx(5.0).epsilon(1e-12));
  CHECK(std::abs(J(1, 0)) < 1e-12);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> U(-1, 1);
  for (int i = 0; i < 100; ++i) {
    const Mat23 Ji = d_satproj_d_pose(Vec3(U(rng), U(rng), 10), Pose3{U(rng), U(rng), 3 * U(rng)}, ctx, g);
    CHECK(std::abs(Ji.col(0).norm() - 5.0) < 1e-12);
    CHECK(std::abs(Ji.col(1).norm() - 5.0) < 1e-12);
  }
}

TEST_CASE("d_satproj_d_pose: yaw column vanishes at the rotation center") {
  PoseContext ctx;
  ctx.height = 1.6;
  const auto g = SatelliteGeoref::from_gamma(256, 0.2);
  const Pose3 pose{3, -2, 0.7};
  // The camera origin sits at the vehicle origin when cam_to_gps is identity.
  const Mat23 J = d_satproj_d_pose(Vec3(0, 0.4, 0), pose, ctx, g);
  CHECK(J.col(2).norm() < 1e-12);
}

TEST_CASE("d_satproj_d_pose matches central differences") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> U(-1, 1);
  const double h = 1e-4;
  for (int i = 0; i < 100; ++i) {
    const PoseContext ctx = random_context(rng);
    const auto g = SatelliteGeoref::from_tile(256 + 100 * U(rng), 40 + 20 * U(rng), 18, 2);
    const Pose3 pose{20 * U(rng), 20 * U(rng), 3 * U(rng)};
    const Vec3 p{8 * U(rng), 2 * U(rng), 20 + 15 * U(rng)};
    const Mat23 J = d_satproj_d_pose(p, pose, ctx, g);
    for (int k = 0; k < 3; ++k) {
      Vec3 d = Vec3::Zero();
      d[k] = h;
      const Vec2 fd = (sat_uv(p, pose.retract(d), ctx, g) - sat_uv(p, pose.retract(-d), ctx, g)) / (2 * h);
      CHECK((J.col(k) - fd).norm() <= 1e-4 * fd.norm());
    }
  }
}

TEST_CASE("sample_points: permutation, determinism, replacement, errors") {
  PointSet cloud;
  for (int i = 0; i < 50; ++i) cloud.points.push_back(Vec3(i, 0, 1));
  const PointSet all = sample_points(cloud, 50, 3);
  std::set<double> seen;
  for (const auto& p : all.points) seen.insert(p.x());
  CHECK(seen.size() == 50);
  const PointSet a = sample_points(cloud, 20, 7), b = sample_points(cloud, 20, 7);
  CHECK(a.points == b.points);
  const PointSet big = sample_points(cloud, 500, 1);
  CHECK(big.size() == 500);
  CHECK_THROWS_AS(sample_points(PointSet{}, 5, 0), DomainError);
}

TEST_CASE("sample_points: 5000 of 120k, distinct and uniform by chi-square") {
  const std::size_t M = 120000, n = 5000;
  PointSet cloud;
  cloud.points.reserve(M);
  for (std::size_t i = 0; i < M; ++i) cloud.points.push_back(Vec3(double(i), 0, 1));
  const int bins = 120;
  std::vector<double> counts(bins, 0.0);
  for (int r = 0; r < 1000; ++r) {
    const PointSet s = sample_points(cloud, n, cvloc::trial_seed(99, r));
    std::vector<std::size_t> idx;
    for (const auto& p : s.points) idx.push_back(static_cast<std::size_t>(p.x()));
    std::sort(idx.begin(), idx.end());
    REQUIRE(std::adjacent_find(idx.begin(), idx.end()) == idx.end());
    for (auto i : idx) counts[i * bins / M] += 1;
  }
  const double expected = 1000.0 * n / bins;
  double chi2 = 0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(cvloc::testing::chi_square_p(chi2, bins - 1) > 0.01);
}

}  // TEST_SUITE
