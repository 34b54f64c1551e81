#include "orient_geo/jitter.h"

#include <gtest/gtest.h>

#include <Eigen/Geometry>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.h"
#include "orient_geo/errors.h"

namespace orient_geo {
namespace {

Eigen::Matrix3d scaled(const Eigen::Matrix3d& h) {
  Eigen::Matrix3d s = h / h.norm();
  return s(2, 2) < 0 ? Eigen::Matrix3d(-s) : s;
}

double max_reprojection(const Homography& h, const std::vector<Eigen::Vector2d>& src,
                        const std::vector<Eigen::Vector2d>& dst) {
  double worst = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    worst = std::max(worst, (h.apply(src[i]) - dst[i]).norm());
  }
  return worst;
}

TEST(ProjectTest, Examples) {
  Camera cam;
  cam.translation = Eigen::Vector3d::Zero();
  auto p = project(cam, {Eigen::Vector3d(0, 0, 1)});
  EXPECT_EQ(p[0], Eigen::Vector2d(0, 0));
  cam.intrinsics(0, 0) = cam.intrinsics(1, 1) = 2.0;
  p = project(cam, {Eigen::Vector3d(1, 0, 2)});
  EXPECT_EQ(p[0], Eigen::Vector2d(1, 0));
  EXPECT_THROW(project(cam, {Eigen::Vector3d(0, 0, 0)}), BehindCamera);
  EXPECT_THROW(project(cam, {Eigen::Vector3d(0, 0, -1)}), BehindCamera);
}

TEST(ProjectTest, UnprojectionAtKnownDepthRoundtrips) {
  std::mt19937_64 rng(1);
  Camera cam = make_camera(480.0, 120.0, 96.0, 4.0);
  cam.rotation = Rotation(testing::random_rotation_matrix(rng)) ;
  cam.translation = Eigen::Vector3d(0.1, -0.2, 6.0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 500; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
  const auto img = project(cam, pts);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Eigen::Vector3d x_cam = cam.rotation.matrix() * pts[i] + cam.translation;
    const Eigen::Vector3d back = x_cam.z() * (cam.intrinsics.inverse() * img[i].homogeneous());
    EXPECT_LT((back - x_cam).norm(), 1e-9);
  }
}

TEST(DltTest, IdentityAndEuclideanTransform) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 224.0);
  std::vector<Eigen::Vector2d> src;
  for (int i = 0; i < 30; ++i) src.emplace_back(u(rng), u(rng));
  EXPECT_LT((dlt_homography(src, src).matrix() - scaled(Eigen::Matrix3d::Identity())).norm(), 1e-9);

  // Rotation by 10 degrees about the image center (112, 112).
  const double a = 10.0 * kPi / 180.0;
  Eigen::Matrix3d t1, r, t2;
  t1 << 1, 0, 112, 0, 1, 112, 0, 0, 1;
  r << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  t2 << 1, 0, -112, 0, 1, -112, 0, 0, 1;
  const Eigen::Matrix3d truth = t1 * r * t2;
  std::vector<Eigen::Vector2d> dst;
  for (const auto& p : src) dst.push_back((truth * p.homogeneous()).hnormalized());
  const Homography h = dlt_homography(src, dst);
  EXPECT_LT((h.matrix() - scaled(truth)).norm(), 1e-6);
  EXPECT_LT(max_reprojection(h, src, dst), 1e-6);
}

TEST(DltTest, RecoversRandomProjectiveMaps) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::Matrix3d truth = Eigen::Matrix3d::Identity();
    for (int i = 0; i < 9; ++i) truth.data()[i] += 0.2 * u(rng);
    truth(2, 0) *= 1e-3;
    truth(2, 1) *= 1e-3;
    truth.col(2).head<2>() *= 50.0;
    std::vector<Eigen::Vector2d> src, dst;
    for (int i = 0; i < 4 + trial % 20; ++i) {
      src.emplace_back(100 + 100 * u(rng), 100 + 100 * u(rng));
      dst.push_back((truth * src.back().homogeneous()).hnormalized());
    }
    const Homography h = dlt_homography(src, dst);
    EXPECT_LT(max_reprojection(h, src, dst), 1e-6);
    EXPECT_NEAR(h.matrix().norm(), 1.0, 1e-12);
    EXPECT_GE(h.matrix()(2, 2), 0.0);
  }
}

TEST(DltTest, DegenerateInputs) {
  std::vector<Eigen::Vector2d> three{{0, 0}, {1, 0}, {0, 1}};
  EXPECT_THROW(dlt_homography(three, three), DegenerateConfiguration);
  std::vector<Eigen::Vector2d> line{{0, 0}, {1, 1}, {2, 2}, {3, 3}, {4, 4}};
  EXPECT_THROW(dlt_homography(line, line), DegenerateConfiguration);
}

PoseSample planar_face_sample(const EulerZXZ& pose) {
  // Front face of a box: the points nearest the camera, exactly coplanar.
  const Eigen::Vector3d half(1.0, 0.7, 0.4);
  PoseSample s;
  for (const auto& p : cuboid_surface(half, 4000, 5)) {
    if (p.z() == -half.z()) s.points.push_back(p);
  }
  s.camera = make_camera(500.0, 112.0, 112.0, 6.0);
  s.pose = pose;
  return s;
}

TEST(JitterTest, AzimuthHomographyOnProjectedCuboid) {
  const EulerZXZ pose{25 * kDegree, 15 * kDegree, -5 * kDegree};
  const PoseSample s = planar_face_sample(pose);
  ASSERT_GT(s.points.size(), 100u);
  const EulerZXZ shifted{pose.az + 2 * kDegree, pose.el, pose.ct};
  const auto src = project_pose(s, pose);
  const auto dst = project_pose(s, shifted);
  EXPECT_LT(max_reprojection(dlt_homography(src, dst), src, dst), 1e-3);

  // The whole box is not planar, but the nearest-point warp still tracks it.
  PoseSample box = s;
  box.points = cuboid_surface(Eigen::Vector3d(1.0, 0.7, 0.4), 3000, 6);
  JitterSpec spec;
  spec.d_az = {2};
  spec.d_el = {0};
  spec.d_ct = {0};
  spec.flip = false;
  const auto variants = jitter_sample(box, spec);
  ASSERT_EQ(variants.size(), 1u);
  PoseSample near = box;
  near.points.clear();
  for (std::size_t i : nearest_points(box, spec.near_fraction)) near.points.push_back(box.points[i]);
  EXPECT_LT(max_reprojection(variants[0].warp, project_pose(near, pose),
                             project_pose(near, variants[0].target)),
            0.5);
}

TEST(JitterTest, TiltOnlyIsAnInPlaneRotation) {
  const PoseSample s = planar_face_sample({10 * kDegree, 20 * kDegree, 5 * kDegree});
  JitterSpec spec;
  spec.d_az = {0};
  spec.d_el = {0};
  spec.d_ct = {4};
  spec.flip = false;
  const auto v = jitter_sample(s, spec);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_TRUE(v[0].in_plane);
  EXPECT_NEAR(v[0].target.ct, 9 * kDegree, 1e-15);
  EXPECT_NEAR(v[0].target.az, 10 * kDegree, 1e-15);
  // Image rotation by 4 degrees about the principal point.
  const double a = 4 * kDegree;
  Eigen::Matrix2d r;
  r << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
  const Eigen::Vector2d c(112.0, 112.0);
  for (const auto& p : project_pose(s, s.pose)) {
    EXPECT_LT((v[0].warp.apply(p) - (c + r * (p - c))).norm(), 1e-9);
  }
}

TEST(JitterTest, FlipRule) {
  const EulerZXZ f = flip_pose({30 * kDegree, 10 * kDegree, 5 * kDegree});
  EXPECT_NEAR(f.az, -30 * kDegree, 1e-15);
  EXPECT_NEAR(f.el, 10 * kDegree, 1e-15);
  EXPECT_NEAR(f.ct, -5 * kDegree, 1e-15);
  const Homography h = flip_homography(make_camera(500, 112, 80, 5));
  EXPECT_LT((h.apply({100, 7}) - Eigen::Vector2d(124, 7)).norm(), 1e-12);
}

TEST(JitterTest, DefaultGridSizeAndOrder) {
  const PoseSample s = planar_face_sample({30 * kDegree, 40 * kDegree, 0});
  const JitterSpec spec;
  const auto v = jitter_sample(s, spec);
  ASSERT_EQ(v.size(), 90u);
  EXPECT_EQ(v[0].d_az, -1);
  EXPECT_EQ(v[0].d_el, -1);
  EXPECT_EQ(v[0].d_ct, -4);
  EXPECT_EQ(v[1].d_ct, -2);
  EXPECT_EQ(v[5].d_el, 0);
  EXPECT_EQ(v[15].d_az, 0);
  for (std::size_t i = 0; i < 45; ++i) {
    EXPECT_FALSE(v[i].flipped);
    EXPECT_TRUE(v[i + 45].flipped);
    EXPECT_EQ(v[i + 45].d_ct, v[i].d_ct);
    EXPECT_NEAR(v[i + 45].target.az, wrap_angle(-v[i].target.az), 1e-15);
  }
  const auto again = jitter_sample(s, spec);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v[i].warp.matrix(), again[i].warp.matrix());
}

TEST(JitterTest, WarpsAreConsistentAndTargetsBounded) {
  const PoseSample s = planar_face_sample({-50 * kDegree, 35 * kDegree, 12 * kDegree});
  JitterSpec spec;
  spec.flip = false;
  const auto pts = project_pose(s, s.pose);
  const Rotation original = euler_to_rotation(s.pose);
  for (const auto& v : jitter_sample(s, spec)) {
    // Warp followed by the inverse of the true point motion is the identity.
    const auto moved = project_pose(s, v.target);
    EXPECT_LT(max_reprojection(v.warp, pts, moved), 1e-6);
    const double bound = (std::abs(v.d_az) + std::abs(v.d_el) + std::abs(v.d_ct)) * kDegree;
    EXPECT_LE(geodesic_distance(euler_to_rotation(v.target), original), bound + 1e-12);
  }
}

TEST(JitterTest, ManifestRows) {
  const PoseSample s = planar_face_sample({30 * kDegree, 40 * kDegree, 0});
  JitterSpec spec;
  spec.d_az = {-1, 1};
  spec.d_el = {0};
  spec.d_ct = {0, 2};
  std::ostringstream os;
  write_manifest_header(os);
  write_manifest_rows(os, "s7", jitter_sample(s, spec));
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "sample_id,daz,del,dct,flipped,h00,h01,h02,h10,h11,h12,h20,h21,h22,az,el,ct");
  int rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 16);
    EXPECT_EQ(line.rfind("s7,", 0), 0u);
  }
  EXPECT_EQ(rows, 8);
}

}  // namespace
}  // namespace orient_geo
