#ifndef ORIENT_GEO_JITTER_H_
#define ORIENT_GEO_JITTER_H_

// 3D pose jittering: new training targets at known small Euler offsets, each
// with the image warp that realizes it. Warps act on point sets; no pixels
// are resampled.

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "orient_geo/so3.h"

namespace orient_geo {

inline constexpr double kMinDepth = 1e-9;
inline constexpr double kDegree = kPi / 180.0;

struct Camera {
  Eigen::Matrix3d intrinsics = Eigen::Matrix3d::Identity();
  Rotation rotation;
  Eigen::Vector3d translation = Eigen::Vector3d(0, 0, 1);

  // Throws InvalidArgument unless intrinsics are upper triangular with
  // positive focal entries and K(2,2) = 1.
  void validate() const;
  // Principal point (K(0,2), K(1,2)).
  Eigen::Vector2d principal_point() const;
};

// Pinhole camera with square pixels.
Camera make_camera(double focal, double cx, double cy, double distance);

// Pinhole projection of K (R_cam X + t). Throws BehindCamera when a depth is
// <= kMinDepth.
std::vector<Eigen::Vector2d> project(const Camera& cam, const std::vector<Eigen::Vector3d>& points);

class Homography {
 public:
  // Scales to unit Frobenius norm with h(2,2) >= 0 (first nonzero entry
  // positive when h(2,2) == 0). Throws DegenerateConfiguration if singular.
  explicit Homography(const Eigen::Matrix3d& h);
  static Homography identity() { return Homography(Eigen::Matrix3d::Identity()); }

  const Eigen::Matrix3d& matrix() const { return h_; }
  Eigen::Vector2d apply(const Eigen::Vector2d& p) const;
  Homography operator*(const Homography& other) const { return Homography(h_ * other.h_); }
  Homography inverse() const;

 private:
  Eigen::Matrix3d h_;
};

// Hartley-normalized DLT. Needs >= 4 correspondences; throws
// DegenerateConfiguration when the system has more than a one-dimensional
// null space (relative singular value below 1e-10) or too few points.
Homography dlt_homography(const std::vector<Eigen::Vector2d>& src,
                          const std::vector<Eigen::Vector2d>& dst);

// Offsets in degrees.
struct JitterSpec {
  std::vector<double> d_az{-1, 0, 1};
  std::vector<double> d_el{-1, 0, 1};
  std::vector<double> d_ct{-4, -2, 0, 2, 4};
  bool flip = true;
  double near_fraction = 0.2;  // share of points closest to the camera used by DLT

  void validate() const;
};

struct PoseSample {
  std::vector<Eigen::Vector3d> points;  // object frame
  Camera camera;
  EulerZXZ pose;  // radians
};

struct JitterVariant {
  double d_az = 0, d_el = 0, d_ct = 0;  // degrees
  bool flipped = false;
  bool in_plane = false;  // warp is the exact in-plane rotation K Rz K^-1
  Homography warp = Homography::identity();
  EulerZXZ target;  // radians
};

// Image points of the sample under pose e: K (R_cam R(e) X + t).
std::vector<Eigen::Vector2d> project_pose(const PoseSample& sample, const EulerZXZ& e);

// Indices of the ceil(fraction * n) points with the smallest camera depth at
// the sample's pose (at least 4), ties by index.
std::vector<std::size_t> nearest_points(const PoseSample& sample, double fraction);

// Mirror about the vertical line through the principal point.
Homography flip_homography(const Camera& cam);
EulerZXZ flip_pose(const EulerZXZ& e);

// Target pose of one grid offset (degrees), mirrored when flipped.
EulerZXZ jitter_target(const EulerZXZ& pose, double d_az, double d_el, double d_ct, bool flipped);

// Grid order: d_az outer, d_el middle, d_ct inner; flipped copies follow all
// unflipped variants in the same order.
std::vector<JitterVariant> jitter_sample(const PoseSample& sample, const JitterSpec& spec);

// Points sampled uniformly on the surface of a box centered at the origin.
std::vector<Eigen::Vector3d> cuboid_surface(const Eigen::Vector3d& half_extents, int count,
                                            std::uint64_t seed);

// CSV with header sample_id,daz,del,dct,flipped,h00..h22,az,el,ct (degrees).
void write_manifest_header(std::ostream& os);
void write_manifest_rows(std::ostream& os, const std::string& sample_id,
                         const std::vector<JitterVariant>& variants);

}  // namespace orient_geo

#endif  // ORIENT_GEO_JITTER_H_
