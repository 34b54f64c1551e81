#include "orient_geo/jitter.h"

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "orient_geo/errors.h"

namespace orient_geo {

void Camera::validate() const {
  const Eigen::Matrix3d& k = intrinsics;
  if (!k.allFinite() || k(1, 0) != 0.0 || k(2, 0) != 0.0 || k(2, 1) != 0.0) {
    throw InvalidArgument("camera intrinsics must be upper triangular");
  }
  if (!(k(0, 0) > 0.0) || !(k(1, 1) > 0.0) || k(2, 2) != 1.0) {
    throw InvalidArgument("camera intrinsics need positive focal lengths and K(2,2) = 1");
  }
  if (!translation.allFinite()) throw InvalidArgument("camera translation is not finite");
}

Eigen::Vector2d Camera::principal_point() const {
  return Eigen::Vector2d(intrinsics(0, 2), intrinsics(1, 2));
}

Camera make_camera(double focal, double cx, double cy, double distance) {
  Camera cam;
  cam.intrinsics << focal, 0, cx, 0, focal, cy, 0, 0, 1;
  cam.translation = Eigen::Vector3d(0, 0, distance);
  cam.validate();
  return cam;
}

namespace {

Eigen::Vector2d project_one(const Camera& cam, const Eigen::Vector3d& x_cam) {
  if (!(x_cam.z() > kMinDepth)) {
    std::ostringstream os;
    os << "point at depth " << x_cam.z() << " is behind the camera";
    throw BehindCamera(os.str());
  }
  const Eigen::Vector3d h = cam.intrinsics * x_cam;
  return h.head<2>() / h.z();
}

}  // namespace

std::vector<Eigen::Vector2d> project(const Camera& cam,
                                     const std::vector<Eigen::Vector3d>& points) {
  cam.validate();
  std::vector<Eigen::Vector2d> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(project_one(cam, cam.rotation * p + cam.translation));
  return out;
}

Homography::Homography(const Eigen::Matrix3d& h) {
  const double n = h.norm();
  if (!h.allFinite() || !(n > 0.0)) throw DegenerateConfiguration("homography is zero or non-finite");
  h_ = h / n;
  double sign_ref = h_(2, 2);
  for (Eigen::Index i = 0; sign_ref == 0.0 && i < 9; ++i) sign_ref = h_.data()[i];
  if (sign_ref < 0.0) h_ = -h_;
  if (std::abs(h_.determinant()) < 1e-14) throw DegenerateConfiguration("homography is singular");
}

Eigen::Vector2d Homography::apply(const Eigen::Vector2d& p) const {
  const Eigen::Vector3d q = h_ * p.homogeneous();
  if (std::abs(q.z()) < 1e-300) throw DegenerateConfiguration("point maps to infinity");
  return q.head<2>() / q.z();
}

Homography Homography::inverse() const { return Homography(h_.inverse()); }

namespace {

// Similarity moving the centroid to the origin with mean distance sqrt(2).
Eigen::Matrix3d normalizing_transform(const std::vector<Eigen::Vector2d>& pts) {
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  double mean = 0.0;
  for (const auto& p : pts) mean += (p - c).norm();
  mean /= static_cast<double>(pts.size());
  if (!(mean > 0.0)) throw DegenerateConfiguration("all points coincide");
  const double s = std::sqrt(2.0) / mean;
  Eigen::Matrix3d t;
  t << s, 0, -s * c.x(), 0, s, -s * c.y(), 0, 0, 1;
  return t;
}

}  // namespace

Homography dlt_homography(const std::vector<Eigen::Vector2d>& src,
                          const std::vector<Eigen::Vector2d>& dst) {
  if (src.size() != dst.size()) throw DimensionMismatch("point lists differ in length");
  if (src.size() < 4) throw DegenerateConfiguration("DLT needs at least 4 correspondences");
  const Eigen::Matrix3d ts = normalizing_transform(src);
  const Eigen::Matrix3d td = normalizing_transform(dst);
  const auto n = static_cast<Eigen::Index>(src.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * n, 9);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector3d p = ts * src[static_cast<std::size_t>(i)].homogeneous();
    const Eigen::Vector3d q = td * dst[static_cast<std::size_t>(i)].homogeneous();
    const double x = p.x(), y = p.y(), u = q.x(), v = q.y();
    a.row(2 * i) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
    a.row(2 * i + 1) << x, y, 1, 0, 0, 0, -u * x, -u * y, -u;
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  if (!(sv[7] > 1e-10 * sv[0])) {
    throw DegenerateConfiguration("correspondences do not determine a unique homography");
  }
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8];
  return Homography(td.inverse() * hn * ts);
}

void JitterSpec::validate() const {
  for (const auto* list : {&d_az, &d_el, &d_ct}) {
    if (list->empty()) throw InvalidArgument("jitter offset lists must be nonempty");
    for (double v : *list) {
      if (!std::isfinite(v)) throw InvalidArgument("jitter offsets must be finite");
    }
  }
  if (!(near_fraction > 0.0 && near_fraction <= 1.0)) {
    throw InvalidArgument("near_fraction must lie in (0, 1]");
  }
}

std::vector<Eigen::Vector2d> project_pose(const PoseSample& sample, const EulerZXZ& e) {
  const Rotation r = euler_to_rotation(e);
  std::vector<Eigen::Vector3d> posed;
  posed.reserve(sample.points.size());
  for (const auto& p : sample.points) posed.push_back(r * p);
  return project(sample.camera, posed);
}

std::vector<std::size_t> nearest_points(const PoseSample& sample, double fraction) {
  const Rotation r = sample.camera.rotation * euler_to_rotation(sample.pose);
  std::vector<double> depth;
  depth.reserve(sample.points.size());
  for (const auto& p : sample.points) depth.push_back((r * p + sample.camera.translation).z());
  std::vector<std::size_t> idx(depth.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return depth[a] < depth[b]; });
  const auto want = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(depth.size()) - 1e-12));
  idx.resize(std::min(depth.size(), std::max<std::size_t>(want, 4)));
  std::sort(idx.begin(), idx.end());
  return idx;
}

Homography flip_homography(const Camera& cam) {
  Eigen::Matrix3d h;
  h << -1, 0, 2 * cam.principal_point().x(), 0, 1, 0, 0, 0, 1;
  return Homography(h);
}

EulerZXZ flip_pose(const EulerZXZ& e) { return EulerZXZ{wrap_angle(-e.az), e.el, wrap_angle(-e.ct)}; }

namespace {

bool camera_on_axis(const Camera& cam) {
  const double tz = std::abs(cam.translation.z());
  return (cam.rotation.matrix() - Eigen::Matrix3d::Identity()).norm() < 1e-12 &&
         std::abs(cam.translation.x()) <= 1e-12 * tz && std::abs(cam.translation.y()) <= 1e-12 * tz;
}

}  // namespace

EulerZXZ jitter_target(const EulerZXZ& pose, double d_az, double d_el, double d_ct, bool flipped) {
  const EulerZXZ t{wrap_angle(pose.az + d_az * kDegree), pose.el + d_el * kDegree,
                   wrap_angle(pose.ct + d_ct * kDegree)};
  return flipped ? flip_pose(t) : t;
}

std::vector<JitterVariant> jitter_sample(const PoseSample& sample, const JitterSpec& spec) {
  spec.validate();
  sample.camera.validate();
  const bool on_axis = camera_on_axis(sample.camera);
  const std::vector<std::size_t> near = nearest_points(sample, spec.near_fraction);
  PoseSample subset = sample;
  subset.points.clear();
  for (std::size_t i : near) subset.points.push_back(sample.points[i]);
  const std::vector<Eigen::Vector2d> src = project_pose(subset, sample.pose);
  const Eigen::Matrix3d& k = sample.camera.intrinsics;

  std::vector<JitterVariant> out;
  for (double daz : spec.d_az) {
    for (double del : spec.d_el) {
      for (double dct : spec.d_ct) {
        JitterVariant v;
        v.d_az = daz;
        v.d_el = del;
        v.d_ct = dct;
        v.target = jitter_target(sample.pose, daz, del, dct, false);
        if (daz == 0.0 && del == 0.0 && dct == 0.0) {
          v.in_plane = true;
        } else if (daz == 0.0 && del == 0.0 && on_axis) {
          v.in_plane = true;
          v.warp = Homography(k * Rotation::about_z(dct * kDegree).matrix() * k.inverse());
        } else {
          v.warp = dlt_homography(src, project_pose(subset, v.target));
        }
        out.push_back(std::move(v));
      }
    }
  }
  if (spec.flip) {
    const Homography f = flip_homography(sample.camera);
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) {
      JitterVariant v = out[i];
      v.flipped = true;
      v.warp = f * v.warp;
      v.target = flip_pose(v.target);
      out.push_back(std::move(v));
    }
  }
  return out;
}

std::vector<Eigen::Vector3d> cuboid_surface(const Eigen::Vector3d& half_extents, int count,
                                            std::uint64_t seed) {
  if (count <= 0 || !(half_extents.minCoeff() > 0.0)) {
    throw InvalidArgument("cuboid needs positive extents and point count");
  }
  const Eigen::Vector3d& e = half_extents;
  // Face pairs normal to x, y, z weighted by area.
  const double areas[3] = {e.y() * e.z(), e.x() * e.z(), e.x() * e.y()};
  std::mt19937_64 rng(seed);
  std::discrete_distribution<int> face({areas[0], areas[1], areas[2]});
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::bernoulli_distribution side(0.5);
  std::vector<Eigen::Vector3d> pts;
  pts.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const int axis = face(rng);
    Eigen::Vector3d p(u(rng) * e.x(), u(rng) * e.y(), u(rng) * e.z());
    p[axis] = side(rng) ? e[axis] : -e[axis];
    pts.push_back(p);
  }
  return pts;
}

void write_manifest_header(std::ostream& os) {
  os << "sample_id,daz,del,dct,flipped";
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) os << ",h" << r << c;
  }
  os << ",az,el,ct\n";
}

void write_manifest_rows(std::ostream& os, const std::string& sample_id,
                         const std::vector<JitterVariant>& variants) {
  const auto old = os.precision(std::numeric_limits<double>::max_digits10);
  for (const auto& v : variants) {
    os << sample_id << ',' << v.d_az << ',' << v.d_el << ',' << v.d_ct << ','
       << (v.flipped ? 1 : 0);
    const Eigen::Matrix3d& h = v.warp.matrix();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) os << ',' << h(r, c);
    }
    os << ',' << v.target.az / kDegree << ',' << v.target.el / kDegree << ','
       << v.target.ct / kDegree << '\n';
  }
  os.precision(old);
}

}  // namespace orient_geo
