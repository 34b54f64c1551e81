#ifndef ORIENT_GEO_TESTS_EVAL_ORACLES_H_
#define ORIENT_GEO_TESTS_EVAL_ORACLES_H_

// Brute-force metric oracles and a random detection-set generator. The
// oracles recompute everything from definitions: selection-sort matching,
// precision recounted at every rank, linear-scan azimuth bins.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "orient_geo/eval.h"
#include "orient_geo/jitter.h"
#include "orient_geo/so3.h"

namespace orient_geo::testing {

inline double oracle_snap(double deg) { return std::round(deg * 1e9) / 1e9; }

// Angle of the relative rotation through Eigen's matrix-to-quaternion path.
inline double oracle_angle(const Rotation& a, const Rotation& b) {
  const Eigen::Quaterniond q(Eigen::Matrix3d(a.matrix().transpose() * b.matrix()));
  return oracle_snap(2.0 * std::atan2(q.vec().norm(), std::abs(q.w())) * 180.0 / kPi);
}

inline double oracle_median(std::vector<double> v) {
  // Selection by repeated minimum extraction.
  std::vector<double> sorted;
  while (!v.empty()) {
    auto it = std::min_element(v.begin(), v.end());
    sorted.push_back(*it);
    v.erase(it);
  }
  const std::size_t n = sorted.size();
  if (n % 2 == 1) return sorted[(n - 1) / 2];
  return (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0;
}

inline double oracle_iou(const Box& a, const Box& b) {
  const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = ix * iy;
  const double uni = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
  return inter / uni;
}

// Returns, for each detection, the matched ground truth or -1.
inline std::vector<long> oracle_match(const std::vector<Detection>& dets,
                                      const std::vector<GroundTruth>& gts) {
  std::vector<bool> used(dets.size(), false), taken(gts.size(), false);
  std::vector<long> match(dets.size(), -1);
  for (std::size_t step = 0; step < dets.size(); ++step) {
    long pick = -1;
    for (std::size_t i = 0; i < dets.size(); ++i) {
      if (!used[i] && (pick < 0 || dets[i].score > dets[static_cast<std::size_t>(pick)].score)) {
        pick = static_cast<long>(i);
      }
    }
    const auto& d = dets[static_cast<std::size_t>(pick)];
    used[static_cast<std::size_t>(pick)] = true;
    long best = -1;
    double best_iou = 0.5;
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (taken[j] || gts[j].category != d.category || gts[j].image_id != d.image_id) continue;
      const double o = oracle_iou(d.box, gts[j].box);
      if (o > best_iou) {
        best_iou = o;
        best = static_cast<long>(j);
      }
    }
    if (best >= 0) {
      taken[static_cast<std::size_t>(best)] = true;
      match[static_cast<std::size_t>(pick)] = best;
    }
  }
  return match;
}

// AP from scratch: at every rank k the precision of the top k is recounted;
// each recall step is weighted by the best precision at that rank or later.
template <typename PoseOk>
double oracle_ap(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                 const std::string& category, PoseOk pose_ok) {
  const std::vector<long> match = oracle_match(dets, gts);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (dets[i].category == category) idx.push_back(i);
  }
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  const auto n_gt = static_cast<double>(
      std::count_if(gts.begin(), gts.end(), [&](const GroundTruth& g) { return g.category == category; }));
  if (n_gt == 0 || idx.empty()) return 0.0;
  auto hit = [&](std::size_t r) {
    const std::size_t i = idx[r];
    return match[i] >= 0 && pose_ok(dets[i], gts[static_cast<std::size_t>(match[i])]);
  };
  std::vector<double> prec, rec;
  for (std::size_t k = 1; k <= idx.size(); ++k) {
    double tp = 0;
    for (std::size_t r = 0; r < k; ++r) tp += hit(r) ? 1.0 : 0.0;
    prec.push_back(tp / static_cast<double>(k));
    rec.push_back(tp / n_gt);
  }
  double ap = 0.0;
  for (std::size_t k = 0; k < prec.size(); ++k) {
    const double step = rec[k] - (k == 0 ? 0.0 : rec[k - 1]);
    if (step == 0.0) continue;
    double best = 0.0;
    for (std::size_t j = k; j < prec.size(); ++j) best = std::max(best, prec[j]);
    ap += step * best;
  }
  return ap;
}

// Azimuth from the third row of Rz(ct) Rx(el) Rz(az): (sin el sin az, sin el cos az, cos el).
inline bool oracle_azimuth(const Rotation& r, double* az_deg) {
  const Eigen::Matrix3d& m = r.matrix();
  if (std::hypot(m(2, 0), m(2, 1)) < kGimbalLockSin) return false;
  double az = oracle_snap(std::atan2(m(2, 0), m(2, 1)) * 180.0 / kPi);
  if (az < 0) az = oracle_snap(az + 360.0);
  if (az >= 360.0) az -= 360.0;
  *az_deg = az;
  return true;
}

inline int oracle_bin(double az, int bins) {
  for (int i = 0; i < bins; ++i) {
    if (az * bins >= 360.0 * i && az * bins < 360.0 * (i + 1)) return i;
  }
  return bins - 1;
}

inline bool oracle_same_bin(const Rotation& truth, const Rotation& pred, int bins) {
  double a = 0, b = 0;
  if (!oracle_azimuth(truth, &a) || !oracle_azimuth(pred, &b)) return false;
  return oracle_bin(a, bins) == oracle_bin(b, bins);
}

struct DetectionSet {
  std::vector<GroundTruth> gts;
  std::vector<Detection> dets;
};

// Random detection set over two categories and a few images. Scores come
// from a small grid (ties), and a share of predictions sit exactly 30 degrees
// from the truth or exactly on an azimuth bin edge.
inline DetectionSet random_detection_set(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> count(0, 3);
  const std::vector<std::string> cats{"aeroplane", "bicycle"};
  const double edges[] = {0.0, 45.0, 90.0, 135.0, 180.0, 225.0, 270.0, 315.0};
  DetectionSet s;
  auto random_box = [&]() {
    const double x = 200 * u(rng), y = 200 * u(rng);
    return Box{x, y, x + 20 + 80 * u(rng), y + 20 + 80 * u(rng)};
  };
  auto pose_near = [&](const Rotation& truth, int kind) -> Rotation {
    switch (kind) {
      case 0:  // exactly 30 degrees off
        return truth * Rotation::about_z(30.0 * kDegree);
      case 1:  // just under 30 degrees
        return truth * Rotation::about_x((30.0 - 1e-6) * kDegree);
      case 2: {  // small random error
        const Eigen::Vector3d axis = Eigen::Vector3d(u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5).normalized();
        return truth * exp_map(AxisAngle(axis * 60.0 * u(rng) * kDegree));
      }
      case 3: {  // azimuth exactly on a bin edge
        const EulerZXZ e{edges[static_cast<int>(u(rng) * 8) % 8] * kDegree, (10 + 60 * u(rng)) * kDegree,
                         (u(rng) - 0.5) * kDegree};
        return euler_to_rotation(e);
      }
      default:
        return Rotation(euler_to_rotation({2 * kPi * u(rng), kPi * u(rng), 2 * kPi * u(rng)}));
    }
  };
  const int images = 1 + count(rng);
  for (const auto& c : cats) {
    for (int im = 0; im < images; ++im) {
      const std::string id = std::to_string(im);
      const int n_gt = count(rng);
      for (int g = 0; g < n_gt; ++g) {
        Rotation truth;
        if (u(rng) < 0.3) {
          // Ground truth azimuth on a bin edge as well.
          truth = euler_to_rotation({edges[static_cast<int>(u(rng) * 8) % 8] * kDegree,
                                     (20 + 50 * u(rng)) * kDegree, (u(rng) - 0.5) * kDegree});
        } else {
          truth = pose_near(Rotation(), 4);
        }
        const Box box = random_box();
        s.gts.push_back(GroundTruth{c, id, box, truth});
        const int n_det = static_cast<int>(u(rng) * 3);
        for (int d = 0; d < n_det; ++d) {
          const double jitter = 25 * u(rng);
          Box b = box;
          b.x1 += jitter * (u(rng) - 0.5);
          b.x2 += jitter * (u(rng) - 0.5);
          b.y1 += jitter * (u(rng) - 0.5);
          b.y2 += jitter * (u(rng) - 0.5);
          const double score = std::round(10 * u(rng)) / 10;
          s.dets.push_back(Detection{c, id, b, score, pose_near(truth, static_cast<int>(u(rng) * 5))});
        }
      }
      const int false_pos = count(rng) / 2;
      for (int f = 0; f < false_pos; ++f) {
        s.dets.push_back(Detection{c, id, random_box(), std::round(10 * u(rng)) / 10, pose_near(Rotation(), 4)});
      }
    }
  }
  std::shuffle(s.dets.begin(), s.dets.end(), rng);
  return s;
}

}  // namespace orient_geo::testing

#endif  // ORIENT_GEO_TESTS_EVAL_ORACLES_H_
