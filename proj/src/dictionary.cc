#include "orient_geo/dictionary.h"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include "orient_geo/errors.h"

namespace orient_geo {

int pose_dim(Representation rep) {
  return rep == Representation::kAxisAngle ? 3 : 4;
}

std::string to_string(Representation rep) {
  return rep == Representation::kAxisAngle ? "axis_angle" : "quaternion";
}

Representation parse_representation(std::string_view name) {
  if (name == "axis_angle") return Representation::kAxisAngle;
  if (name == "quaternion") return Representation::kQuaternion;
  throw InvalidArgument("unknown representation '" + std::string(name) + "'");
}

void validate_pose(Representation rep, const Eigen::VectorXd& y) {
  if (y.size() != pose_dim(rep)) {
    std::ostringstream os;
    os << to_string(rep) << " pose must have " << pose_dim(rep)
       << " components, got " << y.size();
    throw DimensionMismatch(os.str());
  }
  if (rep == Representation::kAxisAngle) {
    AxisAngle checked{Eigen::Vector3d(y)};
    (void)checked;
    return;
  }
  const Eigen::Vector4d q(y);
  const UnitQuaternion canonical(q);
  if (canonical.coeffs() != q) {
    throw InvalidQuaternion("quaternion pose is not on the canonical hemisphere");
  }
}

Eigen::VectorXd rotation_to_pose(Representation rep, const Rotation& r) {
  if (rep == Representation::kAxisAngle) return log_map(r).vector();
  return to_quaternion(r).coeffs();
}

Rotation pose_to_rotation(Representation rep, const Eigen::VectorXd& y) {
  if (y.size() != pose_dim(rep)) {
    throw DimensionMismatch("pose vector has the wrong dimension");
  }
  if (rep == Representation::kAxisAngle) {
    return Rotation(rodrigues(Eigen::Vector3d(y)));
  }
  return to_rotation(UnitQuaternion::normalized(Eigen::Vector4d(y)));
}

PoseDictionary::PoseDictionary(Representation rep, std::vector<Eigen::VectorXd> keys)
    : rep_(rep), keys_(std::move(keys)) {
  if (keys_.empty()) throw DegenerateDictionary("dictionary needs at least one key");
  rotations_.reserve(keys_.size());
  for (const auto& z : keys_) {
    validate_pose(rep_, z);
    rotations_.push_back(pose_to_rotation(rep_, z));
  }
  for (std::size_t i = 0; i < keys_.size(); ++i) {
    for (std::size_t j = i + 1; j < keys_.size(); ++j) {
      if ((keys_[i] - keys_[j]).squaredNorm() == 0.0) {
        std::ostringstream os;
        os << "dictionary keys " << i << " and " << j << " coincide";
        throw DegenerateDictionary(os.str());
      }
    }
  }
}

void PoseDictionary::write(std::ostream& os) const {
  os << "repr=" << to_string(rep_) << " K=" << keys_.size() << '\n';
  const auto old_precision = os.precision(std::numeric_limits<double>::max_digits10);
  for (const auto& z : keys_) {
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      if (i > 0) os << ' ';
      os << z[i];
    }
    os << '\n';
  }
  os.precision(old_precision);
}

PoseDictionary PoseDictionary::read(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) throw ParseError("missing dictionary header");
  std::istringstream hs(header);
  std::string repr_field, k_field;
  hs >> repr_field >> k_field;
  if (repr_field.rfind("repr=", 0) != 0 || k_field.rfind("K=", 0) != 0) {
    throw ParseError("malformed dictionary header: '" + header + "'");
  }
  const Representation rep = parse_representation(repr_field.substr(5));
  std::size_t k = 0;
  try {
    k = std::stoul(k_field.substr(2));
  } catch (const std::exception&) {
    throw ParseError("malformed K in dictionary header: '" + header + "'");
  }
  std::vector<Eigen::VectorXd> keys;
  keys.reserve(k);
  std::string line;
  while (keys.size() < k && std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    Eigen::VectorXd z(pose_dim(rep));
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      if (!(ls >> z[i])) throw ParseError("malformed dictionary key: '" + line + "'");
    }
    keys.push_back(std::move(z));
  }
  if (keys.size() != k) throw ParseError("dictionary file ended early");
  return PoseDictionary(rep, std::move(keys));
}

namespace {

// Nearest column of centers, lowest index on ties.
std::size_t nearest(const Eigen::MatrixXd& centers, const Eigen::VectorXd& x,
                    double* dist2 = nullptr) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < centers.cols(); ++k) {
    const double d = (centers.col(k) - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::size_t>(k);
    }
  }
  if (dist2) *dist2 = best_d;
  return best;
}

// Maps a raw centroid back onto the representation's valid set.
Eigen::VectorXd project_centroid(Representation rep, const Eigen::VectorXd& c,
                                 const Eigen::VectorXd& fallback) {
  if (rep == Representation::kAxisAngle) {
    return project_axis_angle(Eigen::Vector3d(c)).vector();
  }
  const double n = c.norm();
  if (!(n > 0.0)) return fallback;
  return canonicalize_quaternion(Eigen::Vector4d(c / n));
}

}  // namespace

KMeansFit fit_kmeans_traced(std::span<const Eigen::VectorXd> targets,
                            Representation rep, std::size_t k, std::uint64_t seed,
                            const KMeansOptions& options) {
  if (k == 0) throw InvalidArgument("K must be positive");
  if (targets.size() < k) {
    std::ostringstream os;
    os << "need at least K=" << k << " targets, got " << targets.size();
    throw InsufficientData(os.str());
  }
  const int dim = pose_dim(rep);
  const std::size_t n = targets.size();
  for (const auto& y : targets) validate_pose(rep, y);

  std::mt19937_64 rng(seed);
  Eigen::MatrixXd centers(dim, static_cast<Eigen::Index>(k));

  // k-means++ seeding.
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  centers.col(0) = targets[pick(rng)];
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) {
    d2[i] = (targets[i] - centers.col(0)).squaredNorm();
  }
  for (std::size_t j = 1; j < k; ++j) {
    double total = 0.0;
    for (double v : d2) total += v;
    if (!(total > 0.0)) {
      throw DegenerateDictionary("fewer than K distinct targets");
    }
    std::uniform_real_distribution<double> u(0.0, total);
    const double r = u(rng);
    std::size_t chosen = n;
    double cumulative = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      cumulative += d2[i];
      chosen = i;
      if (cumulative > r) break;
    }
    centers.col(static_cast<Eigen::Index>(j)) = targets[chosen];
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (targets[i] - targets[chosen]).squaredNorm());
    }
  }

  std::vector<std::size_t> assignment(n);
  std::vector<double> objective;
  int iterations = 0;
  while (iterations < options.max_iterations) {
    std::vector<std::size_t> counts(k, 0);
    std::vector<double> cost(n);
    for (std::size_t i = 0; i < n; ++i) {
      assignment[i] = nearest(centers, targets[i], &cost[i]);
      ++counts[assignment[i]];
    }
    // Empty clusters take the point farthest from its own centroid.
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] > 0) continue;
      std::size_t far = n;
      double far_cost = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[assignment[i]] > 1 && cost[i] > far_cost) {
          far_cost = cost[i];
          far = i;
        }
      }
      if (far == n) throw DegenerateDictionary("cannot repair empty cluster");
      --counts[assignment[far]];
      assignment[far] = j;
      cost[far] = 0.0;
      ++counts[j];
    }

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(dim, static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < n; ++i) {
      sums.col(static_cast<Eigen::Index>(assignment[i])) += targets[i];
    }
    double shift = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const auto col = static_cast<Eigen::Index>(j);
      const Eigen::VectorXd mean = sums.col(col) / static_cast<double>(counts[j]);
      const Eigen::VectorXd updated = project_centroid(rep, mean, centers.col(col));
      shift = std::max(shift, (updated - centers.col(col)).norm());
      centers.col(col) = updated;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      total += (targets[i] - centers.col(static_cast<Eigen::Index>(assignment[i])))
                   .squaredNorm();
    }
    objective.push_back(total);
    ++iterations;
    if (shift < options.tolerance) break;
  }

  std::vector<Eigen::VectorXd> keys;
  keys.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    keys.emplace_back(centers.col(static_cast<Eigen::Index>(j)));
  }
  return KMeansFit{PoseDictionary(rep, std::move(keys)), std::move(objective),
                   iterations};
}

PoseDictionary fit_kmeans(std::span<const Eigen::VectorXd> targets,
                          Representation rep, std::size_t k, std::uint64_t seed,
                          const KMeansOptions& options) {
  return fit_kmeans_traced(targets, rep, k, seed, options).dictionary;
}

std::size_t hard_label(const Eigen::VectorXd& y, const PoseDictionary& dict) {
  if (y.size() != dict.dim()) {
    throw DimensionMismatch("pose dimension does not match the dictionary");
  }
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < dict.size(); ++k) {
    const double d = (y - dict.key(k)).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

SoftAssignment soft_assign(const Eigen::VectorXd& y, const PoseDictionary& dict,
                           double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw InvalidArgument("gamma must be positive and finite");
  }
  if (y.size() != dict.dim()) {
    throw DimensionMismatch("pose dimension does not match the dictionary");
  }
  const auto k = static_cast<Eigen::Index>(dict.size());
  Eigen::VectorXd logits(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    logits[i] = -gamma * (y - dict.key(static_cast<std::size_t>(i))).squaredNorm();
  }
  const Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return SoftAssignment{e / e.sum(), gamma};
}

double default_gamma(const PoseDictionary& dict) {
  if (dict.size() < 2) throw InvalidArgument("default gamma needs K >= 2");
  double min_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < dict.size(); ++i) {
    for (std::size_t j = i + 1; j < dict.size(); ++j) {
      min_d2 = std::min(min_d2, (dict.key(i) - dict.key(j)).squaredNorm());
    }
  }
  if (!(min_d2 > 0.0)) throw DegenerateDictionary("coincident dictionary keys");
  return 0.5 / min_d2;
}

}  // namespace orient_geo
