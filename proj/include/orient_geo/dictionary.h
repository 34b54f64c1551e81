#ifndef ORIENT_GEO_DICTIONARY_H_
#define ORIENT_GEO_DICTIONARY_H_

// Key-pose dictionaries: Euclidean K-means over pose vectors, hard labels and
// Gaussian-kernel soft assignments.

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "orient_geo/so3.h"

namespace orient_geo {

enum class Representation { kAxisAngle, kQuaternion };

int pose_dim(Representation rep);
std::string to_string(Representation rep);
Representation parse_representation(std::string_view name);

// Throws DimensionMismatch / InvalidAxisAngle / InvalidQuaternion when y is
// not a valid pose vector for rep.
void validate_pose(Representation rep, const Eigen::VectorXd& y);
// Pose vector of a rotation (log map or canonical quaternion).
Eigen::VectorXd rotation_to_pose(Representation rep, const Rotation& r);
// Rotation of a pose vector. Axis-angle vectors of any norm go through
// Rodrigues' formula; quaternions are normalized first.
Rotation pose_to_rotation(Representation rep, const Eigen::VectorXd& y);

class PoseDictionary {
 public:
  // Validates every key and pairwise distinctness. Throws
  // DegenerateDictionary on duplicate keys.
  PoseDictionary(Representation rep, std::vector<Eigen::VectorXd> keys);

  Representation representation() const { return rep_; }
  std::size_t size() const { return keys_.size(); }
  int dim() const { return pose_dim(rep_); }
  const Eigen::VectorXd& key(std::size_t k) const { return keys_[k]; }
  const std::vector<Eigen::VectorXd>& keys() const { return keys_; }
  const Rotation& key_rotation(std::size_t k) const { return rotations_[k]; }

  // Text format: header "repr=<axis_angle|quaternion> K=<int>", then one key
  // per line as space-separated decimals.
  void write(std::ostream& os) const;
  static PoseDictionary read(std::istream& is);

 private:
  Representation rep_;
  std::vector<Eigen::VectorXd> keys_;
  std::vector<Rotation> rotations_;
};

struct KMeansOptions {
  int max_iterations = 300;
  double tolerance = 1e-10;  // on the largest centroid shift
};

struct KMeansFit {
  PoseDictionary dictionary;
  // Sum of squared distances to the assigned centroid after each iteration.
  std::vector<double> objective;
  int iterations = 0;
};

// Lloyd's algorithm with k-means++ seeding. Throws InsufficientData when
// targets.size() < k.
KMeansFit fit_kmeans_traced(std::span<const Eigen::VectorXd> targets,
                            Representation rep, std::size_t k,
                            std::uint64_t seed, const KMeansOptions& options = {});
PoseDictionary fit_kmeans(std::span<const Eigen::VectorXd> targets,
                          Representation rep, std::size_t k, std::uint64_t seed,
                          const KMeansOptions& options = {});

// argmin_k ||y - z_k||, lowest index on ties. Labels are 0-based.
std::size_t hard_label(const Eigen::VectorXd& y, const PoseDictionary& dict);

struct SoftAssignment {
  Eigen::VectorXd p;
  double gamma = 0.0;
};

// p_k = softmax_k(-gamma ||y - z_k||^2).
SoftAssignment soft_assign(const Eigen::VectorXd& y, const PoseDictionary& dict,
                           double gamma);

// 0.5 / min_{i != j} ||z_i - z_j||^2.
double default_gamma(const PoseDictionary& dict);

}  // namespace orient_geo

#endif  // ORIENT_GEO_DICTIONARY_H_
