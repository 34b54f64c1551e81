#ifndef ORIENT_GEO_BIN_DELTA_H_
#define ORIENT_GEO_BIN_DELTA_H_

// Combining a key pose from the dictionary with a regressed residual.

#include <Eigen/Core>

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "orient_geo/dictionary.h"
#include "orient_geo/so3.h"

namespace orient_geo {

enum class CombinationRule { kAdditive, kQuaternionRenorm, kRiemannian };

std::string to_string(CombinationRule rule);
CombinationRule parse_combination_rule(std::string_view name);

// additive and riemannian pair with axis-angle, quaternion_renorm with
// quaternions. Throws FamilyMismatch otherwise.
void check_rule(CombinationRule rule, Representation rep);
// The rule used by default for a representation.
CombinationRule default_rule(Representation rep);

// Threshold below which z + delta is treated as zero in quaternion_renorm.
inline constexpr double kZeroSumNorm = 1e-12;

// Pose vector g(z, delta): z + delta, (z + delta)/|z + delta|, or
// log(exp(z) exp(delta)). The additive result is returned as is and may have
// norm >= pi; project_axis_angle gives the nearest valid AxisAngle.
Eigen::VectorXd compose(CombinationRule rule, const Eigen::VectorXd& key,
                        const Eigen::VectorXd& delta);

// Rotation of g(z, delta). Additive sums go through Rodrigues' formula on the
// raw vector, which is the rotation the geodesic loss is evaluated on.
Rotation compose_rotation(CombinationRule rule, const Eigen::VectorXd& key,
                          const Eigen::VectorXd& delta);
// Same, with the key rotation already known (riemannian uses R_key exp(delta)).
Rotation compose_rotation(CombinationRule rule, const Eigen::VectorXd& key,
                          const Rotation& key_rotation, const Eigen::VectorXd& delta);

struct BinDeltaPrediction {
  Eigen::VectorXd probs;                // K bin probabilities
  std::vector<Eigen::VectorXd> deltas;  // one shared delta, or K per-bin deltas

  bool per_bin() const { return deltas.size() > 1; }
  const Eigen::VectorXd& delta_for(std::size_t label) const;
};

// argmax with the lowest index on ties.
std::size_t argmax_label(const Eigen::VectorXd& scores);

// Rotation of compose(rule, z_l, delta_l) for l = argmax probs.
Rotation predict(const BinDeltaPrediction& bd, const PoseDictionary& dict,
                 CombinationRule rule);

}  // namespace orient_geo

#endif  // ORIENT_GEO_BIN_DELTA_H_
