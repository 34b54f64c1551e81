#include "orient_geo/bin_delta.h"

#include <cmath>
#include <sstream>

#include "orient_geo/errors.h"

namespace orient_geo {

std::string to_string(CombinationRule rule) {
  switch (rule) {
    case CombinationRule::kAdditive: return "additive";
    case CombinationRule::kQuaternionRenorm: return "quaternion_renorm";
    case CombinationRule::kRiemannian: return "riemannian";
  }
  return "additive";
}

CombinationRule parse_combination_rule(std::string_view name) {
  for (CombinationRule r : {CombinationRule::kAdditive, CombinationRule::kQuaternionRenorm,
                            CombinationRule::kRiemannian}) {
    if (name == to_string(r)) return r;
  }
  throw InvalidArgument("unknown combination rule '" + std::string(name) + "'");
}

void check_rule(CombinationRule rule, Representation rep) {
  const bool ok = rule == CombinationRule::kQuaternionRenorm
                      ? rep == Representation::kQuaternion
                      : rep == Representation::kAxisAngle;
  if (!ok) {
    throw FamilyMismatch("combination rule " + to_string(rule) + " does not apply to " +
                         to_string(rep) + " poses");
  }
}

CombinationRule default_rule(Representation rep) {
  return rep == Representation::kQuaternion ? CombinationRule::kQuaternionRenorm
                                            : CombinationRule::kAdditive;
}

namespace {

void check_dims(CombinationRule rule, const Eigen::VectorXd& key, const Eigen::VectorXd& delta) {
  const int dim = rule == CombinationRule::kQuaternionRenorm ? 4 : 3;
  if (key.size() != dim || delta.size() != dim) {
    std::ostringstream os;
    os << to_string(rule) << " expects " << dim << "-vectors, got key " << key.size()
       << " and delta " << delta.size();
    throw DimensionMismatch(os.str());
  }
}

Eigen::Vector4d renormalized_sum(const Eigen::VectorXd& key, const Eigen::VectorXd& delta) {
  const Eigen::Vector4d s = key + delta;
  const double n = s.norm();
  if (n < kZeroSumNorm) throw ZeroSum("key + delta vanishes; cannot renormalize");
  return s / n;
}

}  // namespace

Eigen::VectorXd compose(CombinationRule rule, const Eigen::VectorXd& key,
                        const Eigen::VectorXd& delta) {
  check_dims(rule, key, delta);
  switch (rule) {
    case CombinationRule::kAdditive:
      return key + delta;
    case CombinationRule::kQuaternionRenorm:
      return renormalized_sum(key, delta);
    case CombinationRule::kRiemannian:
      return log_map(compose_rotation(rule, key, delta)).vector();
  }
  return key + delta;
}

Rotation compose_rotation(CombinationRule rule, const Eigen::VectorXd& key,
                          const Eigen::VectorXd& delta) {
  check_dims(rule, key, delta);
  if (rule == CombinationRule::kRiemannian) {
    return compose_rotation(rule, key, Rotation(rodrigues(Eigen::Vector3d(key))), delta);
  }
  return compose_rotation(rule, key, Rotation(), delta);
}

Rotation compose_rotation(CombinationRule rule, const Eigen::VectorXd& key,
                          const Rotation& key_rotation, const Eigen::VectorXd& delta) {
  check_dims(rule, key, delta);
  switch (rule) {
    case CombinationRule::kAdditive:
      return Rotation(rodrigues(Eigen::Vector3d(key + delta)));
    case CombinationRule::kQuaternionRenorm:
      return to_rotation(UnitQuaternion::normalized(renormalized_sum(key, delta)));
    case CombinationRule::kRiemannian:
      return key_rotation * Rotation(rodrigues(Eigen::Vector3d(delta)));
  }
  return Rotation();
}

const Eigen::VectorXd& BinDeltaPrediction::delta_for(std::size_t label) const {
  if (deltas.empty()) throw InvalidArgument("prediction has no delta");
  if (!per_bin()) return deltas.front();
  if (label >= deltas.size()) throw DimensionMismatch("label exceeds the number of deltas");
  return deltas[label];
}

std::size_t argmax_label(const Eigen::VectorXd& scores) {
  if (scores.size() == 0) throw InvalidArgument("argmax of an empty vector");
  std::size_t best = 0;
  for (Eigen::Index k = 1; k < scores.size(); ++k) {
    if (scores[k] > scores[static_cast<Eigen::Index>(best)]) best = static_cast<std::size_t>(k);
  }
  return best;
}

Rotation predict(const BinDeltaPrediction& bd, const PoseDictionary& dict, CombinationRule rule) {
  if (static_cast<std::size_t>(bd.probs.size()) != dict.size()) {
    throw DimensionMismatch("bin probabilities do not match the dictionary size");
  }
  if (bd.per_bin() && bd.deltas.size() != dict.size()) {
    throw DimensionMismatch("per-bin prediction needs one delta per key");
  }
  check_rule(rule, dict.representation());
  const std::size_t l = argmax_label(bd.probs);
  return compose_rotation(rule, dict.key(l), dict.key_rotation(l), bd.delta_for(l));
}

}  // namespace orient_geo
