#include "orient_geo/losses.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "orient_geo/errors.h"

namespace orient_geo {

namespace {

double acos_slope(double u) {
  const double uc = std::min(std::abs(u), 1.0 - kAcosClamp);
  return std::min(1.0 / std::sqrt(1.0 - uc * uc), kMaxAcosSlope);
}

double clamp_unit(double u) { return std::clamp(u, -1.0, 1.0); }

void note_distance(LossValue* lv, double d) {
  lv->margin = std::min(lv->margin, std::min(d, kPi - d));
  lv->non_smooth = lv->margin < kNonSmoothMargin;
}

}  // namespace

GeodesicTerm geodesic_term(Representation rep, const Eigen::VectorXd& y,
                           const Rotation& target) {
  GeodesicTerm t;
  if (rep == Representation::kAxisAngle) {
    if (y.size() != 3) throw DimensionMismatch("axis-angle pose must have 3 components");
    const Eigen::Vector3d y3 = y;
    const Eigen::Matrix3d m = rodrigues(y3).transpose() * target.matrix();
    const double u = 0.5 * (m.trace() - 1.0);
    t.value = std::acos(clamp_unit(u));
    // d tr(R(y)^T R*) / dy = Jr(y)^T * 2 vee(M), and vee() here already halves.
    t.grad = -acos_slope(u) * (right_jacobian(y3).transpose() * vee(m));
    return t;
  }
  if (y.size() != 4) throw DimensionMismatch("quaternion pose must have 4 components");
  const double n = y.norm();
  if (n < kZeroSumNorm) throw ZeroSum("cannot normalize a zero quaternion");
  const Eigen::Vector4d q = y / n;
  const Eigen::Vector4d qt = to_quaternion(target).coeffs();
  const double s = q.dot(qt);
  const double u = std::abs(s);
  t.value = 2.0 * std::acos(std::min(1.0, u));
  const Eigen::Vector4d dq = -2.0 * acos_slope(u) * (s < 0.0 ? -1.0 : 1.0) * qt;
  t.grad = (dq - q * q.dot(dq)) / n;
  return t;
}

LossValue geodesic_loss(Representation rep, const Eigen::VectorXd& y_pred,
                        const Eigen::VectorXd& y_true) {
  validate_pose(rep, y_true);
  const GeodesicTerm g = geodesic_term(rep, y_pred, pose_to_rotation(rep, y_true));
  LossValue lv;
  lv.value = lv.regression = g.value;
  lv.d_pose = g.grad;
  note_distance(&lv, g.value);
  return lv;
}

LossValue euclidean_loss(const Eigen::VectorXd& y_pred, const Eigen::VectorXd& y_true) {
  if (y_pred.size() != y_true.size()) throw DimensionMismatch("pose sizes differ");
  LossValue lv;
  const Eigen::VectorXd diff = y_pred - y_true;
  lv.value = lv.regression = diff.squaredNorm();
  lv.d_pose = 2.0 * diff;
  return lv;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const Eigen::ArrayXd e = (logits.array() - logits.maxCoeff()).exp();
  return (e / e.sum()).matrix();
}

namespace {

double log_sum_exp(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  return m + std::log((logits.array() - m).exp().sum());
}

}  // namespace

LossValue cross_entropy(const Eigen::VectorXd& logits, std::size_t label) {
  if (label >= static_cast<std::size_t>(logits.size())) {
    throw DimensionMismatch("label out of range for the logits");
  }
  const auto l = static_cast<Eigen::Index>(label);
  LossValue lv;
  lv.value = lv.classification = log_sum_exp(logits) - logits[l];
  lv.d_logits = softmax(logits);
  lv.d_logits[l] -= 1.0;
  return lv;
}

LossValue kl_divergence(const Eigen::VectorXd& p_true, const Eigen::VectorXd& logits) {
  if (p_true.size() != logits.size()) throw DimensionMismatch("distribution sizes differ");
  if (std::abs(p_true.sum() - 1.0) > 1e-9 || p_true.minCoeff() < 0.0) {
    throw InvalidArgument("target is not a probability vector");
  }
  const double lse = log_sum_exp(logits);
  LossValue lv;
  double v = 0.0;
  for (Eigen::Index k = 0; k < p_true.size(); ++k) {
    if (p_true[k] > 0.0) v += p_true[k] * (std::log(p_true[k]) - (logits[k] - lse));
  }
  lv.value = lv.classification = std::max(v, 0.0);
  lv.d_logits = softmax(logits) - p_true;
  return lv;
}

const std::vector<Family>& all_families() {
  static const std::vector<Family> families = {
      Family::kRG,  Family::kRE,   Family::kC,   Family::kMG,   Family::kMGp, Family::kMR,
      Family::kMRp, Family::kMP,   Family::kMPp, Family::kMX,   Family::kMXp, Family::kMXP,
      Family::kMXPp, Family::kMS,  Family::kMSp, Family::kMLE,  Family::kMLEp};
  return families;
}

std::string to_string(Family f) {
  switch (f) {
    case Family::kRG: return "R_G";
    case Family::kRE: return "R_E";
    case Family::kC: return "C";
    case Family::kMG: return "M_G";
    case Family::kMGp: return "M_G+";
    case Family::kMR: return "M_R";
    case Family::kMRp: return "M_R+";
    case Family::kMP: return "M_P";
    case Family::kMPp: return "M_P+";
    case Family::kMX: return "M_X";
    case Family::kMXp: return "M_X+";
    case Family::kMXP: return "M_XP";
    case Family::kMXPp: return "M_XP+";
    case Family::kMS: return "M_S";
    case Family::kMSp: return "M_S+";
    case Family::kMLE: return "M_LE";
    case Family::kMLEp: return "M_LE+";
  }
  return "?";
}

Family parse_family(std::string_view name) {
  std::string s(name);
  if (!s.empty() && s.back() == 'p' && s.size() > 3) s.back() = '+';
  for (Family f : all_families()) {
    if (s == to_string(f)) return f;
  }
  throw InvalidArgument("unknown objective family '" + std::string(name) + "'");
}

bool uses_bins(Family f) { return f != Family::kRG && f != Family::kRE; }
bool uses_delta(Family f) { return uses_bins(f) && f != Family::kC; }

bool per_bin(Family f) {
  switch (f) {
    case Family::kMGp: case Family::kMRp: case Family::kMPp: case Family::kMXp:
    case Family::kMXPp: case Family::kMSp: case Family::kMLEp:
      return true;
    default:
      return false;
  }
}

bool probabilistic(Family f) {
  return f == Family::kMP || f == Family::kMPp || f == Family::kMXP || f == Family::kMXPp;
}

bool relaxed(Family f) {
  return f == Family::kMX || f == Family::kMXp || f == Family::kMXP || f == Family::kMXPp;
}

namespace {

bool riemannian_family(Family f) {
  return f == Family::kMR || f == Family::kMRp || f == Family::kMLE || f == Family::kMLEp;
}

}  // namespace

std::optional<Family> simple_init_family(Family f) {
  switch (f) {
    case Family::kMG: case Family::kMR: return Family::kMS;
    case Family::kMGp: case Family::kMRp: return Family::kMSp;
    default: return std::nullopt;
  }
}

ObjectiveSpec default_spec(Family f, Representation rep) {
  ObjectiveSpec s;
  s.family = f;
  s.representation = rep;
  s.rule = riemannian_family(f) ? CombinationRule::kRiemannian : default_rule(rep);
  // Per-bin models use alpha = 10 except where the reported settings use 1.
  const bool weight_one = f == Family::kMXPp || f == Family::kMSp || f == Family::kMLEp;
  s.alpha = per_bin(f) && !weight_one ? 10.0 : 1.0;
  return s;
}

void validate(const ObjectiveSpec& spec) {
  if (!(spec.alpha > 0.0) || !std::isfinite(spec.alpha)) {
    throw InvalidArgument("alpha must be positive and finite");
  }
  check_rule(spec.rule, spec.representation);
  if (riemannian_family(spec.family)) {
    if (spec.representation != Representation::kAxisAngle ||
        spec.rule != CombinationRule::kRiemannian) {
      throw FamilyMismatch(to_string(spec.family) +
                           " requires axis-angle poses and the riemannian rule");
    }
  } else if (spec.rule != default_rule(spec.representation)) {
    throw FamilyMismatch(to_string(spec.family) + " does not use the " +
                         to_string(spec.rule) + " rule");
  }
}

double resolve_gamma(const ObjectiveSpec& spec, const PoseDictionary& dict) {
  if (spec.gamma > 0.0) return spec.gamma;
  if (spec.family == Family::kMXP || spec.family == Family::kMXPp) return 10.0;
  return default_gamma(dict);
}

Eigen::Vector3d residual_log(const Rotation& r) {
  const Eigen::Matrix3d& m = r.matrix();
  if (m.trace() > -1.0 + kNearPiTrace) return log_map(r).vector();
  const double c = std::clamp(0.5 * (m.trace() - 1.0), -1.0, 1.0);
  const Eigen::Matrix3d b =
      (0.5 * (m + m.transpose()) - c * Eigen::Matrix3d::Identity()) / (1.0 - c);
  Eigen::Index i;
  b.diagonal().maxCoeff(&i);
  Eigen::Vector3d axis = b.col(i) / std::sqrt(std::max(b(i, i), 1e-300));
  axis.normalize();
  if (axis.dot(vee(m)) < 0.0) axis = -axis;
  return kNearPiResidualAngle * axis;
}

Target make_target(const ObjectiveSpec& spec, const PoseDictionary& dict,
                   const Eigen::VectorXd& y_true) {
  validate(spec);
  validate_pose(spec.representation, y_true);
  Target t;
  t.pose = y_true;
  t.rotation = pose_to_rotation(spec.representation, y_true);
  if (!uses_bins(spec.family)) return t;
  if (dict.representation() != spec.representation) {
    throw FamilyMismatch("dictionary representation differs from the objective's");
  }
  t.label = hard_label(y_true, dict);
  t.simple_delta = y_true - dict.key(t.label);
  if (relaxed(spec.family)) t.soft = soft_assign(y_true, dict, resolve_gamma(spec, dict)).p;
  if (spec.family == Family::kMLE || spec.family == Family::kMLEp) {
    t.log_residuals.reserve(dict.size());
    for (std::size_t k = 0; k < dict.size(); ++k) {
      t.log_residuals.push_back(residual_log(dict.key_rotation(k).inverse() * t.rotation));
    }
  }
  return t;
}

namespace {

void check_output(const ObjectiveSpec& spec, const PoseDictionary& dict,
                  const NetworkOutput& out) {
  const int dim = pose_dim(spec.representation);
  if (!uses_bins(spec.family)) {
    if (out.pose.size() != dim) throw DimensionMismatch("pose output has the wrong size");
    return;
  }
  if (static_cast<std::size_t>(out.logits.size()) != dict.size()) {
    throw DimensionMismatch("logits do not match the dictionary size");
  }
  if (!uses_delta(spec.family)) return;
  const std::size_t expected = per_bin(spec.family) ? dict.size() : 1;
  if (out.deltas.size() != expected) {
    std::ostringstream os;
    os << to_string(spec.family) << " expects " << expected << " delta(s), got "
       << out.deltas.size();
    throw DimensionMismatch(os.str());
  }
  for (const auto& d : out.deltas) {
    if (d.size() != dim) throw DimensionMismatch("delta output has the wrong size");
  }
}

// Geodesic loss of the pose composed from key k and delta, with its gradient
// with respect to delta.
GeodesicTerm composed_term(const ObjectiveSpec& spec, const PoseDictionary& dict,
                           std::size_t k, const Eigen::VectorXd& delta,
                           const Rotation& target) {
  switch (spec.rule) {
    case CombinationRule::kAdditive:
      return geodesic_term(Representation::kAxisAngle, dict.key(k) + delta, target);
    case CombinationRule::kQuaternionRenorm: {
      const Eigen::VectorXd sum = dict.key(k) + delta;
      if (sum.norm() < kZeroSumNorm) throw ZeroSum("key + delta vanishes; cannot renormalize");
      return geodesic_term(Representation::kQuaternion, sum, target);
    }
    case CombinationRule::kRiemannian:
      return geodesic_term(Representation::kAxisAngle, delta,
                           dict.key_rotation(k).inverse() * target);
  }
  throw InvalidArgument("unknown combination rule");
}

}  // namespace

LossValue objective(const ObjectiveSpec& spec, const PoseDictionary& dict,
                    const NetworkOutput& out, const Target& target) {
  validate(spec);
  check_output(spec, dict, out);
  const Family f = spec.family;
  const double alpha = spec.alpha;

  if (f == Family::kRG) return geodesic_loss(spec.representation, out.pose, target.pose);
  if (f == Family::kRE) return euclidean_loss(out.pose, target.pose);
  if (f == Family::kC) return cross_entropy(out.logits, target.label);

  LossValue lv = relaxed(f) ? kl_divergence(target.soft, out.logits)
                            : cross_entropy(out.logits, target.label);
  lv.d_deltas.assign(out.deltas.size(), Eigen::VectorXd::Zero(out.deltas.front().size()));
  const std::size_t l = argmax_label(out.logits);
  const std::size_t l_slot = per_bin(f) ? l : 0;

  switch (f) {
    case Family::kMG: case Family::kMGp: case Family::kMX: case Family::kMXp:
    case Family::kMR: case Family::kMRp: {
      const GeodesicTerm t = composed_term(spec, dict, l, out.deltas[l_slot], target.rotation);
      lv.regression = alpha * t.value;
      lv.d_deltas[l_slot] = alpha * t.grad;
      note_distance(&lv, t.value);
      break;
    }
    case Family::kMP: case Family::kMPp: case Family::kMXP: case Family::kMXPp: {
      const Eigen::VectorXd p = softmax(out.logits);
      Eigen::VectorXd losses(p.size());
      for (std::size_t k = 0; k < dict.size(); ++k) {
        const std::size_t slot = per_bin(f) ? k : 0;
        const GeodesicTerm t = composed_term(spec, dict, k, out.deltas[slot], target.rotation);
        const auto ki = static_cast<Eigen::Index>(k);
        losses[ki] = t.value;
        lv.d_deltas[slot] += alpha * p[ki] * t.grad;
        note_distance(&lv, t.value);
      }
      const double expected = p.dot(losses);
      lv.regression = alpha * expected;
      lv.d_logits += alpha * p.cwiseProduct(losses - Eigen::VectorXd::Constant(p.size(), expected));
      break;
    }
    case Family::kMS: {
      const Eigen::VectorXd diff = out.deltas[0] - target.simple_delta;
      lv.regression = alpha * diff.squaredNorm();
      lv.d_deltas[0] = 2.0 * alpha * diff;
      break;
    }
    case Family::kMSp: {
      // Weight sits on the classification term for the per-bin variant.
      lv.classification *= alpha;
      lv.d_logits *= alpha;
      const Eigen::VectorXd diff = out.deltas[l_slot] - target.simple_delta;
      lv.regression = diff.squaredNorm();
      lv.d_deltas[l_slot] = 2.0 * diff;
      break;
    }
    case Family::kMLE: case Family::kMLEp: {
      if (target.log_residuals.size() != dict.size()) {
        throw InvalidArgument("target lacks log residuals; build it with make_target");
      }
      const Eigen::VectorXd diff = out.deltas[l_slot] - Eigen::VectorXd(target.log_residuals[l]);
      lv.regression = alpha * diff.squaredNorm();
      lv.d_deltas[l_slot] = 2.0 * alpha * diff;
      break;
    }
    default:
      break;
  }
  lv.value = lv.regression + lv.classification;
  return lv;
}

Rotation predict_rotation(const ObjectiveSpec& spec, const PoseDictionary& dict,
                          const NetworkOutput& out) {
  check_output(spec, dict, out);
  if (!uses_bins(spec.family)) return pose_to_rotation(spec.representation, out.pose);
  const std::size_t l = argmax_label(out.logits);
  if (!uses_delta(spec.family)) return dict.key_rotation(l);
  const Eigen::VectorXd& delta = out.deltas[per_bin(spec.family) ? l : 0];
  return compose_rotation(spec.rule, dict.key(l), dict.key_rotation(l), delta);
}

std::vector<Representation> supported_representations(Family f) {
  if (riemannian_family(f)) return {Representation::kAxisAngle};
  return {Representation::kAxisAngle, Representation::kQuaternion};
}

namespace {

Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Vector4d q(n(rng), n(rng), n(rng), n(rng));
  return to_rotation(UnitQuaternion::normalized(q)).matrix();
}

Eigen::VectorXd random_pose(Representation rep, std::mt19937_64& rng) {
  for (;;) {
    const Rotation r(random_rotation(rng));
    if (r.trace() > -1.0 + 1e-3) return rotation_to_pose(rep, r);
  }
}

// Flattened view of the differentiable outputs.
Eigen::VectorXd pack(const NetworkOutput& out) {
  std::vector<double> v;
  for (Eigen::Index i = 0; i < out.pose.size(); ++i) v.push_back(out.pose[i]);
  for (Eigen::Index i = 0; i < out.logits.size(); ++i) v.push_back(out.logits[i]);
  for (const auto& d : out.deltas) {
    for (Eigen::Index i = 0; i < d.size(); ++i) v.push_back(d[i]);
  }
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void unpack(const Eigen::VectorXd& v, NetworkOutput* out) {
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < out->pose.size(); ++i) out->pose[i] = v[k++];
  for (Eigen::Index i = 0; i < out->logits.size(); ++i) out->logits[i] = v[k++];
  for (auto& d : out->deltas) {
    for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = v[k++];
  }
}

Eigen::VectorXd pack_gradient(const LossValue& lv, const NetworkOutput& shape) {
  NetworkOutput g = shape;
  g.pose = lv.d_pose.size() ? lv.d_pose : Eigen::VectorXd::Zero(shape.pose.size());
  g.logits = lv.d_logits.size() ? lv.d_logits : Eigen::VectorXd::Zero(shape.logits.size());
  for (std::size_t i = 0; i < g.deltas.size(); ++i) {
    g.deltas[i] = i < lv.d_deltas.size() ? lv.d_deltas[i]
                                         : Eigen::VectorXd::Zero(shape.deltas[i].size());
  }
  return pack(g);
}

double top_two_gap(const Eigen::VectorXd& logits) {
  if (logits.size() < 2) return kPi;
  Eigen::VectorXd s = logits;
  std::sort(s.data(), s.data() + s.size(), std::greater<double>());
  return s[0] - s[1];
}

}  // namespace

GradcheckResult gradcheck(Family family, Representation rep, const GradcheckOptions& options) {
  GradcheckResult result;
  result.family = family;
  result.representation = rep;
  ObjectiveSpec spec = default_spec(family, rep);
  validate(spec);
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int dim = pose_dim(rep);
  const int max_attempts = 50 * std::max(options.trials, 1);

  int attempts = 0;
  while (result.checked < options.trials && attempts++ < max_attempts) {
    std::vector<Eigen::VectorXd> keys;
    for (std::size_t k = 0; k < options.k; ++k) keys.push_back(random_pose(rep, rng));
    const PoseDictionary dict(rep, keys);
    const Target target = make_target(spec, dict, random_pose(rep, rng));

    NetworkOutput out;
    if (!uses_bins(family)) {
      out.pose = random_pose(rep, rng);
      for (int i = 0; i < dim; ++i) out.pose[i] += 0.1 * normal(rng);
    } else {
      out.logits.resize(static_cast<Eigen::Index>(options.k));
      for (auto& v : out.logits) v = normal(rng);
      if (uses_delta(family)) {
        out.deltas.resize(per_bin(family) ? options.k : 1);
        for (auto& d : out.deltas) {
          d.resize(dim);
          for (auto& v : d) v = 0.3 * normal(rng);
        }
      }
    }

    LossValue lv;
    try {
      lv = objective(spec, dict, out, target);
    } catch (const ZeroSum&) {
      ++result.resampled;
      continue;
    }
    bool excluded = lv.margin < options.exclusion;
    if (uses_delta(family) && top_two_gap(out.logits) < 1e3 * options.step) excluded = true;
    if (uses_delta(family) && spec.rule == CombinationRule::kQuaternionRenorm) {
      for (std::size_t k = 0; k < dict.size(); ++k) {
        const auto& d = out.deltas[per_bin(family) ? k : 0];
        if ((dict.key(k) + d).norm() < 1e-2) excluded = true;
      }
    }
    if (excluded) {
      ++result.resampled;
      continue;
    }

    const Eigen::VectorXd x = pack(out);
    const Eigen::VectorXd analytic = pack_gradient(lv, out);
    Eigen::VectorXd numeric(x.size());
    NetworkOutput probe = out;
    Eigen::VectorXd xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      xp[i] = x[i] + options.step;
      unpack(xp, &probe);
      const double fp = objective(spec, dict, probe, target).value;
      xp[i] = x[i] - options.step;
      unpack(xp, &probe);
      const double fm = objective(spec, dict, probe, target).value;
      xp[i] = x[i];
      numeric[i] = (fp - fm) / (2.0 * options.step);
    }
    const double scale = std::max({analytic.norm(), numeric.norm(), 1e-8});
    const double rel = (analytic - numeric).norm() / scale;
    result.max_relative_error = std::max(result.max_relative_error, rel);
    if (!(rel <= options.tolerance)) ++result.failures;
    ++result.checked;
  }
  return result;
}

}  // namespace orient_geo
