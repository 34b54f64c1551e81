#ifndef ORIENT_GEO_LOSSES_H_
#define ORIENT_GEO_LOSSES_H_

// Training objectives with analytic gradients with respect to the network
// outputs (pose, bin logits, deltas).

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "orient_geo/bin_delta.h"
#include "orient_geo/dictionary.h"
#include "orient_geo/so3.h"

namespace orient_geo {

// Inside gradients the acos argument is clamped to |u| <= 1 - kAcosClamp and
// the acos slope is capped at kMaxAcosSlope.
inline constexpr double kAcosClamp = 1e-7;
inline constexpr double kMaxAcosSlope = 1e6;
// Distances this close to 0 or pi mark a loss as non-smooth.
inline constexpr double kNonSmoothMargin = 1e-6;
// Axis-angle norm used when a residual logarithm is taken near pi.
inline constexpr double kNearPiResidualAngle = kPi - 1e-6;

struct GeodesicTerm {
  double value = 0.0;
  Eigen::VectorXd grad;  // d value / d y
};

// Geodesic distance between the rotation of y and target. Axis-angle y of any
// norm goes through Rodrigues' formula; quaternion y is normalized first, so
// the gradient is tangent to the sphere at y/|y|.
GeodesicTerm geodesic_term(Representation rep, const Eigen::VectorXd& y,
                           const Rotation& target);

struct LossValue {
  double value = 0.0;
  double regression = 0.0;      // regression part, weight included
  double classification = 0.0;  // classification part, weight included
  Eigen::VectorXd d_pose;       // regression-only families
  Eigen::VectorXd d_logits;     // bin families
  std::vector<Eigen::VectorXd> d_deltas;
  bool non_smooth = false;
  // Smallest distance of any internal geodesic term to 0 or pi.
  double margin = kPi / 2;
};

LossValue geodesic_loss(Representation rep, const Eigen::VectorXd& y_pred,
                        const Eigen::VectorXd& y_true);
LossValue euclidean_loss(const Eigen::VectorXd& y_pred, const Eigen::VectorXd& y_true);
LossValue cross_entropy(const Eigen::VectorXd& logits, std::size_t label);
LossValue kl_divergence(const Eigen::VectorXd& p_true, const Eigen::VectorXd& logits);

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

enum class Family {
  kRG, kRE, kC,
  kMG, kMGp, kMR, kMRp, kMP, kMPp, kMX, kMXp, kMXP, kMXPp, kMS, kMSp, kMLE, kMLEp,
};

const std::vector<Family>& all_families();
std::string to_string(Family f);
// Accepts "M_G+" and "M_Gp" spellings.
Family parse_family(std::string_view name);

bool uses_bins(Family f);        // has a Bin network
bool uses_delta(Family f);       // has Delta network(s)
bool per_bin(Family f);          // one delta per bin
bool probabilistic(Family f);    // regression weighted by bin probabilities
bool relaxed(Family f);          // KL against soft assignments
// M_S / M_S+ for the families initialized by one epoch of it.
std::optional<Family> simple_init_family(Family f);

struct ObjectiveSpec {
  Family family = Family::kMG;
  double alpha = 1.0;
  Representation representation = Representation::kAxisAngle;
  CombinationRule rule = CombinationRule::kAdditive;
  double gamma = 0.0;  // <= 0 selects the family default
};

// Spec with the family's default rule and alpha (1 shared, 10 per-bin).
ObjectiveSpec default_spec(Family f, Representation rep);
// Throws InvalidArgument / FamilyMismatch.
void validate(const ObjectiveSpec& spec);
// gamma for relaxed families: spec.gamma if positive, 10 for M_XP and M_XP+,
// otherwise default_gamma(dict).
double resolve_gamma(const ObjectiveSpec& spec, const PoseDictionary& dict);

struct NetworkOutput {
  Eigen::VectorXd pose;                 // regression-only families
  Eigen::VectorXd logits;               // bin families
  std::vector<Eigen::VectorXd> deltas;  // one shared, or K per-bin
};

struct Target {
  Eigen::VectorXd pose;
  Rotation rotation;
  std::size_t label = 0;
  Eigen::VectorXd soft;                         // relaxed families
  Eigen::VectorXd simple_delta;                 // y* - z_{l*}
  std::vector<Eigen::Vector3d> log_residuals;   // log(R_k^T R*) for every k
};

Target make_target(const ObjectiveSpec& spec, const PoseDictionary& dict,
                   const Eigen::VectorXd& y_true);

// Per-sample objective. The predicted label is argmax of the logits and is a
// non-differentiable selection.
LossValue objective(const ObjectiveSpec& spec, const PoseDictionary& dict,
                    const NetworkOutput& out, const Target& target);

// Final rotation predicted from a network output.
Rotation predict_rotation(const ObjectiveSpec& spec, const PoseDictionary& dict,
                          const NetworkOutput& out);

// log(R) with a fallback near pi: the axis comes from the symmetric part and
// the angle is kNearPiResidualAngle.
Eigen::Vector3d residual_log(const Rotation& r);

struct GradcheckOptions {
  int trials = 100;
  std::uint64_t seed = 0;
  double step = 1e-5;
  double tolerance = 1e-4;
  // Instances with a geodesic term closer than this to 0 or pi, or with a
  // near tie between the top two logits, are resampled.
  double exclusion = 1e-3;
  std::size_t k = 6;
};

struct GradcheckResult {
  Family family = Family::kMG;
  Representation representation = Representation::kAxisAngle;
  int checked = 0;
  int resampled = 0;
  int failures = 0;
  double max_relative_error = 0.0;
  bool passed() const { return failures == 0 && checked > 0; }
};

// Analytic gradients against central finite differences on random instances.
GradcheckResult gradcheck(Family family, Representation rep, const GradcheckOptions& options);
// Every representation the family supports.
std::vector<Representation> supported_representations(Family f);

}  // namespace orient_geo

#endif  // ORIENT_GEO_LOSSES_H_
