#include "orient_geo/dictionary.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "oracles.h"
#include "orient_geo/errors.h"

namespace orient_geo {
namespace {

using Vec = Eigen::VectorXd;

Vec v3(double x, double y, double z) { return Eigen::Vector3d(x, y, z); }

PoseDictionary random_axis_angle_dictionary(std::size_t k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  std::vector<Vec> keys;
  for (std::size_t i = 0; i < k; ++i) keys.push_back(v3(u(rng), u(rng), u(rng)));
  return PoseDictionary(Representation::kAxisAngle, keys);
}

TEST(PoseDictionaryTest, RejectsInvalidKeys) {
  EXPECT_THROW(PoseDictionary(Representation::kAxisAngle, {v3(0, 0, 0), v3(0, 0, 0)}),
               DegenerateDictionary);
  EXPECT_THROW(PoseDictionary(Representation::kAxisAngle, {v3(0, 0, 4)}),
               InvalidAxisAngle);
  EXPECT_THROW(PoseDictionary(Representation::kQuaternion,
                              {Vec(Eigen::Vector4d(-1, 0, 0, 0))}),
               InvalidQuaternion);
  EXPECT_THROW(PoseDictionary(Representation::kQuaternion, {v3(0, 0, 0)}),
               DimensionMismatch);
}

TEST(KMeansTest, DistinctPointsAreAFixedPoint) {
  std::mt19937_64 rng(1);
  const PoseDictionary truth = random_axis_angle_dictionary(12, rng);
  const PoseDictionary fit =
      fit_kmeans(truth.keys(), Representation::kAxisAngle, 12, /*seed=*/5);
  for (const Vec& z : truth.keys()) {
    double best = 1e9;
    for (const Vec& key : fit.keys()) best = std::min(best, (z - key).norm());
    EXPECT_LT(best, 1e-12);
  }
}

TEST(KMeansTest, RecoversTwoSeparatedBlobMeans) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> noise(0.0, 0.05);
  std::vector<Vec> targets;
  Eigen::Vector3d mean_a = Eigen::Vector3d::Zero(), mean_b = Eigen::Vector3d::Zero();
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector3d a(1.0 + noise(rng), noise(rng), noise(rng));
    const Eigen::Vector3d b(-1.0 + noise(rng), 0.5 + noise(rng), noise(rng));
    targets.push_back(a);
    targets.push_back(b);
    mean_a += a / 200.0;
    mean_b += b / 200.0;
  }
  const PoseDictionary fit = fit_kmeans(targets, Representation::kAxisAngle, 2, 3);
  const Vec& z0 = fit.key(0);
  const Vec& z1 = fit.key(1);
  const bool a_first = (z0 - mean_a).norm() < (z1 - mean_a).norm();
  EXPECT_LT(((a_first ? z0 : z1) - mean_a).norm(), 1e-6);
  EXPECT_LT(((a_first ? z1 : z0) - mean_b).norm(), 1e-6);
}

std::vector<Vec> random_targets(Representation rep, int n, std::mt19937_64& rng) {
  std::vector<Vec> out;
  while (static_cast<int>(out.size()) < n) {
    const Eigen::Matrix3d m = testing::random_rotation_matrix(rng);
    if (m.trace() < -1.0 + 1e-6) continue;  // no unique log near pi
    out.push_back(rotation_to_pose(rep, Rotation(m)));
  }
  return out;
}

TEST(KMeansTest, DeterministicGivenSeed) {
  std::mt19937_64 rng(3);
  const auto targets = random_targets(Representation::kAxisAngle, 500, rng);
  const PoseDictionary a = fit_kmeans(targets, Representation::kAxisAngle, 16, 9);
  const PoseDictionary b = fit_kmeans(targets, Representation::kAxisAngle, 16, 9);
  for (std::size_t k = 0; k < 16; ++k) EXPECT_EQ(a.key(k), b.key(k));
}

TEST(KMeansTest, ObjectiveNeverIncreases) {
  std::mt19937_64 rng(4);
  for (Representation rep : {Representation::kAxisAngle, Representation::kQuaternion}) {
    const auto targets = random_targets(rep, 800, rng);
    const KMeansFit fit = fit_kmeans_traced(targets, rep, 24, 11);
    ASSERT_GE(fit.objective.size(), 2u);
    for (std::size_t i = 1; i < fit.objective.size(); ++i) {
      EXPECT_LE(fit.objective[i], fit.objective[i - 1] * (1 + 1e-12));
    }
  }
}

TEST(KMeansTest, QuaternionKeysStayCanonicalUnitVectors) {
  std::mt19937_64 rng(5);
  const auto targets = random_targets(Representation::kQuaternion, 600, rng);
  const PoseDictionary dict = fit_kmeans(targets, Representation::kQuaternion, 20, 1);
  for (const Vec& z : dict.keys()) {
    EXPECT_NEAR(z.norm(), 1.0, 1e-12);
    EXPECT_GE(z[0], 0.0);
  }
}

TEST(KMeansTest, AxisAngleKeysStayBelowPi) {
  // Targets straddling the pi boundary average out to shorter vectors, but a
  // tight cluster near the boundary must also stay valid.
  std::vector<Vec> targets;
  for (int i = 0; i < 20; ++i) {
    targets.push_back(v3(0, 0, kPi - 1e-7 * (i + 1)));
    targets.push_back(v3(1e-3 * i, 0.5, 0));
  }
  const PoseDictionary dict = fit_kmeans(targets, Representation::kAxisAngle, 2, 3);
  for (const Vec& z : dict.keys()) EXPECT_LT(z.norm(), kPi);
}

TEST(KMeansTest, InsufficientData) {
  std::vector<Vec> targets = {v3(0, 0, 0), v3(1, 0, 0)};
  EXPECT_THROW(fit_kmeans(targets, Representation::kAxisAngle, 3, 1), InsufficientData);
  std::vector<Vec> duplicates = {v3(1, 0, 0), v3(1, 0, 0), v3(1, 0, 0)};
  EXPECT_THROW(fit_kmeans(duplicates, Representation::kAxisAngle, 2, 1),
               DegenerateDictionary);
}

TEST(HardLabelTest, Examples) {
  const PoseDictionary dict(Representation::kAxisAngle,
                            {v3(1, 0, 0), v3(-1, 0, 0), v3(0, 1, 0), v3(0, 0, 1)});
  EXPECT_EQ(hard_label(v3(0, 1, 0), dict), 2u);
  EXPECT_EQ(hard_label(v3(0, 0, 0), dict), 0u);  // equidistant from all keys
  EXPECT_EQ(hard_label(v3(0, 0.5, 0.5), dict), 2u);
}

TEST(HardLabelTest, MatchesBruteForceScan) {
  std::mt19937_64 rng(6);
  const PoseDictionary dict = random_axis_angle_dictionary(30, rng);
  std::uniform_real_distribution<double> u(-1.8, 1.8);
  for (int i = 0; i < 1000; ++i) {
    const Vec y = v3(u(rng), u(rng), u(rng));
    std::vector<double> d;
    for (const Vec& z : dict.keys()) d.push_back((y - z).norm());
    const auto oracle = static_cast<std::size_t>(
        std::min_element(d.begin(), d.end()) - d.begin());
    ASSERT_EQ(hard_label(y, dict), oracle);
  }
}

TEST(SoftAssignTest, Limits) {
  std::mt19937_64 rng(7);
  const PoseDictionary dict = random_axis_angle_dictionary(10, rng);
  const SoftAssignment flat = soft_assign(v3(0.1, 0.2, 0.3), dict, 1e-12);
  for (Eigen::Index k = 0; k < flat.p.size(); ++k) EXPECT_NEAR(flat.p[k], 0.1, 1e-9);
  const SoftAssignment peaked = soft_assign(dict.key(1), dict, 1e6);
  EXPECT_GT(peaked.p[1], 1.0 - 1e-6);
  EXPECT_THROW(soft_assign(dict.key(1), dict, 0.0), InvalidArgument);
}

TEST(SoftAssignTest, DirectFormula) {
  const PoseDictionary dict(Representation::kAxisAngle, {v3(1, 0, 0), v3(0, 2, 0)});
  const SoftAssignment s = soft_assign(v3(0, 0, 0), dict, 1.0);
  const double expected = std::exp(-1.0) / (std::exp(-1.0) + std::exp(-4.0));
  EXPECT_NEAR(s.p[0], expected, 1e-15);
  EXPECT_NEAR(s.p[0], 0.95257, 1e-5);
}

TEST(SoftAssignTest, NormalizedAndConsistentWithHardLabel) {
  std::mt19937_64 rng(8);
  const PoseDictionary dict = random_axis_angle_dictionary(25, rng);
  std::uniform_real_distribution<double> u(-1.8, 1.8);
  std::uniform_real_distribution<double> log_gamma(-6.0, 8.0);
  for (int i = 0; i < 10000; ++i) {
    const Vec y = v3(u(rng), u(rng), u(rng));
    const double gamma = std::pow(10.0, log_gamma(rng));
    const SoftAssignment s = soft_assign(y, dict, gamma);
    ASSERT_NEAR(s.p.sum(), 1.0, 1e-12);
    ASSERT_GE(s.p.minCoeff(), 0.0);
    Eigen::Index arg;
    s.p.maxCoeff(&arg);
    if (gamma > 1e-3) ASSERT_EQ(static_cast<std::size_t>(arg), hard_label(y, dict));
  }
}

TEST(DefaultGammaTest, Examples) {
  EXPECT_DOUBLE_EQ(
      default_gamma(PoseDictionary(Representation::kAxisAngle, {v3(0, 0, 0), v3(1, 0, 0)})),
      0.5);
  EXPECT_DOUBLE_EQ(default_gamma(PoseDictionary(Representation::kAxisAngle,
                                                {v3(0, 0, 0), v3(2, 0, 0), v3(0, 3, 0)})),
                   0.125);
  EXPECT_THROW(default_gamma(PoseDictionary(Representation::kAxisAngle, {v3(0, 0, 0)})),
               InvalidArgument);
}

TEST(PoseDictionaryTest, TextRoundtripIsExact) {
  std::mt19937_64 rng(9);
  const auto targets = random_targets(Representation::kQuaternion, 100, rng);
  const PoseDictionary dict = fit_kmeans(targets, Representation::kQuaternion, 7, 2);
  std::stringstream ss;
  dict.write(ss);
  EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')), "repr=quaternion K=7");
  const PoseDictionary back = PoseDictionary::read(ss);
  ASSERT_EQ(back.size(), dict.size());
  EXPECT_EQ(back.representation(), Representation::kQuaternion);
  for (std::size_t k = 0; k < dict.size(); ++k) EXPECT_EQ(back.key(k), dict.key(k));

  std::istringstream bad("repr=euler K=2\n0 0 0\n");
  EXPECT_THROW(PoseDictionary::read(bad), InvalidArgument);
  std::istringstream short_file("repr=axis_angle K=2\n0 0 0\n");
  EXPECT_THROW(PoseDictionary::read(short_file), ParseError);
}

}  // namespace
}  // namespace orient_geo
