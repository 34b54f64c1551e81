#ifndef ORIENT_GEO_TESTS_ORACLES_H_
#define ORIENT_GEO_TESTS_ORACLES_H_

// Independent reference computations used only by tests. Nothing here calls
// into the code paths being checked.

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

namespace orient_geo::testing {

inline Eigen::Matrix3d random_rotation_matrix(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Vector4d q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Eigen::Matrix3d m;
  m << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return m;
}

inline Eigen::Vector3d random_unit_vector(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Vector3d v(n(rng), n(rng), n(rng));
  return v.normalized();
}

// Matrix exponential of a skew matrix by truncated power series with
// scaling and squaring.
inline Eigen::Matrix3d series_expm(const Eigen::Matrix3d& a) {
  int squarings = 0;
  double norm = a.norm();
  while (norm > 0.25) {
    norm *= 0.5;
    ++squarings;
  }
  const Eigen::Matrix3d scaled = a / std::pow(2.0, squarings);
  Eigen::Matrix3d term = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d sum = Eigen::Matrix3d::Identity();
  for (int k = 1; k < 30; ++k) {
    term = term * scaled / static_cast<double>(k);
    sum += term;
  }
  for (int i = 0; i < squarings; ++i) sum = sum * sum;
  return sum;
}

// Principal matrix logarithm via complex eigendecomposition.
inline Eigen::Matrix3d eigen_logm(const Eigen::Matrix3d& m) {
  Eigen::EigenSolver<Eigen::Matrix3d> es(m);
  const Eigen::Matrix3cd v = es.eigenvectors();
  Eigen::Vector3cd lambda = es.eigenvalues();
  Eigen::Matrix3cd log_lambda = Eigen::Matrix3cd::Zero();
  for (int i = 0; i < 3; ++i) log_lambda(i, i) = std::log(lambda[i]);
  const Eigen::Matrix3cd l = v * log_lambda * v.inverse();
  return l.real();
}

// d(R1, R2) = ||logm(R1 R2^T)||_F / sqrt(2).
inline double logm_distance(const Eigen::Matrix3d& r1, const Eigen::Matrix3d& r2) {
  return eigen_logm(r1 * r2.transpose()).norm() / std::sqrt(2.0);
}

// Central finite-difference gradient of f at x.
template <typename F>
Eigen::VectorXd central_difference(F&& f, const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = xp[i];
    xp[i] = xi + h;
    const double fp = f(xp);
    xp[i] = xi - h;
    const double fm = f(xp);
    xp[i] = xi;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                             double floor = 1e-8) {
  const double scale = std::max({a.norm(), b.norm(), floor});
  return (a - b).norm() / scale;
}

// Median by full sort; even counts average the middle pair.
inline double sorted_median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace orient_geo::testing

#endif  // ORIENT_GEO_TESTS_ORACLES_H_
