#pragma once
// Dense T x T reference computations, kept independent of the O(T) library paths.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "shufflevar/design.hpp"
#include "shufflevar/permutations.hpp"

namespace oracle {

inline Eigen::VectorXd to_vector(std::span<const double> y) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(y.size()));
  for (std::size_t i = 0; i < y.size(); ++i) v(static_cast<Eigen::Index>(i)) = y[i];
  return v;
}

inline double ms_between_quadratic(std::span<const double> y, const shufflevar::DesignSchedule& d) {
  const Eigen::MatrixXd bg = d.averaging_matrix() - d.global_average_matrix();
  return (bg * to_vector(y)).squaredNorm() / static_cast<double>((d.m() - 1) * d.n());
}

inline double alpha_trace(const shufflevar::DesignSchedule& d, const shufflevar::Permutation& p) {
  const Eigen::MatrixXd b = d.averaging_matrix();
  const Eigen::MatrixXd pm = p.matrix();
  const Eigen::MatrixXd bg = b - d.global_average_matrix();
  return (bg * pm * b * pm.transpose()).trace() / static_cast<double>(d.m() - 1);
}

inline double gap_trace(const Eigen::MatrixXd& sigma, const shufflevar::DesignSchedule& d,
                        const shufflevar::Permutation& p) {
  const Eigen::MatrixXd bg = d.averaging_matrix() - d.global_average_matrix();
  const Eigen::MatrixXd pm = p.matrix();
  return (bg * pm * sigma * pm.transpose()).trace() - (bg * sigma).trace();
}

// Definition check over all pairs: X_t = X_u implies X_g(t) = X_g(u).
inline bool trivial_by_pairs(const shufflevar::DesignSchedule& d, const shufflevar::Permutation& p) {
  for (std::size_t t = 0; t < d.T(); ++t) {
    for (std::size_t u = 0; u < d.T(); ++u) {
      if (d.stimulus(t) == d.stimulus(u) && d.stimulus(p[t]) != d.stimulus(p[u])) return false;
    }
  }
  return true;
}

// Restricted log-likelihood with V = s2a XX' + s2e S formed and factored densely.
inline double reml_loglik_dense(std::span<const double> y, const shufflevar::DesignSchedule& d,
                                double s2a, double s2e, const Eigen::MatrixXd& corr) {
  const Eigen::Index T = static_cast<Eigen::Index>(d.T());
  const Eigen::MatrixXd x = d.design_matrix();
  const Eigen::MatrixXd v = s2a * x * x.transpose() + s2e * corr;
  Eigen::LLT<Eigen::MatrixXd> llt(v);
  const Eigen::VectorXd yy = to_vector(y);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(T);
  const Eigen::VectorXd vy = llt.solve(yy);
  const Eigen::VectorXd v1 = llt.solve(ones);
  const double ovo = ones.dot(v1);
  const double beta = ones.dot(vy) / ovo;
  const Eigen::VectorXd r = yy - beta * ones;
  const double quad = r.dot(llt.solve(r));
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < T; ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * (static_cast<double>(T - 1) * std::log(2.0 * std::numbers::pi) + log_det +
                 std::log(ovo) + quad);
}

/// Random balanced design with m stimuli x n repeats in random order, optional blocks.
inline shufflevar::DesignSchedule random_design(std::mt19937_64& rng, std::size_t m, std::size_t n,
                                                std::size_t blocks = 0) {
  std::vector<int> s;
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t r = 0; r < n; ++r) s.push_back(static_cast<int>(j));
  }
  std::shuffle(s.begin(), s.end(), rng);
  std::vector<int> b;
  if (blocks > 0) {
    for (std::size_t t = 0; t < s.size(); ++t) {
      b.push_back(static_cast<int>(t * blocks / s.size()));
    }
  }
  return shufflevar::DesignSchedule::from_indices(s, b);
}

inline std::vector<double> random_series(std::mt19937_64& rng, std::size_t T) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> y(T);
  for (double& v : y) v = normal(rng);
  return y;
}

}  // namespace oracle
