#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "shufflevar/design.hpp"
#include "shufflevar/estimators.hpp"

namespace shufflevar {

enum class RemlFamily { Iid, ExpNugget, Autoregressive };

struct RemlSpec {
  RemlFamily family = RemlFamily::ExpNugget;
  std::size_t ar_order = 3;  // used by Autoregressive only, at most 3

  std::string name() const;  // "iid", "exp_nugget", "ar3", ...
  std::size_t num_theta() const;
};

struct RemlOptions {
  std::size_t starts = 5;
  double tolerance = 1e-8;
  std::size_t max_evaluations = 2000;  // per start
  std::size_t max_T = 4096;
  std::uint64_t seed = 0x5eed;
};

/**
 * Fitted model cov(Y) = sigma2_A XX' + sigma2_eps Sigma(theta).
 * theta is (lambda1, lambda2) for exp_nugget, (a_1..a_p) for AR, empty for iid.
 */
struct RemlFit {
  double sigma2_A = 0.0;
  double sigma2_eps = 0.0;
  std::vector<double> theta;
  double log_restricted_likelihood = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
  std::size_t best_start = 0;
};

struct RemlResult {
  RemlFit fit;
  VarianceEstimate estimate;
};

/**
 * Restricted maximum likelihood over (sigma2_A, sigma2_eps, theta) with an
 * intercept as the only fixed effect. sigma2_eps is profiled out in closed
 * form; the rest is searched with a simplex from `starts` starting points.
 * Throws SizeGuard when T > options.max_T and AllStartsFailed when no start
 * produced a finite likelihood.
 */
RemlResult reml_estimate(std::span<const double> y, const DesignSchedule& d, const RemlSpec& spec,
                         const RemlOptions& options = {});

/// Restricted log-likelihood at fixed parameters (sigma2_eps > 0).
double reml_log_likelihood(std::span<const double> y, const DesignSchedule& d,
                           const RemlSpec& spec, double sigma2_A, double sigma2_eps,
                           std::span<const double> theta);

/// Unit-diagonal correlation for (spec, theta), dense.
Eigen::MatrixXd reml_correlation(const RemlSpec& spec, std::span<const double> theta,
                                 std::size_t T);

}  // namespace shufflevar
