#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "shufflevar/design.hpp"
#include "shufflevar/rng.hpp"

namespace shufflevar {

enum class NoiseFamily { Iid, ExpNugget, Block, Autoregressive };

/**
 * Parametric noise correlation family. correlation() always has unit
 * diagonal; for the block family the within-block correlation is
 * sigma2_b / (sigma2_b + sigma2_e) and natural_variance() returns the sum.
 */
struct CovarianceModel {
  NoiseFamily family = NoiseFamily::Iid;
  double lambda1 = 0.0;  // exp-nugget weight of the smooth part
  double lambda2 = 1.0;  // exp-nugget decay length
  double sigma2_b = 0.0;
  double sigma2_e = 1.0;
  std::vector<double> ar;
  double innovation_variance = 1.0;

  static CovarianceModel iid();
  static CovarianceModel exp_nugget(double lambda1, double lambda2);
  static CovarianceModel block(double sigma2_b, double sigma2_e);
  static CovarianceModel autoregressive(std::vector<double> coefficients,
                                        double innovation_variance = 1.0);

  /// Throws InvalidParameter / NonStationary for out-of-range parameters.
  void validate() const;
  Eigen::MatrixXd correlation(const DesignSchedule& d) const;
  /// Variance of one measurement implied by the family (1 unless block).
  double natural_variance() const;
  std::string describe() const;
};

/// Sigma_tu = lambda1 exp(-|t-u|/lambda2) + (1 - lambda1) 1(t = u).
Eigen::MatrixXd cov_exp_nugget(std::size_t T, double lambda1, double lambda2);

/// sigma2_b 1(same block) + sigma2_e 1(t = u); a covariance, not a correlation.
Eigen::MatrixXd cov_block(const DesignSchedule& d, double sigma2_b, double sigma2_e);

/// Toeplitz AR(p) correlation; throws NonStationary.
Eigen::MatrixXd cov_ar(std::size_t T, std::span<const double> coefficients,
                       double innovation_variance = 1.0);

/// True iff all roots of the AR characteristic polynomial lie inside the unit circle.
bool ar_is_stationary(std::span<const double> coefficients);

/// Autocovariances gamma_0..gamma_maxlag of a stationary AR(p) process.
std::vector<double> ar_autocovariance(std::span<const double> coefficients,
                                      double innovation_variance, std::size_t max_lag);

/// Exact population noise level sigma2_eps tr((B-G) Sigma) / ((m-1) n).
double noise_level(const Eigen::MatrixXd& sigma, const DesignSchedule& d, double sigma2_eps);

/// tr((B-G) Sigma) for a Toeplitz Sigma given by its first row rho_0..rho_{T-1}.
double contrast_trace_toeplitz(std::span<const double> rho, const DesignSchedule& d);

struct ExperimentTruth {
  double sigma2_A = 0.0;
  double noise_level = 0.0;
  double total = 0.0;
  double omega2 = 0.0;
  bool degenerate = false;
};

ExperimentTruth make_truth(double sigma2_A, double noise_level);

/**
 * Draws eps ~ N(0, sigma2_eps Sigma) from a lower Cholesky factor computed
 * once. Near-singular Sigma gets diagonal jitter 1e-10, escalating x10 up to
 * 1e-6, before FactorizationFailure. Read-only after construction.
 */
class NoiseSampler {
 public:
  NoiseSampler(const Eigen::MatrixXd& sigma, double sigma2_eps);

  std::size_t size() const { return static_cast<std::size_t>(factor_.rows()); }
  double sigma2_eps() const { return sigma2_eps_; }
  double jitter() const { return jitter_; }
  void draw(Engine& engine, std::span<double> out) const;

 private:
  Eigen::MatrixXd factor_;
  double sigma2_eps_;
  double jitter_ = 0.0;
};

struct SampledExperiment {
  std::vector<double> y;
  std::vector<double> effects;
  ExperimentTruth truth;
};

/// Y = X A + eps with A ~ N(0, sigma2_A I_m); deterministic in (seed, stream, index).
SampledExperiment sample_experiment(const DesignSchedule& d, double sigma2_A,
                                    const NoiseSampler& noise, double noise_level_value,
                                    std::uint64_t seed, std::uint64_t stream = 0,
                                    std::uint64_t index = 0);

SampledExperiment sample_experiment(const DesignSchedule& d, double sigma2_A,
                                    const CovarianceModel& model, double sigma2_eps,
                                    std::uint64_t seed);

}  // namespace shufflevar
