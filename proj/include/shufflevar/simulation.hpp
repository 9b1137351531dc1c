#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "shufflevar/design.hpp"
#include "shufflevar/estimators.hpp"
#include "shufflevar/noise_models.hpp"
#include "shufflevar/permutations.hpp"
#include "shufflevar/reml.hpp"

namespace shufflevar {

/// One estimator requested by a sweep or by the command line.
struct EstimatorChoice {
  enum class Kind { Shuffle, ShuffleAvg, Mom, Reml };
  Kind kind = Kind::Shuffle;
  RemlSpec reml;

  std::string name() const;  // "shuffle", "shuffle_avg", "mom", "reml:exp_nugget", ...

  static EstimatorChoice shuffle() { return {Kind::Shuffle, {}}; }
  static EstimatorChoice shuffle_avg() { return {Kind::ShuffleAvg, {}}; }
  static EstimatorChoice mom() { return {Kind::Mom, {}}; }
  static EstimatorChoice reml_fit(RemlSpec spec) { return {Kind::Reml, spec}; }
};

/**
 * Runs one estimator on one series. Shuffle uses perms[0]; shuffle_avg uses
 * all of them. alphas, if non-empty, holds alpha(d, perms[i]).
 */
VarianceEstimate run_estimator(const EstimatorChoice& choice, std::span<const double> y,
                               const DesignSchedule& d, std::span<const Permutation> perms,
                               std::span<const double> alphas, const RemlOptions& reml = {});

enum class SweepKind { Block, TimeSeries, RemlComparison };

std::string to_string(SweepKind kind);

struct SweepConfig {
  SweepKind kind = SweepKind::TimeSeries;
  std::size_t m = 120;
  std::size_t n = 15;
  std::size_t blocks = 20;  // block kind only; m must be a multiple
  CovarianceModel noise = CovarianceModel::exp_nugget(0.7, 30.0);
  double sigma2_eps = 1.0;  // multiplies noise.natural_variance()
  std::vector<double> grid;
  std::size_t replicates = 1000;
  PermutationFamily permutation = PermutationFamily::Reverse;
  std::size_t shift = 1;
  std::uint64_t seed = 1;
  std::vector<EstimatorChoice> estimators{EstimatorChoice::shuffle()};
  unsigned threads = 0;
  RemlOptions reml;

  void validate() const;

  static SweepConfig fig5a();  // block noise, within-block random P
  static SweepConfig fig5b();  // exp-nugget time series, reverse P
  static SweepConfig fig6();   // shuffle vs REML on the fig5b noise
};

struct SweepRow {
  double sigma2_A_true = 0.0;
  std::string estimator;
  double mean_sigma2_A = 0.0;
  double bias = 0.0;
  double sd = 0.0;  // NaN with fewer than two estimates
  double q25 = 0.0;
  double q75 = 0.0;
  double mean_omega2 = 0.0;
  double omega2_true = 0.0;
  std::size_t n_fail = 0;  // threw, or REML hit its budget
  std::size_t n_reps = 0;
  double alpha_realized = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;  // grid-major, estimators in config order
  double alpha = 0.0;
  double noise_level = 0.0;  // exact sigma2_eps tr((B-G)Sigma)/((m-1)n) for the sweep design
  std::size_t T = 0;
};

/// Balanced blocked design: `blocks` blocks, each holding every repeat of m/blocks stimuli.
DesignSchedule make_block_design(std::size_t m, std::size_t n, std::size_t blocks,
                                 std::uint64_t seed);
/// Uniformly shuffled schedule of m stimuli x n repeats, single block.
DesignSchedule make_random_design(std::size_t m, std::size_t n, std::uint64_t seed);

/// Design, permutation and sampler used by run_sweep for cfg.
DesignSchedule sweep_design(const SweepConfig& cfg);

/**
 * Monte Carlo over the grid: replicate r at grid index g draws from substream
 * (seed, g + 1, r), so the result is independent of cfg.threads. Raw signal
 * estimates enter the statistics; omega2 uses the clamped plug-in.
 */
SweepResult run_sweep(const SweepConfig& cfg);
SweepResult run_block_sweep(const SweepConfig& cfg);
SweepResult run_timeseries_sweep(const SweepConfig& cfg);
SweepResult run_reml_comparison(const SweepConfig& cfg);

/// header_lines are written first as '#' comments; the reader skips them.
void write_sweep_csv(const SweepResult& result, std::ostream& out,
                     const std::vector<std::string>& header_lines = {});
void write_sweep_csv(const SweepResult& result, const std::string& path,
                     const std::vector<std::string>& header_lines = {});
std::vector<SweepRow> read_sweep_csv(const std::string& path);

/// Population of M images with centered effects mu, sum mu^2 / (M-1) = sigma2_A.
struct PredictionConfig {
  std::size_t population = 2000;  // M
  std::size_t m = 120;
  std::size_t n = 15;
  double sigma2_A = 0.4;
  CovarianceModel noise = CovarianceModel::exp_nugget(0.7, 30.0);
  double sigma2_eps = 1.0;
  double perturbation_sd = 0.3;  // f = f* + N(0, sd^2) per image
  bool center_noise = true;      // project each noise draw onto zero-sum vectors
  std::size_t replicates = 2000;
  std::uint64_t seed = 1;
  unsigned threads = 0;
};

struct PredictionSummary {
  double noise_level = 0.0;
  double omega2 = 0.0;
  double mean_mspe = 0.0;
  double se_mspe = 0.0;
  double mean_corr2 = 0.0;
  double se_corr2 = 0.0;
  double mean_mspe_perturbed = 0.0;
  double se_mspe_perturbed = 0.0;
  /// sigma2 tr(B Sigma)/((m-1)n): the MSPE[f*] mean without noise centering.
  double uncentered_mspe = 0.0;
  std::size_t replicates = 0;
};

PredictionSummary run_prediction_check(const PredictionConfig& cfg);

}  // namespace shufflevar
