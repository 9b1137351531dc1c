#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "shufflevar/design.hpp"
#include "shufflevar/permutations.hpp"

namespace shufflevar {

struct EstimateFlags {
  bool clamped = false;            // raw signal estimate was negative
  bool degenerate = false;         // MS_between is zero, omega2 set to 0
  bool non_converged = false;      // REML hit its evaluation budget
  bool capped = false;             // signal estimate exceeded MS_between, omega2 set to 1
  bool almost_conserving = false;  // cyclic shift / odd-even permutation
  bool trivial_permutation = false;

  /// Set flag names joined by '|', or empty.
  std::string to_string() const;
};

/**
 * One series' variance decomposition. sigma2_A_raw may be negative;
 * sigma2_A = max(0, raw); omega2 = sigma2_A / total clipped to [0, 1].
 * For the shuffle and moment methods noise_level = total - sigma2_A_raw.
 */
struct VarianceEstimate {
  double sigma2_A_raw = 0.0;
  double sigma2_A = 0.0;
  double noise_level = 0.0;
  double total = 0.0;  // MS_between(Y)
  double omega2 = 0.0;
  std::string method;
  std::optional<double> alpha;
  std::optional<double> f_statistic;
  EstimateFlags flags;
};

/// Applies the clamping and plug-in rules shared by all methods.
VarianceEstimate plug_in(std::string method, double sigma2_A_raw, double total,
                         double noise_level);

/// (MS_bet(Y) - MS_bet(PY)) / (1 - alpha). Throws TrivialPermutation when |1 - alpha| <= 1e-12.
VarianceEstimate shuffle_estimate(std::span<const double> y, const DesignSchedule& d,
                                  const Permutation& p);

/// Same, with alpha(d, p) supplied by the caller (batch use).
VarianceEstimate shuffle_estimate(std::span<const double> y, const DesignSchedule& d,
                                  const Permutation& p, double alpha_value);

/// Mean of the raw shuffle estimates over several permutations, then clamp and plug in.
VarianceEstimate average_shuffle(std::span<const double> y, const DesignSchedule& d,
                                 std::span<const Permutation> perms);

/// MS_bet - MS_wit / n, assuming uncorrelated noise. Records F = MS_bet / (MS_wit / n).
VarianceEstimate mom_estimate(std::span<const double> y, const DesignSchedule& d);

/// Sum of the squared top m-1 eigenvalues of Sigma, divided by n^2 (m-1)^2.
double consistency_diagnostic(const Eigen::MatrixXd& sigma, std::size_t m, std::size_t n);

inline constexpr double kTrivialAlphaTolerance = 1e-12;

}  // namespace shufflevar
