#include "shufflevar/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include <Eigen/Eigenvalues>

#include "shufflevar/error.hpp"

namespace shufflevar {

std::string EstimateFlags::to_string() const {
  std::string out;
  auto add = [&out](bool set, const char* name) {
    if (!set) return;
    if (!out.empty()) out += '|';
    out += name;
  };
  add(clamped, "clamped");
  add(degenerate, "degenerate");
  add(non_converged, "non_converged");
  add(capped, "capped");
  add(almost_conserving, "almost_conserving");
  add(trivial_permutation, "trivial_permutation");
  return out;
}

VarianceEstimate plug_in(std::string method, double sigma2_A_raw, double total,
                         double noise_level) {
  VarianceEstimate e;
  e.method = std::move(method);
  e.sigma2_A_raw = sigma2_A_raw;
  e.flags.clamped = sigma2_A_raw < 0.0;
  e.sigma2_A = std::max(0.0, sigma2_A_raw);
  e.total = total;
  e.noise_level = noise_level;
  if (total > 0.0) {
    e.omega2 = e.sigma2_A / total;
    if (e.omega2 > 1.0) {
      e.omega2 = 1.0;
      e.flags.capped = true;
    }
  } else {
    e.omega2 = 0.0;
    e.flags.degenerate = true;
  }
  return e;
}

VarianceEstimate shuffle_estimate(std::span<const double> y, const DesignSchedule& d,
                                  const Permutation& p, double alpha_value) {
  check_aligned(y, d);
  if (std::abs(1.0 - alpha_value) <= kTrivialAlphaTolerance) {
    throw Error(ErrorCode::TrivialPermutation, "permutation " + p.describe() +
                                                   " only relabels treatments (alpha = 1)");
  }
  const double total = ms_between(y, d);
  const double shuffled = ms_between(apply(p, y), d);
  const double raw = (total - shuffled) / (1.0 - alpha_value);
  auto e = plug_in("shuffle", raw, total, total - raw);
  e.alpha = alpha_value;
  e.flags.almost_conserving = p.almost_conserving();
  return e;
}

VarianceEstimate shuffle_estimate(std::span<const double> y, const DesignSchedule& d,
                                  const Permutation& p) {
  return shuffle_estimate(y, d, p, alpha(d, p));
}

VarianceEstimate average_shuffle(std::span<const double> y, const DesignSchedule& d,
                                 std::span<const Permutation> perms) {
  if (perms.empty()) throw Error(ErrorCode::InvalidParameter, "no permutations to average");
  double raw_sum = 0.0;
  double alpha_sum = 0.0;
  bool almost = false;
  double total = 0.0;
  for (const auto& p : perms) {
    const auto single = shuffle_estimate(y, d, p);
    raw_sum += single.sigma2_A_raw;
    alpha_sum += *single.alpha;
    almost = almost || p.almost_conserving();
    total = single.total;
  }
  const double count = static_cast<double>(perms.size());
  const double raw = raw_sum / count;
  auto e = plug_in("shuffle_avg", raw, total, total - raw);
  e.alpha = alpha_sum / count;
  e.flags.almost_conserving = almost;
  return e;
}

VarianceEstimate mom_estimate(std::span<const double> y, const DesignSchedule& d) {
  const auto c = contrasts(y, d);
  const double n = static_cast<double>(d.n());
  const double noise = c.ms_within / n;
  auto e = plug_in("mom", c.ms_between - noise, c.ms_between, noise);
  e.f_statistic = noise > 0.0 ? c.ms_between / noise : std::numeric_limits<double>::infinity();
  return e;
}

double consistency_diagnostic(const Eigen::MatrixXd& sigma, std::size_t m, std::size_t n) {
  if (sigma.rows() != sigma.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "covariance must be square");
  }
  if (m < 2 || n < 1) throw Error(ErrorCode::InvalidParameter, "need m >= 2 and n >= 1");
  if (static_cast<std::size_t>(sigma.rows()) < m - 1) {
    throw Error(ErrorCode::DimensionMismatch, "matrix has fewer than m-1 eigenvalues");
  }
  const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw Error(ErrorCode::InvalidParameter, "covariance must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sigma, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorCode::FactorizationFailure, "eigenvalue decomposition failed");
  }
  std::vector<double> ev(solver.eigenvalues().data(),
                         solver.eigenvalues().data() + solver.eigenvalues().size());
  std::sort(ev.begin(), ev.end(), std::greater<>());
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < m; ++i) sum += ev[i] * ev[i];
  const double denom = static_cast<double>(n) * static_cast<double>(n) *
                       static_cast<double>(m - 1) * static_cast<double>(m - 1);
  return sum / denom;
}

}  // namespace shufflevar
