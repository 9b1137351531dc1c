#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "shufflevar/design.hpp"

namespace shufflevar {

enum class PermutationFamily { Identity, Reverse, CyclicShift, BlockRandom, OddEven, Custom };

std::string to_string(PermutationFamily family);

/**
 * A bijection g on {0..T-1} acting on series as (PY)_t = Y_{g(t)}.
 *
 * The family tag records where the mapping came from. Cyclic shifts and the
 * odd/even swap are only approximately noise conserving for stationary
 * noise; almost_conserving() reports that.
 */
class Permutation {
 public:
  /// Validates that `mapping` is a bijection; throws InvalidPermutation otherwise.
  explicit Permutation(std::vector<std::size_t> mapping,
                       PermutationFamily family = PermutationFamily::Custom,
                       std::size_t shift = 0);

  std::size_t size() const { return mapping_.size(); }
  std::size_t operator[](std::size_t t) const { return mapping_[t]; }
  std::span<const std::size_t> mapping() const { return mapping_; }
  PermutationFamily family() const { return family_; }
  std::size_t shift() const { return shift_; }
  bool almost_conserving() const {
    return family_ == PermutationFamily::CyclicShift || family_ == PermutationFamily::OddEven;
  }

  Permutation inverse() const;
  Eigen::MatrixXd matrix() const;  // P with P(t, g(t)) = 1
  std::string describe() const;

 private:
  std::vector<std::size_t> mapping_;
  PermutationFamily family_;
  std::size_t shift_;
};

Permutation identity_perm(std::size_t T);
Permutation reverse_perm(std::size_t T);
/// g(t) = (t + k) mod T; requires k < T.
Permutation cyclic_shift(std::size_t T, std::size_t k);
/// Uniform random permutation inside each block; needs block labels.
Permutation block_random_perm(const DesignSchedule& d, std::uint64_t seed);
/// Swaps slots (0,1), (2,3), ...; throws OddLength for odd T.
Permutation odd_even_swap(std::size_t T);

/// Builds a named family for design d; Custom is rejected (no mapping to build from).
Permutation make_permutation(PermutationFamily family, const DesignSchedule& d,
                             std::size_t shift = 1, std::uint64_t seed = 0);

std::vector<double> apply(const Permutation& p, std::span<const double> y);

/// True iff P maps every treatment group onto a single treatment group.
bool is_trivial(const Permutation& p, const DesignSchedule& d);

/**
 * Mixing coefficient alpha = tr((B-G) P B P') / (m-1), evaluated in O(T) by
 * counting how many slots of treatment j land on treatment j'.
 */
double alpha(const DesignSchedule& d, const Permutation& p);

/**
 * tr((B-G) P S P') - tr((B-G) S) for a hypothesized noise covariance S.
 * Zero iff P conserves the noise contribution to MS_between under S.
 */
double noise_conservation_gap(const Eigen::MatrixXd& sigma, const DesignSchedule& d,
                              const Permutation& p);

/// tr((B-G) S) without forming B or G.
double contrast_trace(const Eigen::MatrixXd& sigma, const DesignSchedule& d);

}  // namespace shufflevar
