#include "shufflevar/permutations.hpp"

#include <algorithm>
#include <numeric>

#include "shufflevar/error.hpp"
#include "shufflevar/rng.hpp"

namespace shufflevar {

std::string to_string(PermutationFamily family) {
  switch (family) {
    case PermutationFamily::Identity: return "identity";
    case PermutationFamily::Reverse: return "reverse";
    case PermutationFamily::CyclicShift: return "shift";
    case PermutationFamily::BlockRandom: return "block-random";
    case PermutationFamily::OddEven: return "odd-even";
    case PermutationFamily::Custom: return "custom";
  }
  return "custom";
}

Permutation::Permutation(std::vector<std::size_t> mapping, PermutationFamily family,
                         std::size_t shift)
    : mapping_(std::move(mapping)), family_(family), shift_(shift) {
  std::vector<bool> seen(mapping_.size(), false);
  for (std::size_t t = 0; t < mapping_.size(); ++t) {
    const std::size_t target = mapping_[t];
    if (target >= mapping_.size() || seen[target]) {
      throw Error(ErrorCode::InvalidPermutation,
                  "mapping is not a bijection (position " + std::to_string(t + 1) + ")");
    }
    seen[target] = true;
  }
}

Permutation Permutation::inverse() const {
  std::vector<std::size_t> inv(mapping_.size());
  for (std::size_t t = 0; t < mapping_.size(); ++t) inv[mapping_[t]] = t;
  return Permutation(std::move(inv), PermutationFamily::Custom);
}

Eigen::MatrixXd Permutation::matrix() const {
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(size(), size());
  for (std::size_t t = 0; t < size(); ++t) p(t, mapping_[t]) = 1.0;
  return p;
}

std::string Permutation::describe() const {
  if (family_ == PermutationFamily::CyclicShift) return "shift:" + std::to_string(shift_);
  return to_string(family_);
}

Permutation identity_perm(std::size_t T) {
  std::vector<std::size_t> g(T);
  std::iota(g.begin(), g.end(), 0);
  return Permutation(std::move(g), PermutationFamily::Identity);
}

Permutation reverse_perm(std::size_t T) {
  std::vector<std::size_t> g(T);
  for (std::size_t t = 0; t < T; ++t) g[t] = T - 1 - t;
  return Permutation(std::move(g), PermutationFamily::Reverse);
}

Permutation cyclic_shift(std::size_t T, std::size_t k) {
  if (T == 0 || k >= T) {
    throw Error(ErrorCode::InvalidParameter, "shift k must satisfy 0 <= k < T");
  }
  std::vector<std::size_t> g(T);
  for (std::size_t t = 0; t < T; ++t) g[t] = (t + k) % T;
  return Permutation(std::move(g), PermutationFamily::CyclicShift, k);
}

Permutation block_random_perm(const DesignSchedule& d, std::uint64_t seed) {
  if (!d.has_blocks()) throw Error(ErrorCode::MissingBlocks, "design has no block labels");
  std::vector<std::vector<std::size_t>> members(d.num_blocks());
  for (std::size_t t = 0; t < d.T(); ++t) members[d.block(t)].push_back(t);
  auto engine = make_engine(seed, 0x626c6f636bULL);
  std::vector<std::size_t> g(d.T());
  for (const auto& slots : members) {
    auto targets = slots;
    std::shuffle(targets.begin(), targets.end(), engine);
    for (std::size_t i = 0; i < slots.size(); ++i) g[slots[i]] = targets[i];
  }
  return Permutation(std::move(g), PermutationFamily::BlockRandom);
}

Permutation odd_even_swap(std::size_t T) {
  if (T % 2 != 0) throw Error(ErrorCode::OddLength, "odd/even swap needs even T");
  std::vector<std::size_t> g(T);
  for (std::size_t t = 0; t < T; ++t) g[t] = t ^ 1u;
  return Permutation(std::move(g), PermutationFamily::OddEven);
}

Permutation make_permutation(PermutationFamily family, const DesignSchedule& d,
                             std::size_t shift, std::uint64_t seed) {
  switch (family) {
    case PermutationFamily::Identity: return identity_perm(d.T());
    case PermutationFamily::Reverse: return reverse_perm(d.T());
    case PermutationFamily::CyclicShift: return cyclic_shift(d.T(), shift);
    case PermutationFamily::BlockRandom: return block_random_perm(d, seed);
    case PermutationFamily::OddEven: return odd_even_swap(d.T());
    case PermutationFamily::Custom: break;
  }
  throw Error(ErrorCode::InvalidParameter, "a custom permutation needs an explicit mapping");
}

std::vector<double> apply(const Permutation& p, std::span<const double> y) {
  if (y.size() != p.size()) {
    throw Error(ErrorCode::LengthMismatch, "permutation and series lengths differ");
  }
  std::vector<double> out(y.size());
  for (std::size_t t = 0; t < y.size(); ++t) out[t] = y[p[t]];
  return out;
}

namespace {

void check_perm(const Permutation& p, const DesignSchedule& d) {
  if (p.size() != d.T()) {
    throw Error(ErrorCode::LengthMismatch, "permutation length does not match design T");
  }
}

}  // namespace

bool is_trivial(const Permutation& p, const DesignSchedule& d) {
  check_perm(p, d);
  for (std::size_t j = 0; j < d.m(); ++j) {
    const auto slots = d.slots(j);
    const int target = d.stimulus(p[slots[0]]);
    for (std::size_t t : slots) {
      if (d.stimulus(p[t]) != target) return false;
    }
  }
  return true;
}

double alpha(const DesignSchedule& d, const Permutation& p) {
  check_perm(p, d);
  // N_joint = sum over (j, j') of c_{jj'}^2 where c counts slots of j sent to j'.
  const std::size_t m = d.m();
  std::vector<std::size_t> counts(m, 0);
  std::vector<int> touched;
  touched.reserve(d.n());
  std::uint64_t joint = 0;
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t t : d.slots(j)) {
      const int target = d.stimulus(p[t]);
      if (counts[target]++ == 0) touched.push_back(target);
    }
    for (int target : touched) {
      joint += static_cast<std::uint64_t>(counts[target]) * counts[target];
      counts[target] = 0;
    }
    touched.clear();
  }
  const double n = static_cast<double>(d.n());
  return (static_cast<double>(joint) / (n * n) - 1.0) / static_cast<double>(m - 1);
}

namespace {

void check_sigma(const Eigen::MatrixXd& sigma, const DesignSchedule& d) {
  if (sigma.rows() != sigma.cols() || static_cast<std::size_t>(sigma.rows()) != d.T()) {
    throw Error(ErrorCode::DimensionMismatch, "covariance must be T x T");
  }
}

}  // namespace

double contrast_trace(const Eigen::MatrixXd& sigma, const DesignSchedule& d) {
  check_sigma(sigma, d);
  double within = 0.0;
  for (std::size_t j = 0; j < d.m(); ++j) {
    const auto slots = d.slots(j);
    for (std::size_t t : slots) {
      for (std::size_t u : slots) within += sigma(t, u);
    }
  }
  return within / static_cast<double>(d.n()) - sigma.sum() / static_cast<double>(d.T());
}

double noise_conservation_gap(const Eigen::MatrixXd& sigma, const DesignSchedule& d,
                              const Permutation& p) {
  check_sigma(sigma, d);
  check_perm(p, d);
  // tr(G P S P') = tr(G S) because G is invariant under any permutation, so only
  // the within-treatment sums of S differ.
  double diff = 0.0;
  for (std::size_t j = 0; j < d.m(); ++j) {
    const auto slots = d.slots(j);
    for (std::size_t t : slots) {
      for (std::size_t u : slots) diff += sigma(p[t], p[u]) - sigma(t, u);
    }
  }
  return diff / static_cast<double>(d.n());
}

}  // namespace shufflevar
