#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace shufflevar {

struct SimplexOptions {
  double initial_step = 0.5;
  double tolerance = 1e-8;  // simplex diameter (max-norm distance to best vertex)
  std::size_t max_evaluations = 2000;
};

struct SimplexResult {
  std::vector<double> x;
  double value = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
};

/// Derivative-free minimization. The objective may return +inf to reject a point.
SimplexResult nelder_mead(const std::function<double(std::span<const double>)>& objective,
                          std::vector<double> start, const SimplexOptions& options = {});

}  // namespace shufflevar
