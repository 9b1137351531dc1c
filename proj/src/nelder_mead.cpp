#include "shufflevar/nelder_mead.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace shufflevar {
namespace {

double sanitize(double v) {
  return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
}

}  // namespace

SimplexResult nelder_mead(const std::function<double(std::span<const double>)>& objective,
                          std::vector<double> start, const SimplexOptions& options) {
  const std::size_t dim = start.size();
  SimplexResult result;
  auto eval = [&](const std::vector<double>& x) {
    ++result.evaluations;
    return sanitize(objective(x));
  };

  std::vector<std::vector<double>> vertex(dim + 1, start);
  for (std::size_t i = 0; i < dim; ++i) vertex[i + 1][i] += options.initial_step;
  std::vector<double> value(dim + 1);
  for (std::size_t i = 0; i <= dim; ++i) value[i] = eval(vertex[i]);

  std::vector<std::size_t> order(dim + 1);
  std::vector<double> centroid(dim), trial(dim), trial2(dim);
  auto blend = [dim](const std::vector<double>& c, const std::vector<double>& w, double coef,
                     std::vector<double>& out) {
    for (std::size_t k = 0; k < dim; ++k) out[k] = c[k] + coef * (w[k] - c[k]);
  };

  while (true) {
    std::iota(order.begin(), order.end(), 0);
    // Stable sort keeps the earlier vertex first on ties, so runs are reproducible.
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return value[a] < value[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[dim > 0 ? dim - 1 : 0];

    double diameter = 0.0;
    for (std::size_t i = 0; i <= dim; ++i) {
      for (std::size_t k = 0; k < dim; ++k) {
        diameter = std::max(diameter, std::abs(vertex[i][k] - vertex[best][k]));
      }
    }
    if (diameter < options.tolerance && std::isfinite(value[best])) {
      result.converged = true;
      break;
    }
    if (result.evaluations >= options.max_evaluations || dim == 0) break;
    ++result.iterations;

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t i = 0; i <= dim; ++i) {
      if (i == worst) continue;
      for (std::size_t k = 0; k < dim; ++k) centroid[k] += vertex[i][k];
    }
    for (double& c : centroid) c /= static_cast<double>(dim);

    blend(centroid, vertex[worst], -1.0, trial);
    const double reflected = eval(trial);
    if (reflected < value[best]) {
      blend(centroid, vertex[worst], -2.0, trial2);
      const double expanded = eval(trial2);
      if (expanded < reflected) {
        vertex[worst] = trial2;
        value[worst] = expanded;
      } else {
        vertex[worst] = trial;
        value[worst] = reflected;
      }
      continue;
    }
    if (reflected < value[second]) {
      vertex[worst] = trial;
      value[worst] = reflected;
      continue;
    }
    const bool outside = reflected < value[worst];
    blend(centroid, vertex[worst], outside ? -0.5 : 0.5, trial2);
    const double contracted = eval(trial2);
    if (contracted < (outside ? reflected : value[worst])) {
      vertex[worst] = trial2;
      value[worst] = contracted;
      continue;
    }
    for (std::size_t i = 0; i <= dim; ++i) {
      if (i == best) continue;
      blend(vertex[best], vertex[i], 0.5, vertex[i]);
      value[i] = eval(vertex[i]);
    }
  }

  const auto best_it = std::min_element(value.begin(), value.end());
  const auto best_index = static_cast<std::size_t>(best_it - value.begin());
  result.x = vertex[best_index];
  result.value = *best_it;
  return result;
}

}  // namespace shufflevar
