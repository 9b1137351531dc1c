#include "shufflevar/design.hpp"

#include <cmath>
#include <unordered_map>

#include "shufflevar/error.hpp"

namespace shufflevar {
namespace {

template <class Label>
std::vector<int> intern(std::span<const Label> labels, std::vector<Label>& names) {
  std::unordered_map<Label, int> lookup;
  std::vector<int> index;
  index.reserve(labels.size());
  for (const auto& label : labels) {
    auto [it, inserted] = lookup.try_emplace(label, static_cast<int>(names.size()));
    if (inserted) names.push_back(label);
    index.push_back(it->second);
  }
  return index;
}

}  // namespace

DesignSchedule DesignSchedule::build(std::span<const std::string> schedule,
                                     std::span<const std::string> blocks) {
  if (schedule.empty()) throw Error(ErrorCode::DegenerateDesign, "empty schedule");
  if (!blocks.empty() && blocks.size() != schedule.size()) {
    throw Error(ErrorCode::LengthMismatch, "block labels do not match schedule length");
  }
  DesignSchedule d;
  d.stimulus_ = intern(schedule, d.labels_);
  if (blocks.empty()) {
    d.block_.assign(schedule.size(), 0);
    d.block_labels_ = {"1"};
  } else {
    d.block_ = intern(blocks, d.block_labels_);
    d.has_blocks_ = true;
  }
  d.index_slots();
  return d;
}

DesignSchedule DesignSchedule::from_indices(std::span<const int> stimulus,
                                            std::span<const int> blocks) {
  std::vector<std::string> s, b;
  s.reserve(stimulus.size());
  for (int v : stimulus) s.push_back(std::to_string(v));
  for (int v : blocks) b.push_back(std::to_string(v));
  return build(s, b);
}

void DesignSchedule::index_slots() {
  const std::size_t groups = labels_.size();
  if (groups < 2) throw Error(ErrorCode::DegenerateDesign, "need at least two distinct stimuli");
  std::vector<std::size_t> count(groups, 0);
  for (int s : stimulus_) ++count[s];
  const std::size_t reps = count[0];
  for (std::size_t j = 0; j < groups; ++j) {
    if (count[j] != reps) {
      throw Error(ErrorCode::UnbalancedDesign,
                  "stimulus '" + labels_[j] + "' appears " + std::to_string(count[j]) +
                      " times, expected " + std::to_string(reps));
    }
  }
  slots_.assign(stimulus_.size(), 0);
  std::vector<std::size_t> fill(groups, 0);
  for (std::size_t t = 0; t < stimulus_.size(); ++t) {
    const auto j = static_cast<std::size_t>(stimulus_[t]);
    slots_[j * reps + fill[j]++] = t;
  }
}

Eigen::MatrixXd DesignSchedule::design_matrix() const {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(T(), m());
  for (std::size_t t = 0; t < T(); ++t) x(t, stimulus_[t]) = 1.0;
  return x;
}

Eigen::MatrixXd DesignSchedule::averaging_matrix() const {
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(T(), T());
  const double w = 1.0 / static_cast<double>(n());
  for (std::size_t t = 0; t < T(); ++t) {
    for (std::size_t u : slots(stimulus_[t])) b(t, u) = w;
  }
  return b;
}

Eigen::MatrixXd DesignSchedule::global_average_matrix() const {
  return Eigen::MatrixXd::Constant(T(), T(), 1.0 / static_cast<double>(T()));
}

MeasurementSeries::MeasurementSeries(std::string id, std::vector<double> values)
    : id_(std::move(id)), values_(std::move(values)) {
  for (std::size_t t = 0; t < values_.size(); ++t) {
    if (!std::isfinite(values_[t])) {
      throw Error(ErrorCode::NonFinite,
                  "series '" + id_ + "' has a non-finite value at t=" + std::to_string(t + 1));
    }
  }
}

void check_aligned(std::span<const double> y, const DesignSchedule& d) {
  if (y.size() != d.T()) {
    throw Error(ErrorCode::LengthMismatch, "series length " + std::to_string(y.size()) +
                                               " does not match design T=" + std::to_string(d.T()));
  }
}

std::vector<double> treatment_averages(std::span<const double> y, const DesignSchedule& d) {
  check_aligned(y, d);
  const std::size_t n = d.n();
  std::vector<double> avg(d.m(), 0.0);
  for (std::size_t j = 0; j < d.m(); ++j) {
    double sum = 0.0;
    for (std::size_t t : d.slots(j)) sum += y[t];
    avg[j] = sum / static_cast<double>(n);
  }
  return avg;
}

namespace {

// Group means of y - y[0]; the offset makes constant series give exact zeros.
std::vector<double> centered_averages(std::span<const double> y, const DesignSchedule& d) {
  const double ref = y[0];
  const double n = static_cast<double>(d.n());
  std::vector<double> avg(d.m(), 0.0);
  for (std::size_t j = 0; j < d.m(); ++j) {
    double sum = 0.0;
    for (std::size_t t : d.slots(j)) sum += y[t] - ref;
    avg[j] = sum / n;
  }
  return avg;
}

double between_from_averages(const std::vector<double>& avg) {
  double grand = 0.0;
  for (double a : avg) grand += a;
  grand /= static_cast<double>(avg.size());
  double ss = 0.0;
  for (double a : avg) ss += (a - grand) * (a - grand);
  return ss / static_cast<double>(avg.size() - 1);
}

double within_sum_squares(std::span<const double> y, const DesignSchedule& d,
                          const std::vector<double>& avg) {
  const double ref = y[0];
  double ss = 0.0;
  for (std::size_t j = 0; j < d.m(); ++j) {
    for (std::size_t t : d.slots(j)) {
      const double r = (y[t] - ref) - avg[j];
      ss += r * r;
    }
  }
  return ss;
}

}  // namespace

double ms_between(std::span<const double> y, const DesignSchedule& d) {
  check_aligned(y, d);
  return between_from_averages(centered_averages(y, d));
}

double ms_within(std::span<const double> y, const DesignSchedule& d) {
  check_aligned(y, d);
  if (d.n() < 2) throw Error(ErrorCode::NoReplication, "MS_within needs n >= 2");
  const auto avg = centered_averages(y, d);
  return within_sum_squares(y, d, avg) / static_cast<double>(d.m() * (d.n() - 1));
}

ContrastValue contrasts(std::span<const double> y, const DesignSchedule& d) {
  check_aligned(y, d);
  if (d.n() < 2) throw Error(ErrorCode::NoReplication, "MS_within needs n >= 2");
  const auto avg = centered_averages(y, d);
  return {between_from_averages(avg),
          within_sum_squares(y, d, avg) / static_cast<double>(d.m() * (d.n() - 1))};
}

}  // namespace shufflevar
