#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace shufflevar {

/**
 * A balanced stimulus schedule: T measurements, m distinct stimuli, each
 * shown exactly n times, optionally grouped into recording blocks.
 *
 * Stimulus and block indices are 0-based and assigned in order of first
 * appearance. The averaging matrix B = XX'/n and global average G are kept
 * implicit; dense versions exist for diagnostics.
 */
class DesignSchedule {
 public:
  /// Throws UnbalancedDesign, DegenerateDesign or LengthMismatch.
  static DesignSchedule build(std::span<const std::string> schedule,
                              std::span<const std::string> blocks = {});
  static DesignSchedule from_indices(std::span<const int> stimulus,
                                     std::span<const int> blocks = {});

  std::size_t T() const { return stimulus_.size(); }
  std::size_t m() const { return labels_.size(); }
  std::size_t n() const { return T() / m(); }

  int stimulus(std::size_t t) const { return stimulus_[t]; }
  int block(std::size_t t) const { return block_[t]; }
  std::span<const int> stimuli() const { return stimulus_; }
  std::span<const int> blocks() const { return block_; }

  /// False when the design was built without block labels (one implicit block).
  bool has_blocks() const { return has_blocks_; }
  std::size_t num_blocks() const { return block_labels_.size(); }

  const std::vector<std::string>& stimulus_labels() const { return labels_; }
  const std::vector<std::string>& block_labels() const { return block_labels_; }

  /// Time slots of stimulus j, in increasing order.
  std::span<const std::size_t> slots(std::size_t j) const {
    return {slots_.data() + j * n(), n()};
  }

  Eigen::MatrixXd design_matrix() const;     // X, T x m
  Eigen::MatrixXd averaging_matrix() const;  // B
  Eigen::MatrixXd global_average_matrix() const;  // G

 private:
  DesignSchedule() = default;
  void index_slots();

  std::vector<int> stimulus_;
  std::vector<int> block_;
  std::vector<std::string> labels_;
  std::vector<std::string> block_labels_;
  std::vector<std::size_t> slots_;  // grouped by stimulus, n per group
  bool has_blocks_ = false;
};

/// One response vector aligned to a schedule. Rejects non-finite values.
class MeasurementSeries {
 public:
  MeasurementSeries(std::string id, std::vector<double> values);

  const std::string& id() const { return id_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }

 private:
  std::string id_;
  std::vector<double> values_;
};

struct ContrastValue {
  double ms_between = 0.0;
  double ms_within = 0.0;
};

std::vector<double> treatment_averages(std::span<const double> y, const DesignSchedule& d);

/// Sample variance of the treatment averages, (1/(m-1)) sum_j (Ybar_j - Ybar)^2.
double ms_between(std::span<const double> y, const DesignSchedule& d);

/// Pooled within-treatment variance SSW / (m(n-1)). Throws NoReplication for n = 1.
double ms_within(std::span<const double> y, const DesignSchedule& d);

ContrastValue contrasts(std::span<const double> y, const DesignSchedule& d);

void check_aligned(std::span<const double> y, const DesignSchedule& d);

}  // namespace shufflevar
