#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "shufflevar/design.hpp"
#include "shufflevar/estimators.hpp"
#include "shufflevar/noise_models.hpp"
#include "shufflevar/permutations.hpp"
#include "shufflevar/simulation.hpp"

namespace shufflevar {

/**
 * Wide CSV layout: header "t,stimulus[,block],<series>...", one row per
 * time slot. Rows may come in any order; t must be a permutation of 1..T.
 */
struct Dataset {
  DesignSchedule design;
  std::vector<std::string> series_ids;
  std::vector<std::vector<double>> series;  // each of length T, in time order
  std::vector<std::string> warnings;
};

Dataset parse_dataset(std::istream& in, const std::string& source = "<input>");
Dataset read_dataset(const std::string& path);
/// Writes with 17 significant digits, so reading back is bit-exact.
void write_dataset(std::ostream& out, const Dataset& data);
void write_dataset(const std::string& path, const Dataset& data);

/// One 1-based target index per line (blank lines and '#' comments skipped).
Permutation read_permutation_file(const std::string& path, std::size_t T);

struct PermutationSpec {
  PermutationFamily family = PermutationFamily::Reverse;
  std::size_t shift = 1;
  std::string path;  // Custom: file to read

  std::string describe() const;
};

/// reverse | identity | shift:k | block-random | odd-even | file:PATH
PermutationSpec parse_permutation_spec(const std::string& text);
Permutation build_permutation(const PermutationSpec& spec, const DesignSchedule& d,
                              std::uint64_t seed);

/// iid | exp_nugget:l1,l2 | block:sb,se | ar:a1[,a2,...]
CovarianceModel parse_noise_model(const std::string& text);

/// Comma-separated list of shuffle | shuffle_avg | mom | reml:iid | reml:exp_nugget | reml:arP
std::vector<EstimatorChoice> parse_estimators(const std::string& text);

/// Flat key=value file with optional [section] headers; keys before any header go to "".
using ConfigSections = std::map<std::string, std::map<std::string, std::string>>;
ConfigSections parse_config(std::istream& in, const std::string& source = "<config>");
ConfigSections read_config(const std::string& path);

/// Preset by name: fig5a, fig5b, fig6.
SweepConfig sweep_preset(const std::string& name);
/// Applies keys (preset, kind, m, n, blocks, noise, sigma2_eps, grid, replicates,
/// permutation, seed, estimators, threads, reml_starts) on top of cfg.
SweepConfig apply_sweep_settings(SweepConfig cfg, const std::map<std::string, std::string>& kv);
/// key=value lines describing a sweep config, for echoing into outputs.
std::vector<std::string> describe_sweep(const SweepConfig& cfg);

struct EstimateRow {
  std::string series_id;
  VarianceEstimate estimate;
  std::string error;  // set when the estimator failed for this series
};

struct EstimateRequest {
  std::vector<PermutationSpec> permutations{PermutationSpec{}};
  std::vector<EstimatorChoice> estimators{EstimatorChoice::shuffle()};
  std::uint64_t seed = 1;
  unsigned threads = 0;
  RemlOptions reml;
};

/**
 * Every estimator on every series. Rows are ordered by series then estimator.
 * Per-series failures (trivial permutation, REML errors) become flagged rows
 * with NaN values instead of aborting the batch.
 */
std::vector<EstimateRow> estimate_dataset(const Dataset& data, const EstimateRequest& request);

/// '#'-prefixed header lines, then CSV columns series_id, method, alpha,
/// sigma2_A_raw, sigma2_A, noise_level, ms_between, omega2, flags.
void write_estimates(std::ostream& out, const std::vector<EstimateRow>& rows,
                     const std::vector<std::string>& header_lines);

std::string format_double(double v);  // 17 significant digits, "NA" for NaN
double parse_double(const std::string& text, const std::string& where);

}  // namespace shufflevar
