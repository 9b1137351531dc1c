#include "shufflevar/simulation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "shufflevar/error.hpp"
#include "shufflevar/parallel.hpp"
#include "shufflevar/rng.hpp"

namespace shufflevar {

namespace {

constexpr std::uint64_t kDesignStream = 0x64657369676eULL;
constexpr std::uint64_t kPredictionStream = 0x70726564ULL;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Linear interpolation between order statistics (R type 7).
double quantile(std::vector<double> sorted, double q) {
  if (sorted.empty()) return kNaN;
  std::sort(sorted.begin(), sorted.end());
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::string format_number(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_number(const std::string& field, std::size_t line) {
  if (field == "NA" || field == "nan" || field == "NaN") return kNaN;
  double v = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    if (field == "inf" || field == "Inf") return std::numeric_limits<double>::infinity();
    if (field == "-inf" || field == "-Inf") return -std::numeric_limits<double>::infinity();
    throw Error(ErrorCode::ParseError,
                "line " + std::to_string(line) + ": not a number: '" + field + "'");
  }
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

const char* kSweepHeader =
    "sigma2_A_true,estimator,mean_sigma2_A,bias,sd,q25,q75,mean_omega2,omega2_true,n_fail,n_reps,"
    "alpha_realized";

}  // namespace

std::string EstimatorChoice::name() const {
  switch (kind) {
    case Kind::Shuffle: return "shuffle";
    case Kind::ShuffleAvg: return "shuffle_avg";
    case Kind::Mom: return "mom";
    case Kind::Reml: return "reml:" + reml.name();
  }
  return "shuffle";
}

VarianceEstimate run_estimator(const EstimatorChoice& choice, std::span<const double> y,
                               const DesignSchedule& d, std::span<const Permutation> perms,
                               std::span<const double> alphas, const RemlOptions& reml) {
  switch (choice.kind) {
    case EstimatorChoice::Kind::Shuffle:
      if (perms.empty()) throw Error(ErrorCode::InvalidParameter, "shuffle needs a permutation");
      return alphas.empty() ? shuffle_estimate(y, d, perms[0])
                            : shuffle_estimate(y, d, perms[0], alphas[0]);
    case EstimatorChoice::Kind::ShuffleAvg:
      return average_shuffle(y, d, perms);
    case EstimatorChoice::Kind::Mom:
      return mom_estimate(y, d);
    case EstimatorChoice::Kind::Reml:
      return reml_estimate(y, d, choice.reml, reml).estimate;
  }
  throw Error(ErrorCode::InvalidParameter, "unknown estimator");
}

std::string to_string(SweepKind kind) {
  switch (kind) {
    case SweepKind::Block: return "block";
    case SweepKind::TimeSeries: return "timeseries";
    case SweepKind::RemlComparison: return "reml_comparison";
  }
  return "timeseries";
}

void SweepConfig::validate() const {
  if (replicates < 1) throw Error(ErrorCode::InvalidParameter, "replicates must be >= 1");
  if (m < 2 || n < 1) throw Error(ErrorCode::InvalidParameter, "need m >= 2 and n >= 1");
  if (estimators.empty()) throw Error(ErrorCode::InvalidParameter, "no estimators requested");
  if (!(sigma2_eps >= 0.0)) throw Error(ErrorCode::InvalidParameter, "sigma2_eps must be >= 0");
  for (double g : grid) {
    if (!(g >= 0.0) || !std::isfinite(g)) {
      throw Error(ErrorCode::InvalidParameter, "grid values must be finite and >= 0");
    }
  }
  if (kind == SweepKind::Block && (blocks == 0 || m % blocks != 0)) {
    throw Error(ErrorCode::InvalidParameter, "m must be a multiple of the block count");
  }
  noise.validate();
}

SweepConfig SweepConfig::fig5a() {
  SweepConfig c;
  c.kind = SweepKind::Block;
  c.noise = CovarianceModel::block(0.5, 0.7);
  c.permutation = PermutationFamily::BlockRandom;
  for (int i = 0; i <= 9; ++i) c.grid.push_back(0.1 * i);
  return c;
}

SweepConfig SweepConfig::fig5b() {
  SweepConfig c;
  c.kind = SweepKind::TimeSeries;
  c.noise = CovarianceModel::exp_nugget(0.7, 30.0);
  c.permutation = PermutationFamily::Reverse;
  for (int i = 0; i <= 9; ++i) c.grid.push_back(0.1 * i);
  return c;
}

SweepConfig SweepConfig::fig6() {
  SweepConfig c = fig5b();
  c.kind = SweepKind::RemlComparison;
  c.grid = {0.0, 0.2, 0.4, 0.6, 0.8};
  c.estimators = {EstimatorChoice::shuffle(),
                  EstimatorChoice::reml_fit({RemlFamily::ExpNugget, 3})};
  return c;
}

DesignSchedule make_block_design(std::size_t m, std::size_t n, std::size_t blocks,
                                 std::uint64_t seed) {
  if (blocks == 0 || m % blocks != 0) {
    throw Error(ErrorCode::InvalidParameter, "m must be a multiple of the block count");
  }
  auto engine = make_engine(seed, kDesignStream);
  const std::size_t per = m / blocks;
  std::vector<int> s, b;
  s.reserve(m * n);
  b.reserve(m * n);
  for (std::size_t blk = 0; blk < blocks; ++blk) {
    std::vector<int> slots;
    for (std::size_t j = 0; j < per; ++j) {
      slots.insert(slots.end(), n, static_cast<int>(blk * per + j));
    }
    std::shuffle(slots.begin(), slots.end(), engine);
    s.insert(s.end(), slots.begin(), slots.end());
    b.insert(b.end(), slots.size(), static_cast<int>(blk));
  }
  return DesignSchedule::from_indices(s, b);
}

DesignSchedule make_random_design(std::size_t m, std::size_t n, std::uint64_t seed) {
  auto engine = make_engine(seed, kDesignStream);
  std::vector<int> s;
  s.reserve(m * n);
  for (std::size_t j = 0; j < m; ++j) s.insert(s.end(), n, static_cast<int>(j));
  std::shuffle(s.begin(), s.end(), engine);
  return DesignSchedule::from_indices(s);
}

DesignSchedule sweep_design(const SweepConfig& cfg) {
  if (cfg.kind == SweepKind::Block) return make_block_design(cfg.m, cfg.n, cfg.blocks, cfg.seed);
  return make_random_design(cfg.m, cfg.n, cfg.seed);
}

SweepResult run_sweep(const SweepConfig& cfg) {
  cfg.validate();
  const auto d = sweep_design(cfg);
  const Eigen::MatrixXd corr = cfg.noise.correlation(d);
  const double s2 = cfg.sigma2_eps * cfg.noise.natural_variance();
  const NoiseSampler sampler(corr, s2);

  SweepResult result;
  result.T = d.T();
  result.noise_level = noise_level(corr, d, s2);

  const std::vector<Permutation> perms{make_permutation(cfg.permutation, d, cfg.shift, cfg.seed)};
  result.alpha = alpha(d, perms[0]);
  const std::vector<double> alphas{result.alpha};
  const bool needs_shuffle = std::any_of(cfg.estimators.begin(), cfg.estimators.end(),
                                         [](const EstimatorChoice& e) {
                                           return e.kind == EstimatorChoice::Kind::Shuffle ||
                                                  e.kind == EstimatorChoice::Kind::ShuffleAvg;
                                         });
  if (needs_shuffle && std::abs(1.0 - result.alpha) <= kTrivialAlphaTolerance) {
    throw Error(ErrorCode::TrivialPermutation,
                "sweep permutation " + perms[0].describe() + " is trivial for the design");
  }

  const std::size_t E = cfg.estimators.size();
  const std::size_t R = cfg.replicates;
  struct Cell {
    double raw = 0.0;
    double omega2 = 0.0;
    bool ok = false;
    bool failed = false;
  };
  std::vector<Cell> cells(cfg.grid.size() * R * E);

  parallel_for(cfg.grid.size() * R, cfg.threads, [&](std::size_t i) {
    const std::size_t g = i / R;
    const std::size_t r = i % R;
    const auto experiment =
        sample_experiment(d, cfg.grid[g], sampler, result.noise_level, cfg.seed, g + 1, r);
    for (std::size_t e = 0; e < E; ++e) {
      Cell& cell = cells[i * E + e];
      try {
        const auto est = run_estimator(cfg.estimators[e], experiment.y, d, perms, alphas, cfg.reml);
        cell.raw = est.sigma2_A_raw;
        cell.omega2 = est.omega2;
        cell.ok = true;
        cell.failed = est.flags.non_converged;
      } catch (const Error&) {
        cell.failed = true;
      }
    }
  });

  for (std::size_t g = 0; g < cfg.grid.size(); ++g) {
    const auto truth = make_truth(cfg.grid[g], result.noise_level);
    for (std::size_t e = 0; e < E; ++e) {
      SweepRow row;
      row.sigma2_A_true = cfg.grid[g];
      row.estimator = cfg.estimators[e].name();
      row.omega2_true = truth.omega2;
      row.n_reps = R;
      row.alpha_realized = result.alpha;
      std::vector<double> values;
      double omega_sum = 0.0;
      for (std::size_t r = 0; r < R; ++r) {
        const Cell& cell = cells[(g * R + r) * E + e];
        if (cell.failed) ++row.n_fail;
        if (!cell.ok) continue;
        values.push_back(cell.raw);
        omega_sum += cell.omega2;
      }
      const double count = static_cast<double>(values.size());
      if (values.empty()) {
        row.mean_sigma2_A = row.bias = row.sd = row.q25 = row.q75 = row.mean_omega2 = kNaN;
      } else {
        row.mean_sigma2_A = std::accumulate(values.begin(), values.end(), 0.0) / count;
        row.bias = row.mean_sigma2_A - cfg.grid[g];
        row.mean_omega2 = omega_sum / count;
        if (values.size() >= 2) {
          double ss = 0.0;
          for (double v : values) ss += (v - row.mean_sigma2_A) * (v - row.mean_sigma2_A);
          row.sd = std::sqrt(ss / (count - 1.0));
        } else {
          row.sd = kNaN;
        }
        row.q25 = quantile(values, 0.25);
        row.q75 = quantile(values, 0.75);
      }
      result.rows.push_back(std::move(row));
    }
  }
  return result;
}

SweepResult run_block_sweep(const SweepConfig& cfg) {
  if (cfg.kind != SweepKind::Block || cfg.noise.family != NoiseFamily::Block) {
    throw Error(ErrorCode::InvalidParameter, "block sweep needs block kind and block noise");
  }
  return run_sweep(cfg);
}

SweepResult run_timeseries_sweep(const SweepConfig& cfg) {
  if (cfg.kind == SweepKind::Block) {
    throw Error(ErrorCode::InvalidParameter, "time-series sweep needs a random schedule");
  }
  return run_sweep(cfg);
}

SweepResult run_reml_comparison(const SweepConfig& cfg) {
  const bool has_reml = std::any_of(cfg.estimators.begin(), cfg.estimators.end(),
                                    [](const EstimatorChoice& e) {
                                      return e.kind == EstimatorChoice::Kind::Reml;
                                    });
  if (!has_reml) throw Error(ErrorCode::InvalidParameter, "REML comparison needs a REML estimator");
  return run_timeseries_sweep(cfg);
}

void write_sweep_csv(const SweepResult& result, std::ostream& out,
                     const std::vector<std::string>& header_lines) {
  for (const auto& h : header_lines) out << "# " << h << '\n';
  out << kSweepHeader << '\n';
  for (const auto& r : result.rows) {
    out << format_number(r.sigma2_A_true) << ',' << r.estimator << ','
        << format_number(r.mean_sigma2_A) << ',' << format_number(r.bias) << ','
        << format_number(r.sd) << ',' << format_number(r.q25) << ',' << format_number(r.q75)
        << ',' << format_number(r.mean_omega2) << ',' << format_number(r.omega2_true) << ','
        << r.n_fail << ',' << r.n_reps << ',' << format_number(r.alpha_realized) << '\n';
  }
}

void write_sweep_csv(const SweepResult& result, const std::string& path,
                     const std::vector<std::string>& header_lines) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot open '" + path + "' for writing");
  write_sweep_csv(result, out, header_lines);
  if (!out) throw Error(ErrorCode::Io, "write to '" + path + "' failed");
}

std::vector<SweepRow> read_sweep_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line[0] == '#') continue;
    header = line == kSweepHeader;
    break;
  }
  if (!header) {
    throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": unexpected sweep header");
  }
  std::vector<SweepRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 12) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected 12 fields");
    }
    SweepRow r;
    r.sigma2_A_true = parse_number(f[0], line_no);
    r.estimator = f[1];
    r.mean_sigma2_A = parse_number(f[2], line_no);
    r.bias = parse_number(f[3], line_no);
    r.sd = parse_number(f[4], line_no);
    r.q25 = parse_number(f[5], line_no);
    r.q75 = parse_number(f[6], line_no);
    r.mean_omega2 = parse_number(f[7], line_no);
    r.omega2_true = parse_number(f[8], line_no);
    r.n_fail = static_cast<std::size_t>(parse_number(f[9], line_no));
    r.n_reps = static_cast<std::size_t>(parse_number(f[10], line_no));
    r.alpha_realized = parse_number(f[11], line_no);
    rows.push_back(std::move(r));
  }
  return rows;
}

PredictionSummary run_prediction_check(const PredictionConfig& cfg) {
  if (cfg.m > cfg.population) throw Error(ErrorCode::InvalidParameter, "need m <= M");
  if (cfg.replicates < 2) throw Error(ErrorCode::InvalidParameter, "need at least 2 replicates");
  if (!(cfg.sigma2_A >= 0.0) || !(cfg.perturbation_sd >= 0.0)) {
    throw Error(ErrorCode::InvalidParameter, "variances must be >= 0");
  }
  cfg.noise.validate();
  const auto d = make_random_design(cfg.m, cfg.n, cfg.seed);
  const Eigen::MatrixXd corr = cfg.noise.correlation(d);
  const double s2 = cfg.sigma2_eps * cfg.noise.natural_variance();
  const NoiseSampler sampler(corr, s2);

  PredictionSummary out;
  out.replicates = cfg.replicates;
  out.noise_level = noise_level(corr, d, s2);
  out.omega2 = make_truth(cfg.sigma2_A, out.noise_level).omega2;
  double trace_b = 0.0;
  for (std::size_t j = 0; j < d.m(); ++j) {
    for (std::size_t t : d.slots(j)) {
      for (std::size_t u : d.slots(j)) trace_b += corr(t, u);
    }
  }
  trace_b /= static_cast<double>(d.n());
  out.uncentered_mspe = s2 * trace_b / static_cast<double>((d.m() - 1) * d.n());

  const std::size_t m = d.m();
  const double n = static_cast<double>(d.n());
  std::vector<double> mspe(cfg.replicates), corr2(cfg.replicates), perturbed(cfg.replicates);
  parallel_for(cfg.replicates, cfg.threads, [&](std::size_t r) {
    auto engine = make_engine(cfg.seed, kPredictionStream, r);
    std::normal_distribution<double> normal;
    std::vector<double> mu(cfg.population);
    for (double& v : mu) v = normal(engine);
    const double mean = std::accumulate(mu.begin(), mu.end(), 0.0) / mu.size();
    double ss = 0.0;
    for (double& v : mu) {
      v -= mean;
      ss += v * v;
    }
    const double scale =
        ss > 0.0 ? std::sqrt(cfg.sigma2_A * static_cast<double>(cfg.population - 1) / ss) : 0.0;
    for (double& v : mu) v *= scale;

    std::vector<std::size_t> index(cfg.population);
    std::iota(index.begin(), index.end(), 0);
    std::vector<std::size_t> s;
    s.reserve(m);
    std::sample(index.begin(), index.end(), std::back_inserter(s), m, engine);

    std::vector<double> eps(d.T());
    sampler.draw(engine, eps);
    if (cfg.center_noise) {
      const double e_mean = std::accumulate(eps.begin(), eps.end(), 0.0) / eps.size();
      for (double& v : eps) v -= e_mean;
    }
    std::vector<double> ybar(m, 0.0);
    for (std::size_t t = 0; t < d.T(); ++t) ybar[d.stimulus(t)] += mu[s[d.stimulus(t)]] + eps[t];
    for (double& v : ybar) v /= n;

    std::normal_distribution<double> perturb(0.0, cfg.perturbation_sd);
    double sq = 0.0, sq_p = 0.0;
    double f_mean = 0.0, y_mean = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double f = mu[s[j]];
      const double fp = f + (cfg.perturbation_sd > 0.0 ? perturb(engine) : 0.0);
      sq += (f - ybar[j]) * (f - ybar[j]);
      sq_p += (fp - ybar[j]) * (fp - ybar[j]);
      f_mean += f;
      y_mean += ybar[j];
    }
    f_mean /= static_cast<double>(m);
    y_mean /= static_cast<double>(m);
    double sfy = 0.0, sff = 0.0, syy = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double a = mu[s[j]] - f_mean;
      const double b = ybar[j] - y_mean;
      sfy += a * b;
      sff += a * a;
      syy += b * b;
    }
    mspe[r] = sq / static_cast<double>(m - 1);
    perturbed[r] = sq_p / static_cast<double>(m - 1);
    corr2[r] = (sff > 0.0 && syy > 0.0) ? sfy * sfy / (sff * syy) : 0.0;
  });

  auto summarize = [](const std::vector<double>& v, double& mean, double& se) {
    const double count = static_cast<double>(v.size());
    mean = std::accumulate(v.begin(), v.end(), 0.0) / count;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    se = std::sqrt(ss / (count - 1.0) / count);
  };
  summarize(mspe, out.mean_mspe, out.se_mspe);
  summarize(corr2, out.mean_corr2, out.se_corr2);
  summarize(perturbed, out.mean_mspe_perturbed, out.se_mspe_perturbed);
  return out;
}

}  // namespace shufflevar
