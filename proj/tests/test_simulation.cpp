#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "shufflevar/error.hpp"
#include "shufflevar/simulation.hpp"

using namespace shufflevar;

namespace {

SweepConfig small_sweep() {
  SweepConfig c = SweepConfig::fig5b();
  c.m = 12;
  c.n = 4;
  c.noise = CovarianceModel::exp_nugget(0.7, 5.0);
  c.grid = {0.0, 0.5};
  c.replicates = 60;
  c.seed = 99;
  c.estimators = {EstimatorChoice::shuffle(), EstimatorChoice::mom()};
  return c;
}

bool same(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

void check_rows_equal(const std::vector<SweepRow>& a, const std::vector<SweepRow>& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(same(a[i].sigma2_A_true, b[i].sigma2_A_true));
    CHECK(a[i].estimator == b[i].estimator);
    CHECK(same(a[i].mean_sigma2_A, b[i].mean_sigma2_A));
    CHECK(same(a[i].bias, b[i].bias));
    CHECK(same(a[i].sd, b[i].sd));
    CHECK(same(a[i].q25, b[i].q25));
    CHECK(same(a[i].q75, b[i].q75));
    CHECK(same(a[i].mean_omega2, b[i].mean_omega2));
    CHECK(same(a[i].omega2_true, b[i].omega2_true));
    CHECK(a[i].n_fail == b[i].n_fail);
    CHECK(a[i].n_reps == b[i].n_reps);
    CHECK(same(a[i].alpha_realized, b[i].alpha_realized));
  }
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("shufflevar_" + name)).string();
}

}  // namespace

TEST_CASE("designs") {
  const auto b = make_block_design(120, 15, 20, 3);
  CHECK(b.T() == 1800);
  CHECK(b.m() == 120);
  CHECK(b.num_blocks() == 20);
  // Every stimulus lives in exactly one block.
  for (std::size_t j = 0; j < b.m(); ++j) {
    const auto slots = b.slots(j);
    for (std::size_t t : slots) CHECK(b.block(t) == b.block(slots[0]));
  }
  CHECK_THROWS_AS(make_block_design(10, 2, 3, 1), Error);
  const auto r = make_random_design(7, 3, 5);
  CHECK(r.T() == 21);
  CHECK_FALSE(r.has_blocks());
  const auto again = make_random_design(7, 3, 5);
  CHECK(std::equal(again.stimuli().begin(), again.stimuli().end(), r.stimuli().begin()));
}

TEST_CASE("presets") {
  const auto a = SweepConfig::fig5a();
  CHECK(a.kind == SweepKind::Block);
  CHECK(a.noise.sigma2_b == 0.5);
  CHECK(a.noise.sigma2_e == 0.7);
  CHECK(a.grid.size() == 10);
  CHECK(a.replicates == 1000);
  CHECK(a.permutation == PermutationFamily::BlockRandom);
  const auto b = SweepConfig::fig5b();
  CHECK(b.noise.lambda1 == 0.7);
  CHECK(b.noise.lambda2 == 30.0);
  CHECK(b.permutation == PermutationFamily::Reverse);
  const auto c = SweepConfig::fig6();
  CHECK(c.grid == std::vector<double>{0.0, 0.2, 0.4, 0.6, 0.8});
  REQUIRE(c.estimators.size() == 2);
  CHECK(c.estimators[1].name() == "reml:exp_nugget");
}

TEST_CASE("sweep result is independent of the thread count") {
  auto cfg = small_sweep();
  cfg.threads = 1;
  const auto one = run_sweep(cfg);
  cfg.threads = 4;
  const auto four = run_sweep(cfg);
  check_rows_equal(one.rows, four.rows);
  CHECK(one.rows.size() == cfg.grid.size() * cfg.estimators.size());
  for (const auto& row : one.rows) {
    CHECK(row.q25 <= row.q75);
    CHECK(row.n_reps == cfg.replicates);
    CHECK(row.alpha_realized == one.alpha);
  }
}

TEST_CASE("edge cases") {
  auto cfg = small_sweep();
  cfg.replicates = 1;
  const auto single = run_sweep(cfg);
  for (const auto& row : single.rows) CHECK(std::isnan(row.sd));

  cfg = small_sweep();
  cfg.grid = {0.0};
  cfg.sigma2_eps = 0.0;
  const auto quiet = run_sweep(cfg);
  for (const auto& row : quiet.rows) {
    CHECK(row.mean_sigma2_A == 0.0);
    CHECK(row.q75 == 0.0);
    CHECK(row.mean_omega2 == 0.0);
  }

  cfg = small_sweep();
  cfg.permutation = PermutationFamily::Identity;
  CHECK_THROWS_AS(run_sweep(cfg), Error);
  cfg = small_sweep();
  cfg.replicates = 0;
  CHECK_THROWS_AS(run_sweep(cfg), Error);
  CHECK_THROWS_AS(run_block_sweep(small_sweep()), Error);
  CHECK_THROWS_AS(run_reml_comparison(small_sweep()), Error);
}

TEST_CASE("sweep CSV round trip") {
  auto cfg = small_sweep();
  cfg.replicates = 1;  // leaves NA in the sd column
  const auto result = run_sweep(cfg);
  const auto path = temp_path("sweep.csv");
  write_sweep_csv(result, path, {"seed=99"});
  check_rows_equal(read_sweep_csv(path), result.rows);

  SweepResult empty;
  write_sweep_csv(empty, path);
  std::ifstream in(path);
  std::string header, extra;
  std::getline(in, header);
  CHECK(header.rfind("sigma2_A_true,estimator,", 0) == 0);
  CHECK(header.find("seed") == std::string::npos);
  CHECK_FALSE(std::getline(in, extra));
  CHECK(read_sweep_csv(path).empty());
  std::filesystem::remove(path);

  CHECK_THROWS_AS(read_sweep_csv(temp_path("missing.csv")), Error);
}

TEST_CASE("mean MS_between across replicates matches the analytic total") {
  auto cfg = SweepConfig::fig5b();
  cfg.m = 40;
  cfg.n = 6;
  const auto d = sweep_design(cfg);
  const Eigen::MatrixXd corr = cfg.noise.correlation(d);
  const NoiseSampler sampler(corr, 1.0);
  const double level = noise_level(corr, d, 1.0);
  const std::size_t R = 2000;
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t r = 0; r < R; ++r) {
    const auto e = sample_experiment(d, 0.3, sampler, level, 8, 1, r);
    CHECK(e.truth.total == e.truth.sigma2_A + e.truth.noise_level);
    const double ms = ms_between(e.y, d);
    sum += ms;
    sum_sq += ms * ms;
  }
  const double mean = sum / R;
  const double se = std::sqrt((sum_sq / R - mean * mean) / (R - 1));
  CHECK(std::abs(mean - (0.3 + level)) <= 3.0 * se);
}

TEST_CASE("prediction check") {
  PredictionConfig cfg;
  cfg.replicates = 2000;
  const auto p = run_prediction_check(cfg);
  CHECK(std::abs(p.mean_mspe - p.noise_level) <= 3.0 * p.se_mspe);
  CHECK(std::abs(p.mean_corr2 - p.omega2) <= 1.0 / 119.0 + 3.0 * p.se_corr2);
  CHECK(p.mean_mspe_perturbed >= p.mean_mspe);

  // Without centering the noise mean leaks into every treatment average.
  cfg.center_noise = false;
  const auto raw = run_prediction_check(cfg);
  CHECK(raw.uncentered_mspe > raw.noise_level);
  CHECK(std::abs(raw.mean_mspe - raw.uncentered_mspe) <= 3.0 * raw.se_mspe);
  CHECK(std::abs(raw.mean_mspe - raw.noise_level) > 3.0 * raw.se_mspe);

  cfg.m = 3000;
  CHECK_THROWS_AS(run_prediction_check(cfg), Error);
}
