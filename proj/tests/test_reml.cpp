#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <vector>

#include "dense_oracle.hpp"
#include "shufflevar/error.hpp"
#include "shufflevar/estimators.hpp"
#include "shufflevar/noise_models.hpp"
#include "shufflevar/reml.hpp"

using namespace shufflevar;

TEST_CASE("structured restricted likelihood matches the dense oracle") {
  std::mt19937_64 rng(101);
  const auto d = oracle::random_design(rng, 7, 5);
  const auto y = oracle::random_series(rng, d.T());

  struct Case {
    RemlSpec spec;
    std::vector<double> theta;
  };
  const std::vector<Case> cases{
      {{RemlFamily::Iid, 3}, {}},
      {{RemlFamily::ExpNugget, 3}, {0.7, 6.0}},
      {{RemlFamily::ExpNugget, 3}, {0.999, 40.0}},
      {{RemlFamily::ExpNugget, 3}, {0.05, 0.3}},
      {{RemlFamily::Autoregressive, 1}, {0.6}},
      {{RemlFamily::Autoregressive, 2}, {0.4, 0.3}},
      {{RemlFamily::Autoregressive, 3}, {0.5, -0.2, 0.1}},
  };
  for (const auto& c : cases) {
    CAPTURE(c.spec.name());
    const auto corr = reml_correlation(c.spec, c.theta, d.T());
    CHECK(corr.diagonal().isOnes());
    for (double s2a : {0.0, 0.3, 2.0}) {
      for (double s2e : {0.5, 1.7}) {
        const double fast = reml_log_likelihood(y, d, c.spec, s2a, s2e, c.theta);
        const double dense = oracle::reml_loglik_dense(y, d, s2a, s2e, corr);
        CHECK(fast == doctest::Approx(dense).epsilon(1e-9));
      }
    }
  }
  CHECK(reml_log_likelihood(y, d, {RemlFamily::Autoregressive, 1}, 0.3, 1.0,
                            std::vector<double>{1.1}) == -std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(reml_log_likelihood(y, d, {RemlFamily::Iid, 3}, 0.3, 0.0, {}), Error);
  CHECK_THROWS_AS(reml_log_likelihood(y, d, {RemlFamily::ExpNugget, 3}, 0.3, 1.0,
                                      std::vector<double>{0.5}),
                  Error);
}

TEST_CASE("iid REML reproduces the moment estimator") {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 5; ++rep) {
    const auto d = oracle::random_design(rng, 12, 6);
    const NoiseSampler iid(Eigen::MatrixXd::Identity(d.T(), d.T()), 1.0);
    const auto e = sample_experiment(d, 0.8, iid, 1.0 / 6.0, 3, 0, rep);
    const auto mom = mom_estimate(e.y, d);
    REQUIRE(mom.sigma2_A_raw > 0.0);
    const auto fit = reml_estimate(e.y, d, {RemlFamily::Iid, 3});
    CHECK(fit.fit.converged);
    CHECK(fit.fit.sigma2_A == doctest::Approx(mom.sigma2_A_raw).epsilon(1e-6));
    CHECK(fit.fit.sigma2_eps == doctest::Approx(contrasts(e.y, d).ms_within).epsilon(1e-6));
    CHECK(fit.estimate.method == "reml:iid");
    CHECK(fit.estimate.noise_level == doctest::Approx(fit.fit.sigma2_eps / 6.0).epsilon(1e-12));
    CHECK(fit.fit.log_restricted_likelihood ==
          doctest::Approx(reml_log_likelihood(e.y, d, {RemlFamily::Iid, 3}, fit.fit.sigma2_A,
                                              fit.fit.sigma2_eps, {})));
  }
}

TEST_CASE("REML fits are deterministic and bounded") {
  std::mt19937_64 rng(19);
  const auto d = oracle::random_design(rng, 20, 6);
  const auto e = sample_experiment(d, 0.4, CovarianceModel::exp_nugget(0.7, 10.0), 1.0, 4);
  const RemlSpec spec{RemlFamily::ExpNugget, 3};
  const auto a = reml_estimate(e.y, d, spec);
  const auto b = reml_estimate(e.y, d, spec);
  CHECK(a.fit.sigma2_A == b.fit.sigma2_A);
  CHECK(a.fit.theta == b.fit.theta);
  CHECK(a.fit.theta[0] > 0.0);
  CHECK(a.fit.theta[0] < 1.0);
  CHECK(a.fit.theta[1] > 0.0);
  CHECK(a.fit.sigma2_A >= 0.0);
  CHECK(std::isfinite(a.fit.log_restricted_likelihood));
  // Best over starts is at least as good as the start-0 fit alone.
  RemlOptions one;
  one.starts = 1;
  const auto single = reml_estimate(e.y, d, spec, one);
  CHECK(a.fit.log_restricted_likelihood >= single.fit.log_restricted_likelihood - 1e-9);

  const auto ar = reml_estimate(e.y, d, {RemlFamily::Autoregressive, 2});
  CHECK(ar_is_stationary(ar.fit.theta));
  CHECK(ar.estimate.method == "reml:ar2");

  RemlOptions tight;
  tight.max_evaluations = 10;
  const auto capped = reml_estimate(e.y, d, spec, tight);
  CHECK_FALSE(capped.fit.converged);
  CHECK(capped.estimate.flags.non_converged);
}

TEST_CASE("SizeGuard") {
  std::mt19937_64 rng(1);
  const auto d = oracle::random_design(rng, 10, 5);
  const auto y = oracle::random_series(rng, d.T());
  RemlOptions options;
  options.max_T = 49;
  try {
    reml_estimate(y, d, {RemlFamily::Iid, 3}, options);
    FAIL("expected SizeGuard");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SizeGuard);
  }
  CHECK_THROWS_AS(reml_estimate(y, d, {RemlFamily::Autoregressive, 4}), Error);
}

TEST_CASE("exp_nugget REML recovers the signal at paper scale") {
  std::vector<int> s;
  for (int r = 0; r < 15; ++r) {
    for (int j = 0; j < 120; ++j) s.push_back(j);
  }
  std::mt19937_64 rng(2);
  std::shuffle(s.begin(), s.end(), rng);
  const auto d = DesignSchedule::from_indices(s);
  const auto model = CovarianceModel::exp_nugget(0.7, 30.0);
  const Eigen::MatrixXd corr = model.correlation(d);
  const NoiseSampler sampler(corr, 1.0);
  const double level = noise_level(corr, d, 1.0);
  const std::size_t R = 200;
  std::vector<double> est;
  std::size_t failed = 0;
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < R; ++i) {
    const auto e = sample_experiment(d, 0.4, sampler, level, 23, 0, i);
    const auto fit = reml_estimate(e.y, d, {RemlFamily::ExpNugget, 3});
    if (!fit.fit.converged) ++failed;
    est.push_back(fit.fit.sigma2_A);
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  MESSAGE("REML fits: " << R << " in " << seconds << " s, non-converged " << failed);
  std::nth_element(est.begin(), est.begin() + R / 2, est.end());
  const double median = est[R / 2];
  CHECK(std::abs(median - 0.4) <= 0.05);
}
