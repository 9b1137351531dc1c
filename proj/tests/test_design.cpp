#include <doctest.h>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "dense_oracle.hpp"
#include "shufflevar/design.hpp"
#include "shufflevar/error.hpp"

using namespace shufflevar;

namespace {

DesignSchedule design_of(std::vector<std::string> labels) { return DesignSchedule::build(labels); }

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("build_design derives T, m, n") {
  const auto d = design_of({"a", "a", "b", "b"});
  CHECK(d.T() == 4);
  CHECK(d.m() == 2);
  CHECK(d.n() == 2);
  CHECK(d.stimulus(0) == 0);
  CHECK(d.stimulus(3) == 1);
  CHECK_FALSE(d.has_blocks());
}

TEST_CASE("build_design rejects unbalanced and degenerate schedules") {
  CHECK(code_of([] { design_of({"a", "a", "b"}); }) == ErrorCode::UnbalancedDesign);
  CHECK(code_of([] { design_of({"a", "a"}); }) == ErrorCode::DegenerateDesign);
  CHECK(code_of([] { design_of({}); }) == ErrorCode::DegenerateDesign);
  const std::vector<std::string> s{"a", "b"};
  const std::vector<std::string> b{"1"};
  CHECK(code_of([&] { DesignSchedule::build(s, b); }) == ErrorCode::LengthMismatch);
}

TEST_CASE("validation-sized schedule: 120 stimuli x 13 repeats") {
  std::vector<int> s;
  for (int r = 0; r < 13; ++r) {
    for (int j = 0; j < 120; ++j) s.push_back(j);
  }
  const auto d = DesignSchedule::from_indices(s);
  CHECK(d.T() == 1560);
  CHECK(d.m() == 120);
  CHECK(d.n() == 13);
}

TEST_CASE("blocks are indexed by first appearance") {
  const std::vector<std::string> s{"a", "b", "a", "b", "c", "c"};
  const std::vector<std::string> b{"x", "x", "x", "x", "y", "y"};
  const auto d = DesignSchedule::build(s, b);
  CHECK(d.has_blocks());
  CHECK(d.num_blocks() == 2);
  CHECK(d.block(4) == 1);
  CHECK(d.slots(2)[0] == 4);
}

TEST_CASE("treatment_averages") {
  const auto d = design_of({"a", "a", "b", "b"});
  const std::vector<double> y{1, 2, 3, 4};
  const auto avg = treatment_averages(y, d);
  CHECK(avg == std::vector<double>{1.5, 3.5});

  const std::vector<double> c(4, 2.25);
  CHECK(treatment_averages(c, d) == std::vector<double>{2.25, 2.25});

  const auto single = design_of({"p", "q", "r"});
  const std::vector<double> z{0.5, -1.0, 7.0};
  CHECK(treatment_averages(z, single) == z);

  const std::vector<double> short_y{1, 2, 3};
  CHECK(code_of([&] { treatment_averages(short_y, d); }) == ErrorCode::LengthMismatch);
}

TEST_CASE("B replicates treatment averages per slot") {
  const auto d = design_of({"a", "b", "a", "c", "b", "c"});
  const std::vector<double> y{1, 5, 3, -2, 7, 4};
  const Eigen::VectorXd by = d.averaging_matrix() * oracle::to_vector(y);
  const auto avg = treatment_averages(y, d);
  for (std::size_t t = 0; t < d.T(); ++t) CHECK(by(t) == doctest::Approx(avg[d.stimulus(t)]));
}

TEST_CASE("ms_between examples") {
  const auto d = design_of({"a", "a", "b", "b"});
  const std::vector<double> y{1, 2, 3, 4};
  CHECK(ms_between(y, d) == 2.0);
  const std::vector<double> c(4, 0.1);
  CHECK(ms_between(c, d) == 0.0);
  const std::vector<double> shifted{11, 12, 13, 14};
  CHECK(ms_between(shifted, d) == 2.0);
}

TEST_CASE("ms_within examples") {
  const auto d = design_of({"a", "a", "b", "b"});
  const std::vector<double> y{1, 2, 3, 4};
  CHECK(ms_within(y, d) == 0.5);
  const std::vector<double> same{3, 3, -1, -1};
  CHECK(ms_within(same, d) == 0.0);
  const auto d6 = design_of({"a", "a", "a", "b", "b", "b"});
  const std::vector<double> z{0, 2, 0, 0, 2, 0};
  CHECK(ms_within(z, d6) == doctest::Approx(4.0 / 3.0).epsilon(1e-14));
  const auto single = design_of({"p", "q"});
  const std::vector<double> w{1, 2};
  CHECK(code_of([&] { ms_within(w, single); }) == ErrorCode::NoReplication);
}

TEST_CASE("MeasurementSeries rejects non-finite values") {
  CHECK(code_of([] { MeasurementSeries("v", {1.0, NAN}); }) == ErrorCode::NonFinite);
  CHECK(code_of([] { MeasurementSeries("v", {INFINITY}); }) == ErrorCode::NonFinite);
  CHECK(MeasurementSeries("v", {1.0, 2.0}).size() == 2);
}

TEST_CASE("property: ms_between equals the quadratic form") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 2 + rng() % 8;
    const std::size_t n = 1 + rng() % 6;
    const auto d = oracle::random_design(rng, m, n);
    auto y = oracle::random_series(rng, d.T());
    for (double& v : y) v = 3.0 * v + 10.0;
    const double direct = ms_between(y, d);
    const double quad = oracle::ms_between_quadratic(y, d);
    CHECK(std::abs(direct - quad) <= 1e-10 * std::max(1.0, std::abs(quad)));
  }
}

TEST_CASE("property: shift invariance and scale equivariance of ms_between") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> shift(-50.0, 50.0);
  for (int trial = 0; trial < 50; ++trial) {
    const auto d = oracle::random_design(rng, 2 + rng() % 6, 1 + rng() % 5);
    const auto y = oracle::random_series(rng, d.T());
    const double base = ms_between(y, d);

    auto moved = y;
    const double c = shift(rng);
    for (double& v : moved) v += c;
    CHECK(ms_between(moved, d) == doctest::Approx(base).epsilon(1e-11));

    // Powers of two scale exactly in floating point.
    auto scaled = y;
    for (double& v : scaled) v *= 4.0;
    CHECK(ms_between(scaled, d) == 16.0 * base);

    auto general = y;
    for (double& v : general) v *= -2.7;
    CHECK(ms_between(general, d) == doctest::Approx(2.7 * 2.7 * base).epsilon(1e-12));
  }
}

TEST_CASE("shift invariance is exact when the shift is representable") {
  const auto d = design_of({"a", "b", "a", "c", "b", "c"});
  const std::vector<double> y{1, 5, 3, -2, 7, 4};
  auto moved = y;
  for (double& v : moved) v += 1024.0;
  CHECK(ms_between(moved, d) == ms_between(y, d));
}

TEST_CASE("dense B is symmetric, idempotent, and tr(B - G) = m - 1") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t m = 2 + rng() % 6;
    const auto d = oracle::random_design(rng, m, 1 + rng() % 4);
    const Eigen::MatrixXd b = d.averaging_matrix();
    CHECK((b - b.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((b * b - b).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((b - d.global_average_matrix()).trace() == doctest::Approx(double(m - 1)));
    const Eigen::MatrixXd x = d.design_matrix();
    CHECK((x * x.transpose() / double(d.n()) - b).cwiseAbs().maxCoeff() < 1e-15);
  }
}
