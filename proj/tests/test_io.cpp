#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "shufflevar/error.hpp"
#include "shufflevar/io.hpp"

using namespace shufflevar;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("shufflevar_io_" + name)).string();
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("parse_dataset") {
  std::istringstream in(
      "t,stimulus,block,v1,v2\n"
      "2,a,1,2.5,0\n"
      "1,a,1,1.5,1e-3\n"
      "# comment\n"
      "3,b,2,-4,2\n"
      "4,b,2,+7,3\n");
  const auto d = parse_dataset(in);
  CHECK(d.design.T() == 4);
  CHECK(d.design.m() == 2);
  CHECK(d.design.has_blocks());
  CHECK(d.series_ids == std::vector<std::string>{"v1", "v2"});
  CHECK(d.series[0] == std::vector<double>{1.5, 2.5, -4.0, 7.0});
  CHECK(d.series[1][0] == 1e-3);
  CHECK(d.warnings.empty());

  std::istringstream no_block("t,stimulus,v\n1,a,1\n2,b,2\n3,a,3\n4,b,4\n");
  const auto nb = parse_dataset(no_block);
  CHECK_FALSE(nb.design.has_blocks());
  CHECK(nb.warnings.size() == 1);
}

TEST_CASE("parse errors carry line numbers") {
  auto message = [](const std::string& text) {
    std::istringstream in(text);
    try {
      parse_dataset(in, "data.csv");
    } catch (const Error& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("t,stimulus,v\n1,a,1\n2,b,x\n").find("data.csv:3") != std::string::npos);
  CHECK(message("t,stimulus,v\n1,a,1\n2,b\n").find("data.csv:3") != std::string::npos);
  CHECK(message("t,stimulus,v\n1,a,1\n1,b,2\n").find("duplicate") != std::string::npos);
  CHECK(message("t,stimulus,v\n1,a,1\n5,b,2\n").find("data.csv:3") != std::string::npos);
  CHECK(message("time,stim,v\n1,a,1\n").find("data.csv:1") != std::string::npos);
  std::istringstream inf("t,stimulus,v\n1,a,inf\n2,b,1\n");
  CHECK(code_of([&] { parse_dataset(inf); }) == ErrorCode::NonFinite);
  std::istringstream unbalanced("t,stimulus,v\n1,a,1\n2,a,1\n3,b,1\n");
  CHECK(code_of([&] { parse_dataset(unbalanced); }) == ErrorCode::UnbalancedDesign);
}

TEST_CASE("dataset round trip is bit exact") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  std::vector<std::string> s, b;
  for (int t = 0; t < 24; ++t) {
    s.push_back(std::string(1, static_cast<char>('a' + t % 6)));
    b.push_back(t < 12 ? "first" : "second");
  }
  Dataset data{DesignSchedule::build(s, b), {"x", "y"}, {}, {}};
  for (int k = 0; k < 2; ++k) {
    std::vector<double> v(24);
    for (double& x : v) x = normal(rng) * std::pow(10.0, k * 7);
    data.series.push_back(v);
  }
  data.series[0][3] = 0.1;
  data.series[0][4] = -0.0;
  data.series[0][5] = 5e-324;
  const auto path = temp_path("roundtrip.csv");
  write_dataset(path, data);
  const auto back = read_dataset(path);
  std::filesystem::remove(path);
  CHECK(back.series_ids == data.series_ids);
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t t = 0; t < 24; ++t) {
      CHECK(std::memcmp(&back.series[k][t], &data.series[k][t], sizeof(double)) == 0);
    }
  }
  for (std::size_t t = 0; t < 24; ++t) {
    CHECK(back.design.stimulus_labels()[back.design.stimulus(t)] == s[t]);
    CHECK(back.design.block_labels()[back.design.block(t)] == b[t]);
  }
}

TEST_CASE("permutation specs and files") {
  CHECK(parse_permutation_spec("reverse").family == PermutationFamily::Reverse);
  const auto sh = parse_permutation_spec("shift:7");
  CHECK(sh.family == PermutationFamily::CyclicShift);
  CHECK(sh.shift == 7);
  CHECK(sh.describe() == "shift:7");
  CHECK(parse_permutation_spec("block-random").family == PermutationFamily::BlockRandom);
  CHECK(parse_permutation_spec("odd-even").family == PermutationFamily::OddEven);
  CHECK(parse_permutation_spec("file:/tmp/p.txt").path == "/tmp/p.txt");
  CHECK_THROWS_AS(parse_permutation_spec("sideways"), Error);
  CHECK_THROWS_AS(parse_permutation_spec("shift:x"), Error);

  const auto path = temp_path("perm.txt");
  {
    std::ofstream out(path);
    out << "# reverse of 4\n4\n3\n\n2\n1\n";
  }
  const auto d = DesignSchedule::build(std::vector<std::string>{"a", "b", "a", "b"});
  const auto p = build_permutation(parse_permutation_spec("file:" + path), d, 1);
  CHECK(std::vector<std::size_t>(p.mapping().begin(), p.mapping().end()) ==
        std::vector<std::size_t>{3, 2, 1, 0});
  {
    std::ofstream out(path);
    out << "1\n1\n2\n3\n";
  }
  CHECK(code_of([&] { read_permutation_file(path, 4); }) == ErrorCode::InvalidPermutation);
  {
    std::ofstream out(path);
    out << "1\n2\n";
  }
  CHECK(code_of([&] { read_permutation_file(path, 4); }) == ErrorCode::LengthMismatch);
  {
    std::ofstream out(path);
    out << "0\n1\n2\n3\n";
  }
  CHECK(code_of([&] { read_permutation_file(path, 4); }) == ErrorCode::ParseError);
  std::filesystem::remove(path);
}

TEST_CASE("noise models and estimator lists") {
  CHECK(parse_noise_model("iid").family == NoiseFamily::Iid);
  const auto e = parse_noise_model("exp_nugget:0.7,30");
  CHECK(e.family == NoiseFamily::ExpNugget);
  CHECK(e.lambda1 == 0.7);
  CHECK(e.lambda2 == 30.0);
  const auto b = parse_noise_model("block:0.5,0.7");
  CHECK(b.sigma2_b == 0.5);
  CHECK(b.sigma2_e == 0.7);
  const auto a = parse_noise_model("ar:0.5,-0.2,0.1");
  CHECK(a.ar == std::vector<double>{0.5, -0.2, 0.1});
  CHECK_THROWS_AS(parse_noise_model("ar:1.5"), Error);
  CHECK_THROWS_AS(parse_noise_model("exp_nugget:0.7"), Error);
  CHECK_THROWS_AS(parse_noise_model("pink"), Error);

  const auto list = parse_estimators("shuffle,mom,reml:exp_nugget,reml:ar2,shuffle_avg");
  REQUIRE(list.size() == 5);
  CHECK(list[0].name() == "shuffle");
  CHECK(list[1].name() == "mom");
  CHECK(list[2].name() == "reml:exp_nugget");
  CHECK(list[3].name() == "reml:ar2");
  CHECK(list[4].name() == "shuffle_avg");
  CHECK_THROWS_AS(parse_estimators("bayes"), Error);
  CHECK_THROWS_AS(parse_estimators("reml:ar7"), Error);
}

TEST_CASE("config files") {
  std::istringstream in(
      "# sweep\n"
      "[simulate]\n"
      "preset = fig5b\n"
      "replicates = 20\n"
      "grid = 0, 0.5\n"
      "estimators = shuffle,mom\n"
      "[other]\n"
      "x=1\n");
  const auto cfg = parse_config(in);
  REQUIRE(cfg.count("simulate") == 1);
  const auto sweep = apply_sweep_settings(SweepConfig{}, cfg.at("simulate"));
  CHECK(sweep.replicates == 20);
  CHECK(sweep.grid == std::vector<double>{0.0, 0.5});
  CHECK(sweep.noise.lambda2 == 30.0);
  CHECK(sweep.estimators.size() == 2);
  const auto lines = describe_sweep(sweep);
  CHECK(std::find(lines.begin(), lines.end(), "replicates=20") != lines.end());
  CHECK(std::find(lines.begin(), lines.end(), "noise=exp_nugget:0.7,30") != lines.end());

  std::istringstream bad("[simulate]\nno equals sign\n");
  CHECK(code_of([&] { parse_config(bad); }) == ErrorCode::ParseError);
  CHECK_THROWS_AS(apply_sweep_settings(SweepConfig{}, {{"colour", "red"}}), Error);
  CHECK(sweep_preset("fig6").replicates == 200);
  CHECK_THROWS_AS(sweep_preset("fig9"), Error);
}

TEST_CASE("estimate_dataset") {
  const auto d = DesignSchedule::build(std::vector<std::string>{"a", "a", "b", "b", "a", "b"});
  Dataset data{d, {"s1", "s2", "flat"}, {}, {}};
  data.series.push_back({1, 2, 5, 7, 3, 6});
  data.series.push_back({0.3, -1, 2, 2.5, 0.1, 4});
  data.series.push_back(std::vector<double>(6, 4.0));
  EstimateRequest request;
  request.estimators = parse_estimators("shuffle,mom");
  const auto rows = estimate_dataset(data, request);
  REQUIRE(rows.size() == 6);
  CHECK(rows[0].series_id == "s1");
  CHECK(rows[0].estimate.method == "shuffle");
  CHECK(rows[1].estimate.method == "mom");
  CHECK(*rows[0].estimate.alpha == doctest::Approx(1.0 / 9.0));
  CHECK(*rows[2].estimate.alpha == doctest::Approx(1.0 / 9.0));
  CHECK(rows[4].estimate.omega2 == 0.0);
  CHECK(rows[4].estimate.flags.degenerate);

  request.permutations = {parse_permutation_spec("identity")};
  request.estimators = parse_estimators("shuffle");
  const auto trivial = estimate_dataset(data, request);
  REQUIRE(trivial.size() == 3);
  CHECK(trivial[0].estimate.flags.trivial_permutation);
  CHECK(std::isnan(trivial[0].estimate.sigma2_A));
  CHECK_FALSE(trivial[0].error.empty());

  std::ostringstream out;
  write_estimates(out, trivial, {"seed=1"});
  const auto text = out.str();
  CHECK(text.rfind("# seed=1\nseries_id,method,alpha,sigma2_A_raw,sigma2_A,noise_level,ms_between,omega2,flags\n", 0) == 0);
  CHECK(text.find("s1,shuffle,1,NA,NA,NA,") != std::string::npos);
  CHECK(text.find("trivial_permutation") != std::string::npos);
}
