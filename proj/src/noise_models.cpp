#include "shufflevar/noise_models.hpp"

#include <charconv>
#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "shufflevar/error.hpp"
#include "shufflevar/permutations.hpp"

namespace shufflevar {

CovarianceModel CovarianceModel::iid() { return {}; }

CovarianceModel CovarianceModel::exp_nugget(double lambda1, double lambda2) {
  CovarianceModel m;
  m.family = NoiseFamily::ExpNugget;
  m.lambda1 = lambda1;
  m.lambda2 = lambda2;
  m.validate();
  return m;
}

CovarianceModel CovarianceModel::block(double sigma2_b, double sigma2_e) {
  CovarianceModel m;
  m.family = NoiseFamily::Block;
  m.sigma2_b = sigma2_b;
  m.sigma2_e = sigma2_e;
  m.validate();
  return m;
}

CovarianceModel CovarianceModel::autoregressive(std::vector<double> coefficients,
                                                double innovation_variance) {
  CovarianceModel m;
  m.family = NoiseFamily::Autoregressive;
  m.ar = std::move(coefficients);
  m.innovation_variance = innovation_variance;
  m.validate();
  return m;
}

void CovarianceModel::validate() const {
  switch (family) {
    case NoiseFamily::Iid:
      return;
    case NoiseFamily::ExpNugget:
      if (!(lambda1 >= 0.0 && lambda1 <= 1.0) || !(lambda2 > 0.0) || !std::isfinite(lambda2)) {
        throw Error(ErrorCode::InvalidParameter, "exp_nugget needs 0 <= lambda1 <= 1, lambda2 > 0");
      }
      return;
    case NoiseFamily::Block:
      if (!(sigma2_b >= 0.0) || !(sigma2_e >= 0.0) || sigma2_b + sigma2_e <= 0.0) {
        throw Error(ErrorCode::InvalidParameter, "block needs nonnegative variances, not both zero");
      }
      return;
    case NoiseFamily::Autoregressive:
      if (!(innovation_variance > 0.0)) {
        throw Error(ErrorCode::InvalidParameter, "AR innovation variance must be positive");
      }
      if (!ar_is_stationary(ar)) throw Error(ErrorCode::NonStationary, "AR coefficients");
      return;
  }
}

Eigen::MatrixXd CovarianceModel::correlation(const DesignSchedule& d) const {
  validate();
  switch (family) {
    case NoiseFamily::Iid:
      return Eigen::MatrixXd::Identity(d.T(), d.T());
    case NoiseFamily::ExpNugget:
      return cov_exp_nugget(d.T(), lambda1, lambda2);
    case NoiseFamily::Block:
      return cov_block(d, sigma2_b, sigma2_e) / (sigma2_b + sigma2_e);
    case NoiseFamily::Autoregressive:
      return cov_ar(d.T(), ar, innovation_variance);
  }
  return {};
}

double CovarianceModel::natural_variance() const {
  return family == NoiseFamily::Block ? sigma2_b + sigma2_e : 1.0;
}

namespace {

// Shortest text that reads back to the same double.
std::string shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string CovarianceModel::describe() const {
  switch (family) {
    case NoiseFamily::Iid:
      return "iid";
    case NoiseFamily::ExpNugget:
      return "exp_nugget:" + shortest(lambda1) + "," + shortest(lambda2);
    case NoiseFamily::Block:
      return "block:" + shortest(sigma2_b) + "," + shortest(sigma2_e);
    case NoiseFamily::Autoregressive: {
      std::string out = "ar:";
      for (std::size_t k = 0; k < ar.size(); ++k) out += (k ? "," : "") + shortest(ar[k]);
      return out;
    }
  }
  return "iid";
}

Eigen::MatrixXd cov_exp_nugget(std::size_t T, double lambda1, double lambda2) {
  if (!(lambda1 >= 0.0 && lambda1 <= 1.0) || !(lambda2 > 0.0)) {
    throw Error(ErrorCode::InvalidParameter, "exp_nugget needs 0 <= lambda1 <= 1, lambda2 > 0");
  }
  std::vector<double> rho(T);
  for (std::size_t k = 0; k < T; ++k) {
    rho[k] = lambda1 * std::exp(-static_cast<double>(k) / lambda2);
  }
  if (T > 0) rho[0] = 1.0;
  Eigen::MatrixXd s(T, T);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t u = 0; u < T; ++u) s(t, u) = rho[t > u ? t - u : u - t];
  }
  return s;
}

Eigen::MatrixXd cov_block(const DesignSchedule& d, double sigma2_b, double sigma2_e) {
  if (!d.has_blocks()) throw Error(ErrorCode::MissingBlocks, "block covariance needs block labels");
  if (!(sigma2_b >= 0.0) || !(sigma2_e >= 0.0) || sigma2_b + sigma2_e <= 0.0) {
    throw Error(ErrorCode::InvalidParameter, "block needs nonnegative variances, not both zero");
  }
  const std::size_t T = d.T();
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(T, T);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t u = 0; u < T; ++u) {
      if (d.block(t) == d.block(u)) s(t, u) = sigma2_b;
    }
    s(t, t) += sigma2_e;
  }
  return s;
}

bool ar_is_stationary(std::span<const double> coefficients) {
  const auto p = static_cast<Eigen::Index>(coefficients.size());
  if (p == 0) return true;
  for (double a : coefficients) {
    if (!std::isfinite(a)) return false;
  }
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index k = 0; k < p; ++k) companion(0, k) = coefficients[k];
  for (Eigen::Index k = 1; k < p; ++k) companion(k, k - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
  return solver.eigenvalues().cwiseAbs().maxCoeff() < 1.0 - 1e-12;
}

std::vector<double> ar_autocovariance(std::span<const double> coefficients,
                                      double innovation_variance, std::size_t max_lag) {
  if (!ar_is_stationary(coefficients)) throw Error(ErrorCode::NonStationary, "AR coefficients");
  const std::size_t p = coefficients.size();
  // Yule-Walker: gamma_k - sum_j a_j gamma_|k-j| = s2 1(k = 0), k = 0..p.
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(p + 1, p + 1);
  for (std::size_t k = 0; k <= p; ++k) {
    for (std::size_t j = 1; j <= p; ++j) {
      a(k, k > j ? k - j : j - k) -= coefficients[j - 1];
    }
  }
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p + 1);
  rhs(0) = innovation_variance;
  const Eigen::VectorXd head = a.partialPivLu().solve(rhs);
  std::vector<double> gamma(std::max(max_lag + 1, p + 1));
  for (std::size_t k = 0; k <= p; ++k) gamma[k] = head(k);
  for (std::size_t k = p + 1; k < gamma.size(); ++k) {
    double g = 0.0;
    for (std::size_t j = 1; j <= p; ++j) g += coefficients[j - 1] * gamma[k - j];
    gamma[k] = g;
  }
  gamma.resize(max_lag + 1);
  return gamma;
}

Eigen::MatrixXd cov_ar(std::size_t T, std::span<const double> coefficients,
                       double innovation_variance) {
  if (!(innovation_variance > 0.0)) {
    throw Error(ErrorCode::InvalidParameter, "AR innovation variance must be positive");
  }
  if (T == 0) return {};
  const auto gamma = ar_autocovariance(coefficients, innovation_variance, T - 1);
  Eigen::MatrixXd s(T, T);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t u = 0; u < T; ++u) s(t, u) = gamma[t > u ? t - u : u - t] / gamma[0];
  }
  s.diagonal().setOnes();
  return s;
}

double noise_level(const Eigen::MatrixXd& sigma, const DesignSchedule& d, double sigma2_eps) {
  return sigma2_eps * contrast_trace(sigma, d) / static_cast<double>((d.m() - 1) * d.n());
}

double contrast_trace_toeplitz(std::span<const double> rho, const DesignSchedule& d) {
  const std::size_t T = d.T();
  if (rho.size() != T) throw Error(ErrorCode::DimensionMismatch, "Toeplitz row must have length T");
  double within = 0.0;
  for (std::size_t j = 0; j < d.m(); ++j) {
    const auto slots = d.slots(j);
    for (std::size_t t : slots) {
      for (std::size_t u : slots) within += rho[t > u ? t - u : u - t];
    }
  }
  double all = static_cast<double>(T) * rho[0];
  for (std::size_t k = 1; k < T; ++k) all += 2.0 * static_cast<double>(T - k) * rho[k];
  return within / static_cast<double>(d.n()) - all / static_cast<double>(T);
}

ExperimentTruth make_truth(double sigma2_A, double noise_level_value) {
  ExperimentTruth truth;
  truth.sigma2_A = sigma2_A;
  truth.noise_level = noise_level_value;
  truth.total = sigma2_A + noise_level_value;
  if (truth.total > 0.0) {
    truth.omega2 = sigma2_A / truth.total;
  } else {
    truth.omega2 = 0.0;
    truth.degenerate = true;
  }
  return truth;
}

NoiseSampler::NoiseSampler(const Eigen::MatrixXd& sigma, double sigma2_eps)
    : sigma2_eps_(sigma2_eps) {
  if (sigma.rows() != sigma.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "covariance must be square");
  }
  if (!(sigma2_eps >= 0.0)) throw Error(ErrorCode::InvalidParameter, "sigma2_eps must be >= 0");
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  double jitter = 1e-10;
  while (llt.info() != Eigen::Success) {
    if (jitter > 1e-6 * (1.0 + 1e-9)) {
      throw Error(ErrorCode::FactorizationFailure, "covariance is not positive semi-definite");
    }
    Eigen::MatrixXd shifted = sigma;
    shifted.diagonal().array() += jitter;
    llt.compute(shifted);
    jitter_ = jitter;
    jitter *= 10.0;
  }
  factor_ = llt.matrixL();
}

void NoiseSampler::draw(Engine& engine, std::span<double> out) const {
  if (out.size() != size()) throw Error(ErrorCode::LengthMismatch, "noise buffer size");
  std::normal_distribution<double> normal;
  Eigen::VectorXd z(static_cast<Eigen::Index>(size()));
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(engine);
  Eigen::Map<Eigen::VectorXd> target(out.data(), z.size());
  target.noalias() = factor_.triangularView<Eigen::Lower>() * z;
  target *= std::sqrt(sigma2_eps_);
}

SampledExperiment sample_experiment(const DesignSchedule& d, double sigma2_A,
                                    const NoiseSampler& noise, double noise_level_value,
                                    std::uint64_t seed, std::uint64_t stream,
                                    std::uint64_t index) {
  if (noise.size() != d.T()) throw Error(ErrorCode::DimensionMismatch, "noise sampler size");
  if (!(sigma2_A >= 0.0)) throw Error(ErrorCode::InvalidParameter, "sigma2_A must be >= 0");
  auto engine = make_engine(seed, stream, index);
  std::normal_distribution<double> normal;
  SampledExperiment out;
  out.effects.resize(d.m());
  const double scale = std::sqrt(sigma2_A);
  for (double& a : out.effects) a = scale * normal(engine);
  out.y.resize(d.T());
  noise.draw(engine, out.y);
  for (std::size_t t = 0; t < d.T(); ++t) out.y[t] += out.effects[d.stimulus(t)];
  out.truth = make_truth(sigma2_A, noise_level_value);
  return out;
}

SampledExperiment sample_experiment(const DesignSchedule& d, double sigma2_A,
                                    const CovarianceModel& model, double sigma2_eps,
                                    std::uint64_t seed) {
  const Eigen::MatrixXd sigma = model.correlation(d);
  const NoiseSampler sampler(sigma, sigma2_eps);
  return sample_experiment(d, sigma2_A, sampler, noise_level(sigma, d, sigma2_eps), seed);
}

}  // namespace shufflevar
