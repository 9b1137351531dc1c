#include "shufflevar/reml.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>

#include <Eigen/Cholesky>

#include "shufflevar/error.hpp"
#include "shufflevar/nelder_mead.hpp"
#include "shufflevar/noise_models.hpp"
#include "shufflevar/rng.hpp"

namespace shufflevar {

std::string RemlSpec::name() const {
  switch (family) {
    case RemlFamily::Iid: return "iid";
    case RemlFamily::ExpNugget: return "exp_nugget";
    case RemlFamily::Autoregressive: return "ar" + std::to_string(ar_order);
  }
  return "unknown";
}

std::size_t RemlSpec::num_theta() const {
  switch (family) {
    case RemlFamily::Iid: return 0;
    case RemlFamily::ExpNugget: return 2;
    case RemlFamily::Autoregressive: return ar_order;
  }
  return 0;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Applies W^{-1} to every column of a row-major block, for a unit-diagonal
// correlation W, and knows log|W|. Recurrences run over rows so each step
// is a vector operation across all right-hand sides.
class CorrelationSolver {
 public:
  virtual ~CorrelationSolver() = default;
  virtual void solve(RowMatrix& z) const = 0;
  double log_det() const { return log_det_; }

 protected:
  double log_det_ = 0.0;
};

class IdentitySolver final : public CorrelationSolver {
 public:
  void solve(RowMatrix&) const override {}
};

// W = lambda1 R + (1 - lambda1) I with R the AR(1) correlation phi^|t-u|.
// R^{-1} is tridiagonal, W = R M with M = lambda1 I + (1 - lambda1) R^{-1}, so
// W^{-1} v = R^{-1} (M^{-1} v) needs only tridiagonal work.
class ExpNuggetSolver final : public CorrelationSolver {
 public:
  static std::unique_ptr<ExpNuggetSolver> make(std::size_t T, double lambda1, double lambda2) {
    auto s = std::unique_ptr<ExpNuggetSolver>(new ExpNuggetSolver());
    if (!s->factor(T, lambda1, lambda2)) return nullptr;
    return s;
  }

  void solve(RowMatrix& z) const override {
    const auto T = z.rows();
    for (Eigen::Index i = 1; i < T; ++i) z.row(i) -= lower_(i) * z.row(i - 1);
    for (Eigen::Index i = 0; i < T; ++i) z.row(i) /= pivot_(i);
    for (Eigen::Index i = T - 2; i >= 0; --i) z.row(i) -= lower_(i + 1) * z.row(i + 1);
    // multiply by R^{-1}
    if (T == 1) return;
    const double inv_s = 1.0 / s_;
    const double mid = (1.0 + phi_ * phi_) * inv_s;
    const double off = phi_ * inv_s;
    Eigen::RowVectorXd prev = z.row(0);
    Eigen::RowVectorXd cur(z.cols());
    z.row(0) = inv_s * z.row(0) - off * z.row(1);
    for (Eigen::Index i = 1; i + 1 < T; ++i) {
      cur = z.row(i);
      z.row(i) = mid * cur - off * (prev + z.row(i + 1));
      prev.swap(cur);
    }
    z.row(T - 1) = inv_s * z.row(T - 1) - off * prev;
  }

 private:
  bool factor(std::size_t T, double lambda1, double lambda2) {
    phi_ = std::exp(-1.0 / lambda2);
    s_ = 1.0 - phi_ * phi_;
    if (!(s_ > 0.0)) return false;
    const double c = 1.0 - lambda1;
    const auto n = static_cast<Eigen::Index>(T);
    pivot_.resize(n);
    lower_.resize(n);
    const double off = -c * phi_ / s_;
    double log_det_m = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double rinv_diag = (i == 0 || i == n - 1) ? 1.0 / s_ : (1.0 + phi_ * phi_) / s_;
      if (n == 1) rinv_diag = 1.0;
      double diag = lambda1 + c * rinv_diag;
      if (i > 0) {
        lower_(i) = off / pivot_(i - 1);
        diag -= lower_(i) * off;
      } else {
        lower_(i) = 0.0;
      }
      if (!(diag > 0.0)) return false;
      pivot_(i) = diag;
      log_det_m += std::log(diag);
    }
    log_det_ = log_det_m + static_cast<double>(n - 1) * std::log(s_);
    return std::isfinite(log_det_);
  }

  double phi_ = 0.0;
  double s_ = 1.0;
  Eigen::VectorXd pivot_;
  Eigen::VectorXd lower_;
};

// Stationary AR(p): x_0..x_{p-1} ~ N(0, Gamma_p) and e_t = x_t - sum a_k x_{t-k}
// are independent unit-variance innovations, so Gamma^{-1} = K'K with K banded.
class ArSolver final : public CorrelationSolver {
 public:
  static std::unique_ptr<ArSolver> make(std::size_t T, std::span<const double> a) {
    if (!ar_is_stationary(a)) return nullptr;
    auto s = std::unique_ptr<ArSolver>(new ArSolver());
    s->a_.assign(a.begin(), a.end());
    const std::size_t p = std::min(a.size(), T);
    const auto gamma = ar_autocovariance(a, 1.0, std::max<std::size_t>(p, 1));
    s->gamma0_ = gamma[0];
    s->head_ = static_cast<Eigen::Index>(p);
    Eigen::MatrixXd gp(s->head_, s->head_);
    for (Eigen::Index i = 0; i < s->head_; ++i) {
      for (Eigen::Index j = 0; j < s->head_; ++j) gp(i, j) = gamma[std::abs(i - j)];
    }
    s->head_factor_.compute(gp);
    if (s->head_factor_.info() != Eigen::Success) return nullptr;
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < s->head_; ++i) {
      log_det += 2.0 * std::log(s->head_factor_.matrixL()(i, i));
    }
    s->log_det_ = log_det - static_cast<double>(T) * std::log(s->gamma0_);
    if (!std::isfinite(s->log_det_)) return nullptr;
    return s;
  }

  void solve(RowMatrix& z) const override {
    const auto T = z.rows();
    const auto p = static_cast<Eigen::Index>(a_.size());
    // w = K z, in place from the bottom so earlier rows are still original.
    for (Eigen::Index t = T - 1; t >= head_; --t) {
      for (Eigen::Index k = 1; k <= p; ++k) z.row(t) -= a_[k - 1] * z.row(t - k);
    }
    if (head_ > 0) {
      z.topRows(head_) = head_factor_.matrixL().solve(z.topRows(head_));
    }
    // z = K' w, in place from the top so later rows are still w.
    const RowMatrix head_w = z.topRows(head_);
    for (Eigen::Index s = 0; s < T; ++s) {
      if (s < head_) z.row(s).setZero();
      for (Eigen::Index k = 1; k <= p && s + k < T; ++k) {
        if (s + k >= head_) z.row(s) -= a_[k - 1] * z.row(s + k);
      }
    }
    if (head_ > 0) {
      z.topRows(head_) += head_factor_.matrixU().solve(head_w);
    }
    z *= gamma0_;
  }

 private:
  std::vector<double> a_;
  double gamma0_ = 1.0;
  Eigen::Index head_ = 0;
  Eigen::LLT<Eigen::MatrixXd> head_factor_;
};

std::unique_ptr<CorrelationSolver> make_solver(const RemlSpec& spec,
                                               std::span<const double> theta, std::size_t T) {
  switch (spec.family) {
    case RemlFamily::Iid:
      return std::make_unique<IdentitySolver>();
    case RemlFamily::ExpNugget:
      if (!(theta[0] >= 0.0 && theta[0] <= 1.0 && theta[1] > 0.0)) return nullptr;
      return ExpNuggetSolver::make(T, theta[0], theta[1]);
    case RemlFamily::Autoregressive:
      return ArSolver::make(T, theta);
  }
  return nullptr;
}

struct Quadratics {
  double log_det_v0 = 0.0;  // log|W + gamma XX'|
  double one_v_one = 0.0;   // 1' V0^{-1} 1
  double resid = 0.0;       // r' V0^{-1} r at the GLS intercept
  bool ok = false;
};

// Woodbury over the m treatment effects: V0 = W + gamma X X'.
class RemlProblem {
 public:
  RemlProblem(std::span<const double> y, const DesignSchedule& d, RemlSpec spec)
      : d_(d), spec_(spec), y_(static_cast<Eigen::Index>(y.size())) {
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    for (std::size_t t = 0; t < y.size(); ++t) y_(static_cast<Eigen::Index>(t)) = y[t] - mean;
    z_.resize(y_.size(), static_cast<Eigen::Index>(d.m()) + 1);
  }

  std::size_t N() const { return static_cast<std::size_t>(y_.size()); }

  Quadratics quadratics(double gamma, std::span<const double> theta) {
    Quadratics q;
    const auto solver = make_solver(spec_, theta, N());
    if (!solver) return q;
    const auto m = static_cast<Eigen::Index>(d_.m());
    // Columns 0..m-1 hold X, column m holds y; all are solved together.
    z_.setZero();
    for (Eigen::Index t = 0; t < z_.rows(); ++t) {
      z_(t, static_cast<Eigen::Index>(d_.stimulus(static_cast<std::size_t>(t)))) = 1.0;
    }
    z_.col(m) = y_;
    solver->solve(z_);

    // Row j of sums is X_j' W^{-1} [X y].
    RowMatrix sums = RowMatrix::Zero(m, m + 1);
    for (Eigen::Index t = 0; t < z_.rows(); ++t) {
      sums.row(static_cast<Eigen::Index>(d_.stimulus(static_cast<std::size_t>(t)))) += z_.row(t);
    }
    Eigen::MatrixXd c = sums.leftCols(m);
    c = 0.5 * (c + c.transpose()).eval();
    const Eigen::VectorXd uy = sums.col(m);
    const Eigen::VectorXd u1 = c.rowwise().sum();
    const double y_a = y_.dot(z_.col(m));
    const double one_a = z_.col(m).sum();
    const double one_b = u1.sum();

    Eigen::MatrixXd k = gamma * c;
    k.diagonal().array() += 1.0;
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() != Eigen::Success) return q;
    double log_det_k = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) log_det_k += 2.0 * std::log(llt.matrixL()(i, i));
    const Eigen::VectorXd ky = llt.solve(uy);
    const Eigen::VectorXd k1 = llt.solve(u1);

    const double yvy = y_a - gamma * uy.dot(ky);
    const double ovo = one_b - gamma * u1.dot(k1);
    const double ovy = one_a - gamma * u1.dot(ky);
    if (!(ovo > 0.0)) return q;
    q.resid = yvy - ovy * ovy / ovo;
    q.one_v_one = ovo;
    q.log_det_v0 = solver->log_det() + log_det_k;
    q.ok = std::isfinite(q.resid) && q.resid > 0.0 && std::isfinite(q.log_det_v0);
    return q;
  }

  // -2 x profiled restricted log-likelihood; sets sigma2_eps.
  double profiled(double gamma, std::span<const double> theta, double* sigma2_eps) {
    const auto q = quadratics(gamma, theta);
    if (!q.ok) return kInf;
    const double dof = static_cast<double>(N() - 1);
    const double s2 = q.resid / dof;
    if (sigma2_eps) *sigma2_eps = s2;
    return dof * (std::log(2.0 * std::numbers::pi) + 1.0 + std::log(s2)) + q.log_det_v0 +
           std::log(q.one_v_one);
  }

 private:
  const DesignSchedule& d_;
  RemlSpec spec_;
  Eigen::VectorXd y_;
  RowMatrix z_;
};

constexpr double kLogGammaMin = -25.0;
constexpr double kLogGammaMax = 12.0;
constexpr double kLogitBound = 12.0;
const double kLogLambda2Min = std::log(0.05);
const double kLogLambda2Max = std::log(1e4);

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Decoded {
  double gamma;
  std::vector<double> theta;
};

Decoded decode(const RemlSpec& spec, std::span<const double> x) {
  Decoded out;
  out.gamma = std::exp(std::clamp(x[0], kLogGammaMin, kLogGammaMax));
  switch (spec.family) {
    case RemlFamily::Iid:
      break;
    case RemlFamily::ExpNugget:
      out.theta = {logistic(std::clamp(x[1], -kLogitBound, kLogitBound)),
                   std::exp(std::clamp(x[2], kLogLambda2Min, kLogLambda2Max))};
      break;
    case RemlFamily::Autoregressive:
      out.theta.assign(x.begin() + 1, x.end());
      break;
  }
  return out;
}

std::vector<std::vector<double>> starting_points(const RemlSpec& spec, std::span<const double> y,
                                                 const DesignSchedule& d,
                                                 const RemlOptions& options) {
  double gamma0 = 1.0;
  if (d.n() >= 2) {
    const auto c = contrasts(y, d);
    const double signal = std::max(c.ms_between - c.ms_within / static_cast<double>(d.n()),
                                   0.05 * c.ms_between);
    if (c.ms_within > 0.0 && signal > 0.0) gamma0 = signal / c.ms_within;
  }
  const double log_gamma0 = std::clamp(std::log(gamma0), kLogGammaMin + 1.0, kLogGammaMax - 1.0);

  std::vector<std::vector<double>> starts;
  std::vector<double> first{log_gamma0};
  if (spec.family == RemlFamily::ExpNugget) {
    first.push_back(0.0);
    first.push_back(std::log(10.0));
  } else if (spec.family == RemlFamily::Autoregressive) {
    first.resize(1 + spec.ar_order, 0.0);
  }
  starts.push_back(first);

  auto engine = make_engine(options.seed, 0x72656d6cULL);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform;
  for (std::size_t s = 1; s < options.starts; ++s) {
    std::vector<double> x{log_gamma0 + 1.5 * normal(engine)};
    if (spec.family == RemlFamily::ExpNugget) {
      const double lambda1 = 0.05 + 0.9 * uniform(engine);
      x.push_back(std::log(lambda1 / (1.0 - lambda1)));
      x.push_back(std::log(100.0) * uniform(engine));
    } else if (spec.family == RemlFamily::Autoregressive) {
      for (std::size_t k = 1; k <= spec.ar_order; ++k) {
        x.push_back((uniform(engine) - 0.5) * 0.8 / static_cast<double>(k));
      }
    }
    starts.push_back(std::move(x));
  }
  return starts;
}

void validate_spec(const RemlSpec& spec) {
  if (spec.family == RemlFamily::Autoregressive && (spec.ar_order < 1 || spec.ar_order > 3)) {
    throw Error(ErrorCode::InvalidParameter, "REML AR order must be 1, 2 or 3");
  }
}

void validate_theta(const RemlSpec& spec, std::span<const double> theta) {
  if (theta.size() != spec.num_theta()) {
    throw Error(ErrorCode::InvalidParameter, "theta has the wrong number of parameters");
  }
}

std::vector<double> toeplitz_row(const RemlSpec& spec, std::span<const double> theta,
                                 std::size_t T) {
  std::vector<double> rho(T, 0.0);
  if (T == 0) return rho;
  switch (spec.family) {
    case RemlFamily::Iid:
      break;
    case RemlFamily::ExpNugget:
      for (std::size_t k = 1; k < T; ++k) {
        rho[k] = theta[0] * std::exp(-static_cast<double>(k) / theta[1]);
      }
      break;
    case RemlFamily::Autoregressive: {
      const auto gamma = ar_autocovariance(theta, 1.0, T - 1);
      for (std::size_t k = 1; k < T; ++k) rho[k] = gamma[k] / gamma[0];
      break;
    }
  }
  rho[0] = 1.0;
  return rho;
}

}  // namespace

Eigen::MatrixXd reml_correlation(const RemlSpec& spec, std::span<const double> theta,
                                 std::size_t T) {
  validate_spec(spec);
  validate_theta(spec, theta);
  const auto rho = toeplitz_row(spec, theta, T);
  Eigen::MatrixXd s(T, T);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t u = 0; u < T; ++u) s(t, u) = rho[t > u ? t - u : u - t];
  }
  return s;
}

double reml_log_likelihood(std::span<const double> y, const DesignSchedule& d,
                           const RemlSpec& spec, double sigma2_A, double sigma2_eps,
                           std::span<const double> theta) {
  validate_spec(spec);
  validate_theta(spec, theta);
  check_aligned(y, d);
  if (!(sigma2_eps > 0.0) || !(sigma2_A >= 0.0)) {
    throw Error(ErrorCode::InvalidParameter, "need sigma2_eps > 0 and sigma2_A >= 0");
  }
  RemlProblem problem(y, d, spec);
  const auto q = problem.quadratics(sigma2_A / sigma2_eps, theta);
  if (!q.ok) return -kInf;
  const double dof = static_cast<double>(d.T() - 1);
  return -0.5 * (dof * std::log(2.0 * std::numbers::pi) + dof * std::log(sigma2_eps) +
                 q.log_det_v0 + std::log(q.one_v_one) + q.resid / sigma2_eps);
}

RemlResult reml_estimate(std::span<const double> y, const DesignSchedule& d, const RemlSpec& spec,
                         const RemlOptions& options) {
  validate_spec(spec);
  check_aligned(y, d);
  if (d.T() > options.max_T) {
    throw Error(ErrorCode::SizeGuard, "T=" + std::to_string(d.T()) + " exceeds REML limit " +
                                          std::to_string(options.max_T));
  }
  if (options.starts == 0) throw Error(ErrorCode::InvalidParameter, "need at least one start");

  RemlProblem problem(y, d, spec);
  auto objective = [&](std::span<const double> x) {
    const auto p = decode(spec, x);
    return problem.profiled(p.gamma, p.theta, nullptr);
  };

  SimplexOptions simplex;
  simplex.tolerance = options.tolerance;
  simplex.max_evaluations = options.max_evaluations;

  std::optional<SimplexResult> best;
  std::size_t best_start = 0;
  std::size_t evaluations = 0;
  const auto starts = starting_points(spec, y, d, options);
  for (std::size_t s = 0; s < starts.size(); ++s) {
    auto result = nelder_mead(objective, starts[s], simplex);
    evaluations += result.evaluations;
    if (!std::isfinite(result.value)) continue;
    if (!best || result.value < best->value) {
      best = std::move(result);
      best_start = s;
    }
  }
  if (!best) throw Error(ErrorCode::AllStartsFailed, "no start reached a finite likelihood");

  const auto p = decode(spec, best->x);
  double sigma2_eps = 0.0;
  const double neg2 = problem.profiled(p.gamma, p.theta, &sigma2_eps);

  RemlResult out;
  out.fit.sigma2_eps = sigma2_eps;
  out.fit.sigma2_A = p.gamma * sigma2_eps;
  out.fit.theta = p.theta;
  out.fit.log_restricted_likelihood = -0.5 * neg2;
  out.fit.converged = best->converged;
  out.fit.iterations = best->iterations;
  out.fit.evaluations = evaluations;
  out.fit.best_start = best_start;

  const auto rho = toeplitz_row(spec, p.theta, d.T());
  const double level = sigma2_eps * contrast_trace_toeplitz(rho, d) /
                       static_cast<double>((d.m() - 1) * d.n());
  out.estimate = plug_in("reml:" + spec.name(), out.fit.sigma2_A, ms_between(y, d), level);
  out.estimate.flags.non_converged = !out.fit.converged;
  return out;
}

}  // namespace shufflevar
