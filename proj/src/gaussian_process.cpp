#include "cabo/gaussian_process.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "cabo/bounded_lbfgs.hpp"
#include "cabo/errors.hpp"
#include "cabo/sampling.hpp"

namespace cabo {

namespace {

constexpr double kSqrt5 = 2.23606797749978969641;
constexpr double kFirstJitter = 1e-10;
constexpr double kMaxJitter = 1e-4;

// Kernel value from the scaled distance r^2 = sum_j (dx_j / l_j)^2.
double kernel_from_r2(KernelFamily family, double amplitude, double r2) {
  if (family == KernelFamily::squared_exponential) return amplitude * std::exp(-0.5 * r2);
  const double r = std::sqrt(r2);
  return amplitude * (1.0 + kSqrt5 * r + 5.0 / 3.0 * r2) * std::exp(-kSqrt5 * r);
}

// dk/d(r^2) * 2, i.e. the factor g with dk/dx_j = -g * dx_j / l_j^2.
double kernel_slope(KernelFamily family, double amplitude, double r2, double k) {
  if (family == KernelFamily::squared_exponential) return k;
  const double r = std::sqrt(r2);
  return amplitude * 5.0 / 3.0 * (1.0 + kSqrt5 * r) * std::exp(-kSqrt5 * r);
}

struct Standardization {
  double mean = 0.0;
  double scale = 1.0;
  Eigen::VectorXd values;
};

Standardization standardize(const std::vector<double>& targets) {
  Standardization s;
  const auto n = static_cast<Eigen::Index>(targets.size());
  s.values.resize(n);
  if (n == 0) return s;
  double sum = 0.0;
  for (double t : targets) sum += t;
  s.mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double t : targets) ss += (t - s.mean) * (t - s.mean);
  const double sd = std::sqrt(ss / static_cast<double>(n));
  s.scale = sd > 1e-12 * std::max(1.0, std::abs(s.mean)) ? sd : 1.0;
  for (Eigen::Index i = 0; i < n; ++i) s.values[i] = (targets[static_cast<std::size_t>(i)] - s.mean) / s.scale;
  return s;
}

Eigen::MatrixXd stack(const std::vector<Eigen::VectorXd>& points, std::size_t dimension) {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(points.size()), static_cast<Eigen::Index>(dimension));
  for (std::size_t i = 0; i < points.size(); ++i) X.row(static_cast<Eigen::Index>(i)) = points[i].transpose();
  return X;
}

Eigen::MatrixXd signal_covariance(const Eigen::MatrixXd& X, const GPHyperparameters& h,
                                  KernelFamily family) {
  const Eigen::Index n = X.rows();
  const Eigen::VectorXd inv_ls = h.lengthscales.cwiseInverse();
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    K(i, i) = h.amplitude;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double r2 = ((X.row(i) - X.row(j)).transpose().cwiseProduct(inv_ls)).squaredNorm();
      K(i, j) = K(j, i) = kernel_from_r2(family, h.amplitude, r2);
    }
  }
  return K;
}

// Cholesky of K + (noise + jitter) I, escalating jitter on failure. Returns
// the jitter used, or a negative value when every attempt failed.
double factorize_with_jitter(const Eigen::MatrixXd& K, double noise, Eigen::LLT<Eigen::MatrixXd>& llt) {
  Eigen::MatrixXd A = K;
  A.diagonal().array() += noise;
  llt.compute(A);
  if (llt.info() == Eigen::Success) return 0.0;
  for (double jitter = kFirstJitter; jitter <= kMaxJitter * 1.0000001; jitter *= 10.0) {
    A = K;
    A.diagonal().array() += noise + jitter;
    llt.compute(A);
    if (llt.info() == Eigen::Success) return jitter;
  }
  return -1.0;
}

struct LikelihoodTerms {
  double value = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd gradient;  // w.r.t. [log amp, log l_1..d, (log noise)]
};

LikelihoodTerms likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const GPHyperparameters& h, KernelFamily family, bool with_noise_gradient,
                           bool want_gradient) {
  LikelihoodTerms out;
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  const Eigen::MatrixXd K = signal_covariance(X, h, family);
  Eigen::LLT<Eigen::MatrixXd> llt;
  if (factorize_with_jitter(K, h.noise, llt) < 0.0) return out;

  const Eigen::VectorXd alpha = llt.solve(y);
  const Eigen::MatrixXd& L = llt.matrixLLT();
  double log_det_half = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) log_det_half += std::log(L(i, i));
  out.value = -0.5 * y.dot(alpha) - log_det_half -
              0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  if (!want_gradient) return out;

  const Eigen::MatrixXd W = alpha * alpha.transpose() - llt.solve(Eigen::MatrixXd::Identity(n, n));
  out.gradient.setZero(1 + d + (with_noise_gradient ? 1 : 0));
  out.gradient[0] = 0.5 * (W.cwiseProduct(K)).sum();
  const Eigen::VectorXd inv_ls2 = h.lengthscales.cwiseInverse().cwiseAbs2();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      const Eigen::VectorXd diff = (X.row(i) - X.row(j)).transpose();
      const double r2 = diff.cwiseAbs2().dot(inv_ls2);
      const double slope = kernel_slope(family, h.amplitude, r2, K(i, j));
      // dK_ij / dlog l_m = slope * diff_m^2 / l_m^2, counted twice by symmetry.
      out.gradient.segment(1, d) += W(i, j) * slope * diff.cwiseAbs2().cwiseProduct(inv_ls2);
    }
  }
  if (with_noise_gradient) out.gradient[1 + d] = 0.5 * h.noise * W.trace();
  return out;
}

}  // namespace

void Dataset::add(Eigen::VectorXd point, double target) {
  points.push_back(std::move(point));
  targets.push_back(target);
}

void Dataset::validate() const {
  if (points.size() != targets.size()) throw DataError("dataset points and targets differ in length");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!std::isfinite(targets[i])) throw DataError("non-finite target at index " + std::to_string(i));
    if (points[i].size() != points.front().size()) throw DataError("dataset points differ in dimension");
    if ((points[i].array() < -1e-12).any() || (points[i].array() > 1.0 + 1e-12).any() ||
        !points[i].allFinite())
      throw DataError("dataset point " + std::to_string(i) + " outside the unit cube");
  }
}

GPModel GPModel::prior(std::size_t dimension, GPHyperparameters hyper, KernelFamily kernel) {
  GPModel m;
  m.dimension_ = dimension;
  m.kernel_ = kernel;
  if (hyper.lengthscales.size() == 0) hyper.lengthscales = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dimension), 0.5);
  m.hyper_ = std::move(hyper);
  m.inputs_.resize(0, static_cast<Eigen::Index>(dimension));
  return m;
}

GPModel GPModel::condition(const Dataset& data, GPHyperparameters hyper, KernelFamily kernel) {
  data.validate();
  if (data.empty()) throw DataError("cannot condition on an empty dataset");
  GPModel m;
  m.dimension_ = static_cast<std::size_t>(data.points.front().size());
  m.kernel_ = kernel;
  if (hyper.lengthscales.size() != static_cast<Eigen::Index>(m.dimension_))
    throw ConfigurationError("lengthscale count does not match the input dimension");
  hyper.noise = std::max(hyper.noise, GPFitOptions::kNoiseFloor);
  m.hyper_ = std::move(hyper);
  m.inputs_ = stack(data.points, m.dimension_);
  Standardization s = standardize(data.targets);
  m.target_mean_ = s.mean;
  m.target_scale_ = s.scale;
  m.standardized_ = std::move(s.values);
  m.factorize();
  return m;
}

void GPModel::factorize() {
  const Eigen::MatrixXd K = signal_covariance(inputs_, hyper_, kernel_);
  jitter_ = factorize_with_jitter(K, hyper_.noise, chol_);
  if (jitter_ < 0.0)
    throw ConditioningError("GP covariance is not positive definite even with jitter 1e-4");
  alpha_ = chol_.solve(standardized_);
  const Eigen::MatrixXd& L = chol_.matrixLLT();
  double log_det_half = 0.0;
  for (Eigen::Index i = 0; i < L.rows(); ++i) log_det_half += std::log(L(i, i));
  log_likelihood_ = -0.5 * standardized_.dot(alpha_) - log_det_half -
                    0.5 * static_cast<double>(L.rows()) * std::log(2.0 * std::numbers::pi);
}

GPModel GPModel::fit(const Dataset& data, const GPFitOptions& options,
                     std::vector<RestartReport>* report) {
  data.validate();
  if (data.empty()) throw DataError("cannot fit a GP without observations");
  if (options.restarts < 1) throw ConfigurationError("GP fit needs at least one restart");

  const auto d = static_cast<Eigen::Index>(data.points.front().size());
  const Eigen::MatrixXd X = stack(data.points, static_cast<std::size_t>(d));
  const Eigen::VectorXd y = standardize(data.targets).values;
  const bool fit_noise = !options.fixed_noise.has_value();
  const Eigen::Index p = 1 + d + (fit_noise ? 1 : 0);

  Eigen::VectorXd lower(p), upper(p);
  lower[0] = std::log(1e-3);
  upper[0] = std::log(1e3);
  lower.segment(1, d).setConstant(std::log(GPFitOptions::kMinLengthscale));
  upper.segment(1, d).setConstant(std::log(GPFitOptions::kMaxLengthscale));
  if (fit_noise) {
    lower[1 + d] = std::log(GPFitOptions::kNoiseFloor);
    upper[1 + d] = std::log(10.0);
  }
  const double fixed_noise =
      fit_noise ? 0.0 : std::max(*options.fixed_noise, GPFitOptions::kNoiseFloor);

  auto unpack = [&](const Eigen::VectorXd& theta) {
    GPHyperparameters h;
    h.amplitude = std::exp(theta[0]);
    h.lengthscales = theta.segment(1, d).array().exp();
    h.noise = fit_noise ? std::exp(theta[1 + d]) : fixed_noise;
    return h;
  };

  const Objective objective = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
    const LikelihoodTerms terms = likelihood(X, y, unpack(theta), options.kernel, fit_noise, true);
    if (!std::isfinite(terms.value)) {
      grad.setZero(p);
      return std::numeric_limits<double>::infinity();
    }
    grad = -terms.gradient;
    return -terms.value;
  };

  std::mt19937_64 rng(derive_seed({options.seed, 0x6770ULL}));
  auto log_uniform = [&](double lo, double hi) {
    return std::log(lo) + uniform01(rng) * (std::log(hi) - std::log(lo));
  };

  BoxMinimizerOptions minimizer;
  minimizer.max_iterations = 100;
  minimizer.projected_gradient_tolerance = 1e-5;
  minimizer.relative_function_tolerance = 1e-9;

  std::optional<Eigen::VectorXd> best_theta;
  double best_value = std::numeric_limits<double>::infinity();
  for (int r = 0; r < options.restarts; ++r) {
    Eigen::VectorXd theta0(p);
    theta0[0] = log_uniform(0.1, 10.0);
    for (Eigen::Index j = 0; j < d; ++j) theta0[1 + j] = log_uniform(0.03, 3.0);
    if (fit_noise) theta0[1 + d] = log_uniform(1e-6, 1e-1);

    const BoxMinimizerResult res = minimize_box(objective, theta0, lower, upper, minimizer);
    if (report) {
      RestartReport rep;
      rep.initial = unpack(theta0.cwiseMax(lower).cwiseMin(upper));
      rep.initial_log_likelihood =
          likelihood(X, y, rep.initial, options.kernel, fit_noise, false).value;
      rep.final = unpack(res.x);
      rep.final_log_likelihood = -res.value;
      report->push_back(std::move(rep));
    }
    if (std::isfinite(res.value) && res.value < best_value) {
      best_value = res.value;
      best_theta = res.x;
    }
  }
  if (!best_theta) throw ConditioningError("GP likelihood could not be evaluated at any restart");
  return condition(data, unpack(*best_theta), options.kernel);
}

Prediction GPModel::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (static_cast<std::size_t>(x.size()) != dimension_)
    throw ConfigurationError("prediction point has the wrong dimension");
  if ((x.array() < -1e-12).any() || (x.array() > 1.0 + 1e-12).any())
    throw BoundsError("", "prediction point outside the unit cube");
  const Eigen::Index n = inputs_.rows();
  if (n == 0) return {target_mean_, std::sqrt(hyper_.amplitude) * target_scale_};

  const Eigen::VectorXd inv_ls = hyper_.lengthscales.cwiseInverse();
  Eigen::VectorXd k(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r2 = ((inputs_.row(i).transpose() - x).cwiseProduct(inv_ls)).squaredNorm();
    k[i] = kernel_from_r2(kernel_, hyper_.amplitude, r2);
  }
  const Eigen::VectorXd v = chol_.matrixL().solve(k);
  const double var = std::max(hyper_.amplitude - v.squaredNorm(), 0.0);
  return {target_mean_ + target_scale_ * k.dot(alpha_), target_scale_ * std::sqrt(var)};
}

PredictionGradient GPModel::predict_gradient(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (static_cast<std::size_t>(x.size()) != dimension_)
    throw ConfigurationError("prediction point has the wrong dimension");
  if ((x.array() < -1e-12).any() || (x.array() > 1.0 + 1e-12).any())
    throw BoundsError("", "prediction point outside the unit cube");
  const auto d = static_cast<Eigen::Index>(dimension_);
  PredictionGradient out;
  const Eigen::Index n = inputs_.rows();
  if (n == 0) {
    out.mean = target_mean_;
    out.std = std::sqrt(hyper_.amplitude) * target_scale_;
    out.dmean.setZero(d);
    out.dstd.setZero(d);
    return out;
  }

  const Eigen::VectorXd inv_ls = hyper_.lengthscales.cwiseInverse();
  const Eigen::VectorXd inv_ls2 = inv_ls.cwiseAbs2();
  Eigen::VectorXd k(n);
  Eigen::MatrixXd J(n, d);  // dk_i/dx
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd diff = x - inputs_.row(i).transpose();
    const double r2 = diff.cwiseAbs2().dot(inv_ls2);
    k[i] = kernel_from_r2(kernel_, hyper_.amplitude, r2);
    const double slope = kernel_slope(kernel_, hyper_.amplitude, r2, k[i]);
    J.row(i) = (-slope * diff.cwiseProduct(inv_ls2)).transpose();
  }
  const Eigen::VectorXd v = chol_.matrixL().solve(k);
  const double var = std::max(hyper_.amplitude - v.squaredNorm(), 0.0);
  const double sd = std::sqrt(var);
  out.mean = target_mean_ + target_scale_ * k.dot(alpha_);
  out.std = target_scale_ * sd;
  out.dmean = target_scale_ * (J.transpose() * alpha_);
  if (sd > 1e-12) {
    const Eigen::VectorXd Kinv_k = chol_.matrixU().solve(v);
    out.dstd = target_scale_ * (-(J.transpose() * Kinv_k) / sd);
  } else {
    out.dstd.setZero(d);
  }
  return out;
}

double log_marginal_likelihood(const Dataset& data, const GPHyperparameters& hyper,
                               KernelFamily kernel) {
  data.validate();
  if (data.empty()) return 0.0;
  const std::size_t d = static_cast<std::size_t>(data.points.front().size());
  return likelihood(stack(data.points, d), standardize(data.targets).values, hyper, kernel, false, false)
      .value;
}

}  // namespace cabo
