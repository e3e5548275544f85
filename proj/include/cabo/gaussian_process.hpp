#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace cabo {

// Observations on the unit cube. Targets are utilities (larger is better).
struct Dataset {
  std::vector<Eigen::VectorXd> points;
  std::vector<double> targets;

  std::size_t size() const { return targets.size(); }
  bool empty() const { return targets.empty(); }
  void add(Eigen::VectorXd point, double target);
  // Throws DataError on mismatched sizes, points off the cube or non-finite
  // targets.
  void validate() const;
};

enum class KernelFamily { squared_exponential, matern52 };

// Hyperparameters on standardized targets.
struct GPHyperparameters {
  double amplitude = 1.0;
  Eigen::VectorXd lengthscales;
  double noise = 1e-6;
};

struct GPFitOptions {
  static constexpr double kNoiseFloor = 1e-10;
  static constexpr double kMinLengthscale = 1e-3;
  static constexpr double kMaxLengthscale = 1e3;

  int restarts = 8;
  std::uint64_t seed = 0;
  KernelFamily kernel = KernelFamily::squared_exponential;
  // Holds the (standardized) noise variance fixed instead of fitting it.
  std::optional<double> fixed_noise;
};

struct RestartReport {
  GPHyperparameters initial;
  double initial_log_likelihood = 0.0;
  GPHyperparameters final;
  double final_log_likelihood = 0.0;
};

struct Prediction {
  double mean = 0.0;
  double std = 0.0;
};

struct PredictionGradient {
  double mean = 0.0;
  double std = 0.0;
  Eigen::VectorXd dmean;
  Eigen::VectorXd dstd;
};

// Zero-mean GP with an anisotropic stationary kernel plus white noise, fitted
// to standardized targets. Predictions are reported in target units.
class GPModel {
 public:
  // Prior over `dimension` inputs (no data).
  static GPModel prior(std::size_t dimension, GPHyperparameters hyper,
                       KernelFamily kernel = KernelFamily::squared_exponential);
  // Posterior for fixed hyperparameters.
  static GPModel condition(const Dataset& data, GPHyperparameters hyper,
                           KernelFamily kernel = KernelFamily::squared_exponential);
  // Maximum-likelihood hyperparameters from multi-start bounded ascent.
  static GPModel fit(const Dataset& data, const GPFitOptions& options = {},
                     std::vector<RestartReport>* report = nullptr);

  Prediction predict(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  PredictionGradient predict_gradient(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  std::size_t dimension() const { return dimension_; }
  std::size_t size() const { return static_cast<std::size_t>(inputs_.rows()); }
  KernelFamily kernel() const { return kernel_; }
  const GPHyperparameters& hyperparameters() const { return hyper_; }

  // Signal variance in squared target units.
  double kernel_amplitude() const { return hyper_.amplitude * target_scale_ * target_scale_; }
  // Observation noise variance in squared target units.
  double noise_variance() const { return hyper_.noise * target_scale_ * target_scale_; }
  const Eigen::VectorXd& lengthscales() const { return hyper_.lengthscales; }
  double target_mean() const { return target_mean_; }
  double target_scale() const { return target_scale_; }
  double log_marginal_likelihood() const { return log_likelihood_; }
  double jitter() const { return jitter_; }

 private:
  GPModel() = default;
  void factorize();

  std::size_t dimension_ = 0;
  KernelFamily kernel_ = KernelFamily::squared_exponential;
  GPHyperparameters hyper_;
  Eigen::MatrixXd inputs_;    // n x d
  Eigen::VectorXd standardized_;
  Eigen::VectorXd alpha_;
  Eigen::LLT<Eigen::MatrixXd> chol_;
  double target_mean_ = 0.0;
  double target_scale_ = 1.0;
  double log_likelihood_ = 0.0;
  double jitter_ = 0.0;
};

// Log marginal likelihood of `data` (targets standardized the same way fit()
// does) under `hyper`. Returns -inf when the covariance cannot be factorized.
double log_marginal_likelihood(const Dataset& data, const GPHyperparameters& hyper,
                               KernelFamily kernel = KernelFamily::squared_exponential);

}  // namespace cabo
