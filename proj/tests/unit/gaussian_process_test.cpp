#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "cabo/errors.hpp"
#include "cabo/gaussian_process.hpp"

using namespace cabo;

namespace {

Dataset random_dataset(std::mt19937_64& rng, int n, int d) {
  Dataset data;
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd x(d);
    for (int k = 0; k < d; ++k) x[k] = u(rng);
    data.add(x, std::sin(6 * x[0]) + (d > 1 ? x[1] * x[1] : 0.0) + 0.3 * u(rng));
  }
  return data;
}

GPHyperparameters hyper(int d, double amplitude, double lengthscale, double noise) {
  return {amplitude, Eigen::VectorXd::Constant(d, lengthscale), noise};
}

Eigen::VectorXd random_point(std::mt19937_64& rng, int d) {
  Eigen::VectorXd x(d);
  for (int k = 0; k < d; ++k) x[k] = std::uniform_real_distribution<double>(0.02, 0.98)(rng);
  return x;
}

}  // namespace

TEST_CASE("prior mode predicts zero mean and amplitude spread") {
  const auto m = GPModel::prior(3, hyper(3, 2.0, 0.3, 1e-6));
  const auto p = m.predict(Eigen::VectorXd::Constant(3, 0.4));
  CHECK(p.mean == 0.0);
  CHECK(p.std == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("single observation is interpolated") {
  Dataset data;
  Eigen::VectorXd x(2);
  x << 0.3, 0.7;
  data.add(x, 4.2);
  GPFitOptions opts;
  opts.fixed_noise = GPFitOptions::kNoiseFloor;
  const auto m = GPModel::fit(data, opts);
  CHECK(std::abs(m.predict(x).mean - 4.2) <= 1e-6);
}

TEST_CASE("one-point posterior matches the closed form") {
  Dataset data;
  Eigen::VectorXd x0(1);
  x0 << 0.2;
  data.add(x0, 1.5);
  const double amp = 1.7, ls = 0.25, noise = 1e-3;
  const auto m = GPModel::condition(data, hyper(1, amp, ls, noise));
  for (double r : {0.0, 0.1, 0.3, 0.6}) {
    Eigen::VectorXd x(1);
    x << 0.2 + r;
    const double k = amp * std::exp(-0.5 * r * r / (ls * ls));
    const double var = amp - k * k / (amp + noise + m.jitter());
    const auto p = m.predict(x);
    CHECK(p.mean == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(p.std == doctest::Approx(m.target_scale() * std::sqrt(var)).epsilon(1e-9));
  }
}

TEST_CASE("two-point posterior mean matches the closed form") {
  Dataset data;
  Eigen::VectorXd a(1), b(1);
  a << 0.2;
  b << 0.5;
  data.add(a, 1.0);
  data.add(b, 3.0);
  const double amp = 1.3, ls = 0.2, noise = 1e-4;
  const auto m = GPModel::condition(data, hyper(1, amp, ls, noise));
  // standardized targets are -1 and +1 (mean 2, population sd 1)
  CHECK(m.target_mean() == 2.0);
  CHECK(m.target_scale() == 1.0);
  const double s = amp + noise + m.jitter();
  const double kab = amp * std::exp(-0.5 * 0.09 / (ls * ls));
  const double det = s * s - kab * kab;
  const double alpha_a = (s * -1.0 - kab * 1.0) / det;
  const double alpha_b = (-kab * -1.0 + s * 1.0) / det;
  Eigen::VectorXd x(1);
  x << 0.41;
  const double ka = amp * std::exp(-0.5 * 0.21 * 0.21 / (ls * ls));
  const double kb = amp * std::exp(-0.5 * 0.09 * 0.09 / (ls * ls));
  CHECK(m.predict(x).mean == doctest::Approx(2.0 + ka * alpha_a + kb * alpha_b).epsilon(1e-10));
}

TEST_CASE("duplicate inputs with conflicting targets raise the learned noise") {
  Dataset data;
  Eigen::VectorXd x(1);
  x << 0.5;
  data.add(x, 0.0);
  data.add(x, 1.0);
  GPFitOptions opts;
  opts.seed = 4;
  const auto m = GPModel::fit(data, opts);
  CHECK(m.noise_variance() > GPFitOptions::kNoiseFloor);
  // maximum-likelihood (population) residual variance of the pair
  const double residual = 0.25;
  CHECK(m.noise_variance() == doctest::Approx(residual).epsilon(0.05));
}

TEST_CASE("fit is deterministic for a seed") {
  std::mt19937_64 rng(8);
  const auto data = random_dataset(rng, 10, 2);
  GPFitOptions opts;
  opts.seed = 99;
  const auto a = GPModel::fit(data, opts);
  const auto b = GPModel::fit(data, opts);
  CHECK(a.hyperparameters().amplitude == b.hyperparameters().amplitude);
  CHECK(a.hyperparameters().noise == b.hyperparameters().noise);
  CHECK(a.lengthscales() == b.lengthscales());
}

TEST_CASE("fitted hyperparameters respect their bounds") {
  std::mt19937_64 rng(81);
  for (int rep = 0; rep < 10; ++rep) {
    const auto data = random_dataset(rng, 3 + rep, 1 + rep % 3);
    GPFitOptions opts;
    opts.seed = static_cast<std::uint64_t>(rep);
    const auto m = GPModel::fit(data, opts);
    CHECK(m.lengthscales().minCoeff() >= GPFitOptions::kMinLengthscale * (1 - 1e-12));
    CHECK(m.lengthscales().maxCoeff() <= GPFitOptions::kMaxLengthscale * (1 + 1e-12));
    CHECK(m.hyperparameters().noise >= GPFitOptions::kNoiseFloor * (1 - 1e-12));
  }
}

TEST_CASE("fit rejects bad data") {
  Dataset data;
  Eigen::VectorXd x(1);
  x << 0.5;
  data.add(x, std::numeric_limits<double>::quiet_NaN());
  CHECK_THROWS_AS((void)GPModel::fit(data), DataError);
  CHECK_THROWS_AS((void)GPModel::fit(Dataset{}), DataError);
  Dataset outside;
  Eigen::VectorXd y(1);
  y << 1.5;
  outside.add(y, 1.0);
  CHECK_THROWS_AS((void)GPModel::fit(outside), DataError);
}

TEST_CASE("predict rejects points off the cube") {
  std::mt19937_64 rng(2);
  const auto m = GPModel::condition(random_dataset(rng, 4, 2), hyper(2, 1, 0.3, 1e-6));
  Eigen::VectorXd x(2);
  x << 0.5, 1.2;
  CHECK_THROWS_AS((void)m.predict(x), BoundsError);
}

TEST_CASE("training points are nearly interpolated at the noise floor") {
  std::mt19937_64 rng(12);
  Dataset data;
  // well separated points keep the covariance conditioned
  for (double a : {0.1, 0.5, 0.9})
    for (double b : {0.2, 0.8}) {
      Eigen::VectorXd x(2);
      x << a, b;
      data.add(x, std::cos(3 * a) + b);
    }
  const auto m = GPModel::condition(data, hyper(2, 1.0, 0.2, GPFitOptions::kNoiseFloor));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto p = m.predict(data.points[i]);
    CHECK(std::abs(p.mean - data.targets[i]) <= 1e-4 * m.target_scale());
    CHECK(p.std <= 1e-3 * std::sqrt(m.kernel_amplitude()));
  }
}

TEST_CASE("prediction gradients match central differences") {
  std::mt19937_64 rng(21);
  for (auto family : {KernelFamily::squared_exponential, KernelFamily::matern52}) {
    for (int rep = 0; rep < 60; ++rep) {
      const int d = 1 + rep % 3;
      const auto data = random_dataset(rng, 3 + rep % 6, d);
      const auto m = GPModel::condition(data, hyper(d, 0.5 + rep % 4, 0.15 + 0.1 * (rep % 5), 1e-4), family);
      const Eigen::VectorXd x = random_point(rng, d);
      const auto g = m.predict_gradient(x);
      CHECK(g.mean == doctest::Approx(m.predict(x).mean).epsilon(1e-12));
      const double h = 1e-6;
      for (int k = 0; k < d; ++k) {
        Eigen::VectorXd up = x, dn = x;
        up[k] += h;
        dn[k] -= h;
        const double fm = (m.predict(up).mean - m.predict(dn).mean) / (2 * h);
        const double fs = (m.predict(up).std - m.predict(dn).std) / (2 * h);
        CHECK(std::abs(g.dmean[k] - fm) <= std::max(1e-5, 1e-3 * std::abs(fm)));
        CHECK(std::abs(g.dstd[k] - fs) <= std::max(1e-5, 1e-3 * std::abs(fs)));
      }
    }
  }
}

TEST_CASE("symmetric data has zero mean slope at the centre") {
  Dataset data;
  Eigen::VectorXd x(1), mid(1);
  for (auto [at, y] : {std::pair{0.2, 1.0}, {0.8, 1.0}, {0.45, 3.0}, {0.55, 3.0}}) {
    x << at;
    data.add(x, y);
  }
  mid << 0.5;
  const auto m = GPModel::condition(data, hyper(1, 1.0, 0.3, 1e-4));
  CHECK(std::abs(m.predict_gradient(mid).dmean[0]) <= 1e-9);
  CHECK(m.predict_gradient(Eigen::VectorXd::Constant(1, 0.3)).dmean[0] != doctest::Approx(0.0));
}

TEST_CASE("constant targets give a flat mean") {
  std::mt19937_64 rng(5);
  Dataset data;
  for (int i = 0; i < 6; ++i) data.add(random_point(rng, 2), 3.25);
  const auto m = GPModel::fit(data);
  for (int i = 0; i < 50; ++i) CHECK(m.predict_gradient(random_point(rng, 2)).dmean.norm() <= 1e-8);
}

TEST_CASE("posterior variance never exceeds the prior") {
  std::mt19937_64 rng(31);
  for (int rep = 0; rep < 50; ++rep) {
    const int d = 1 + rep % 3;
    const auto data = random_dataset(rng, 2 + rep % 8, d);
    const auto m = GPModel::condition(data, hyper(d, 0.3 + rep % 3, 0.2, 1e-6));
    for (int i = 0; i < 20; ++i) {
      const double s = m.predict(random_point(rng, d)).std;
      CHECK(s >= 0.0);
      CHECK(s * s <= m.kernel_amplitude() + 1e-9);
    }
  }
}

TEST_CASE("adding an observation never raises posterior variance") {
  std::mt19937_64 rng(41);
  for (int rep = 0; rep < 20; ++rep) {
    const int d = 1 + rep % 2;
    auto data = random_dataset(rng, 3, d);
    const auto h = hyper(d, 1.0, 0.3, GPFitOptions::kNoiseFloor);
    const auto before = GPModel::condition(data, h);
    data.add(random_point(rng, d), 0.5);
    const auto after = GPModel::condition(data, h);
    for (int i = 0; i < 100; ++i) {
      const auto x = random_point(rng, d);
      // compare in standardized units so the target rescaling does not matter
      const double vb = std::pow(before.predict(x).std / before.target_scale(), 2);
      const double va = std::pow(after.predict(x).std / after.target_scale(), 2);
      CHECK(va <= vb + 1e-9);
    }
  }
}

TEST_CASE("each restart ends at least as likely as it started") {
  std::mt19937_64 rng(51);
  for (int rep = 0; rep < 8; ++rep) {
    const auto data = random_dataset(rng, 4 + rep, 1 + rep % 3);
    std::vector<RestartReport> report;
    GPFitOptions opts;
    opts.seed = static_cast<std::uint64_t>(rep);
    const auto m = GPModel::fit(data, opts, &report);
    REQUIRE(report.size() == static_cast<std::size_t>(opts.restarts));
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& r : report) {
      CHECK(r.final_log_likelihood >= r.initial_log_likelihood - 1e-9 * std::abs(r.initial_log_likelihood));
      best = std::max(best, r.final_log_likelihood);
    }
    CHECK(m.log_marginal_likelihood() == doctest::Approx(best).epsilon(1e-9));
    CHECK(log_marginal_likelihood(data, m.hyperparameters()) == doctest::Approx(best).epsilon(1e-9));
  }
}
