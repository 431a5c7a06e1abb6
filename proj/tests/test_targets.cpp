#include <cmath>
#include <numbers>

#include "doctest.h"
#include "scorelab/errors.hpp"
#include "scorelab/targets.hpp"

using namespace scorelab;

namespace {

// Independent log-density of the noised mixture: component k is
// N(e^{-t} μ_k, (e^{-2t} v_k + σ_t²) I).
double gmm_log_density(const GmmTarget& g, double t, const Vec& x) {
  const double d = static_cast<double>(x.size());
  double total = 0.0;
  for (std::size_t k = 0; k < g.means.size(); ++k) {
    const double var = std::exp(-2 * t) * g.variances[k] + (1 - std::exp(-2 * t));
    const double q = (x - std::exp(-t) * g.means[k]).squaredNorm();
    total += g.weights[k] * std::exp(-0.5 * q / var) / std::pow(2 * std::numbers::pi * var, d / 2);
  }
  return std::log(total);
}

Vec fd_grad(const std::function<double(const Vec&)>& f, const Vec& x, double h = 1e-5) {
  Vec g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vec a = x, b = x;
    a(i) += h;
    b(i) -= h;
    g(i) = (f(a) - f(b)) / (2 * h);
  }
  return g;
}

Mat noised_cov(const Mat& s, double t) {
  return std::exp(-2 * t) * s + (1 - std::exp(-2 * t)) * Mat::Identity(s.rows(), s.cols());
}

TargetSpec two_mode() {
  Vec a(2), b(2), c(2);
  a << 2, 0;
  b << -1, 1.5;
  c << 0, -2;
  return TargetSpec::gmm({a, b, c}, {0.5, 1.0, 0.0}, {0.2, 0.5, 0.3});
}

}  // namespace

TEST_SUITE("targets") {
  TEST_CASE("gmm score and hessian match finite differences of an independent density") {
    const TargetSpec spec = two_mode();
    const ScoreOracle oracle(spec);
    Vec x(2);
    x << 0.3, -0.7;
    for (double t : {0.05, 0.4, 2.0}) {
      auto logp = [&](const Vec& y) { return gmm_log_density(spec.as_gmm(), t, y); };
      CHECK(oracle.log_density(t, x) == doctest::Approx(logp(x)).epsilon(1e-10));
      const Vec s = oracle.score(t, x);
      const Vec fd = fd_grad(logp, x);
      CHECK((s - fd).norm() < 1e-6 * (1 + fd.norm()));
      const Mat h = oracle.hessian(t, x);
      for (Eigen::Index i = 0; i < 2; ++i) {
        auto si = [&](const Vec& y) { return oracle.score(t, y)(i); };
        const Vec row = fd_grad(si, x);
        CHECK((h.row(i).transpose() - row).norm() < 1e-5 * (1 + row.norm()));
      }
      CHECK((h - h.transpose()).norm() < 1e-12);
    }
  }

  TEST_CASE("point-mass components need t > 0") {
    const ScoreOracle oracle(two_mode());
    CHECK_THROWS_AS(oracle.score(0.0, Vec::Zero(2)), std::domain_error);
    CHECK_NOTHROW(oracle.score(1e-3, Vec::Zero(2)));
    CHECK_THROWS_AS(oracle.score(-0.1, Vec::Zero(2)), std::domain_error);
  }

  TEST_CASE("gaussian closed forms") {
    Mat s(3, 3);
    s << 2.0, 0.3, -0.2, 0.3, 1.0, 0.1, -0.2, 0.1, 0.5;
    const ScoreOracle oracle(TargetSpec::gaussian(s));
    Vec x(3);
    x << 1.0, -0.5, 2.0;
    const double t = 0.7;
    const Mat st = noised_cov(s, t);
    const Mat prec = st.inverse();
    CHECK((oracle.score(t, x) + prec * x).norm() < 1e-12);
    CHECK((oracle.hessian(t, x) + prec).norm() < 1e-12);
    CHECK((oracle.noised_covariance(t) - st).norm() < 1e-13);
    Eigen::SelfAdjointEigenSolver<Mat> es(prec);
    CHECK(oracle.lipschitz(t) == doctest::Approx(es.eigenvalues().maxCoeff()).epsilon(1e-12));

    // E[x_0 | x_t] by Gaussian conditioning.
    const Vec pm = std::exp(-t) * s * prec * x;
    CHECK((oracle.posterior_mean_x0(t, x) - pm).norm() < 1e-12);
    const Mat pc = s - std::exp(-2 * t) * s * prec * s;
    CHECK((oracle.posterior_x0_covariance(t) - pc).norm() < 1e-12);
    CHECK((oracle.posterior_mean_x0(0.0, x) - x).norm() == 0.0);
  }

  TEST_CASE("backward conditional and Tweedie second moment") {
    Mat s(2, 2);
    s << 1.5, 0.4, 0.4, 0.8;
    const ScoreOracle oracle(TargetSpec::gaussian(s));
    const double tp = 0.6, t = 0.9, dlt = t - tp;
    const Mat sp = noised_cov(s, tp), stt = noised_cov(s, t);
    const Mat cross = std::exp(-dlt) * sp;  // Cov(x_{t'}, x_t)
    const Mat map = cross * stt.inverse();
    const Mat cov = sp - map * cross.transpose();
    const auto [m2, c2] = oracle.backward_conditional(tp, t);
    CHECK((m2 - map).norm() < 1e-12);
    CHECK((c2 - cov).norm() < 1e-12);

    // z = x_t - e^{-Δ} x_{t'}: E[z zᵀ | x_t] from the conditional law above.
    Vec x(2);
    x << 0.7, -1.1;
    const Vec mz = x - std::exp(-dlt) * map * x;
    const Mat second = std::exp(-2 * dlt) * cov + mz * mz.transpose();
    CHECK((oracle.conditional_noise_covariance(t, tp, x) - second).norm() < 1e-11);
    CHECK_THROWS(oracle.backward_conditional(t, tp));
  }

  TEST_CASE("gmm conditional noise covariance by Monte Carlo sanity") {
    // One component of variance 1 is exactly N(0, I) for all t: the noise
    // covariance must then equal the Gaussian formula.
    Vec mu = Vec::Zero(2);
    const ScoreOracle gm(TargetSpec::gmm({mu}, {1.0}, {1.0}));
    const ScoreOracle ga(TargetSpec::gaussian(Mat::Identity(2, 2)));
    Vec x(2);
    x << 0.4, 2.0;
    CHECK((gm.conditional_noise_covariance(1.0, 0.5, x) - ga.conditional_noise_covariance(1.0, 0.5, x)).norm() <
          1e-12);
    CHECK_THROWS_AS(gm.precision(1.0), std::logic_error);
  }

  TEST_CASE("validation") {
    CHECK_THROWS_AS(TargetSpec::gaussian(Mat::Zero(2, 2)), ConfigError);
    Mat ns(2, 2);
    ns << 1, 0.5, 0.4, 1;
    CHECK_THROWS_AS(TargetSpec::gaussian(ns), ConfigError);
    Vec a(1), b(1);
    a << 5;
    b << -5;
    try {
      TargetSpec::gmm({a, b}, {1, 1}, {0.69, 0.3});
      FAIL("accepted bad weights");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("got 0.99") != std::string::npos);
    }
    CHECK_THROWS_AS(TargetSpec::gmm({a, b}, {1, -1}, {0.5, 0.5}), ConfigError);
    CHECK_THROWS_AS(TargetSpec::gmm({a, Vec::Zero(2)}, {1, 1}, {0.5, 0.5}), ConfigError);
    CHECK_NOTHROW(TargetSpec::gmm({a, b}, {1, 1}, {0.7, 0.3}));
  }

  TEST_CASE("sampling moments and weights") {
    Vec a(1), b(1);
    a << 5;
    b << -5;
    const TargetSpec g = TargetSpec::gmm({a, b}, {1, 1}, {0.7, 0.3});
    const Mat xs = sample_target(g, 40000, 3);
    const double frac = (xs.array() > 0).cast<double>().mean();
    CHECK(std::abs(frac - 0.7) < 4 * std::sqrt(0.21 / 40000));
    CHECK(xs.mean() == doctest::Approx(0.7 * 5 - 0.3 * 5).epsilon(0.02));

    Mat s(2, 2);
    s << 2, -0.6, -0.6, 1;
    const Mat ys = sample_target(TargetSpec::gaussian(s), 50000, 8);
    const Mat c = ys.transpose() * ys / 50000.0;
    CHECK((c - s).cwiseAbs().maxCoeff() < 0.05);
    // Prefix property.
    CHECK(sample_target(TargetSpec::gaussian(s), 10, 8) == ys.topRows(10));
  }

  TEST_CASE("random SPD generators") {
    const Mat u = random_spd_uniform_spectrum(6, 0.5, 2.0, 4);
    Eigen::SelfAdjointEigenSolver<Mat> es(u);
    CHECK(es.eigenvalues().minCoeff() >= 0.5 - 1e-12);
    CHECK(es.eigenvalues().maxCoeff() <= 2.0 + 1e-12);
    CHECK((u - u.transpose()).norm() < 1e-12);
    const Mat w = random_spd_wishart(5, 4);
    Eigen::SelfAdjointEigenSolver<Mat> ew(w);
    CHECK(ew.eigenvalues().minCoeff() > 0);
    CHECK(random_spd_wishart(5, 4) == w);
  }

  TEST_CASE("json round trip") {
    const TargetSpec g = two_mode();
    const TargetSpec back = TargetSpec::from_json(g.to_json());
    CHECK(back.to_json() == g.to_json());
    Mat s = Mat::Identity(2, 2) * 3;
    const TargetSpec ga = TargetSpec::from_json(TargetSpec::gaussian(s).to_json());
    CHECK(ga.as_gaussian().covariance == s);
  }
}
