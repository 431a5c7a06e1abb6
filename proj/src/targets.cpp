#include "scorelab/targets.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "scorelab/errors.hpp"
#include "scorelab/rng.hpp"
#include "scorelab/schedule.hpp"

namespace scorelab {

TargetSpec TargetSpec::gaussian(Mat covariance) {
  if (covariance.rows() == 0 || covariance.rows() != covariance.cols())
    throw ConfigError("gaussian covariance must be a non-empty square matrix");
  if (!covariance.isApprox(covariance.transpose(), 1e-12))
    throw ConfigError("gaussian covariance must be symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> eig(covariance, Eigen::EigenvaluesOnly);
  if (!(eig.eigenvalues().minCoeff() > 0.0))
    throw ConfigError("gaussian covariance must be positive definite");
  const auto d = static_cast<std::size_t>(covariance.rows());
  return TargetSpec(GaussianTarget{std::move(covariance)}, d);
}

TargetSpec TargetSpec::gmm(std::vector<Vec> means, std::vector<double> variances,
                           std::vector<double> weights) {
  if (means.empty()) throw ConfigError("gmm needs at least one component");
  if (variances.size() != means.size() || weights.size() != means.size())
    throw ConfigError("gmm means, variances and weights must have equal length");
  const auto d = static_cast<std::size_t>(means.front().size());
  if (d == 0) throw ConfigError("gmm means must be non-empty vectors");
  double total = 0.0;
  for (std::size_t k = 0; k < means.size(); ++k) {
    if (static_cast<std::size_t>(means[k].size()) != d)
      throw ConfigError("gmm means must share one dimension");
    if (!(variances[k] >= 0.0)) throw ConfigError("gmm variances must be >= 0");
    if (!(weights[k] > 0.0)) throw ConfigError("gmm weights must be > 0");
    total += weights[k];
  }
  if (std::abs(total - 1.0) > 1e-12) {
    std::ostringstream msg;
    msg.precision(12);
    msg << "gmm weights must sum to 1 (got " << total << ")";
    throw ConfigError(msg.str());
  }
  return TargetSpec(GmmTarget{std::move(means), std::move(variances), std::move(weights)}, d);
}

nlohmann::json TargetSpec::to_json() const {
  nlohmann::json j;
  if (is_gaussian()) {
    const Mat& s = as_gaussian().covariance;
    j["kind"] = "gaussian";
    j["sigma"] = nlohmann::json::array();
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
      std::vector<double> row(s.cols());
      for (Eigen::Index c = 0; c < s.cols(); ++c) row[c] = s(r, c);
      j["sigma"].push_back(row);
    }
  } else {
    const GmmTarget& g = as_gmm();
    j["kind"] = "gmm";
    j["means"] = nlohmann::json::array();
    for (const Vec& mu : g.means) j["means"].push_back(std::vector<double>(mu.begin(), mu.end()));
    j["variances"] = g.variances;
    j["weights"] = g.weights;
  }
  return j;
}

TargetSpec TargetSpec::from_json(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "gaussian") {
    const auto rows = j.at("sigma").get<std::vector<std::vector<double>>>();
    const auto d = static_cast<Eigen::Index>(rows.size());
    Mat s(d, d);
    for (Eigen::Index r = 0; r < d; ++r) {
      if (static_cast<Eigen::Index>(rows[r].size()) != d)
        throw ConfigError("gaussian sigma must be square");
      for (Eigen::Index c = 0; c < d; ++c) s(r, c) = rows[r][c];
    }
    return gaussian(std::move(s));
  }
  if (kind == "gmm") {
    std::vector<Vec> means;
    for (const auto& row : j.at("means").get<std::vector<std::vector<double>>>())
      means.push_back(Eigen::Map<const Vec>(row.data(), static_cast<Eigen::Index>(row.size())));
    return gmm(std::move(means), j.at("variances").get<std::vector<double>>(),
               j.at("weights").get<std::vector<double>>());
  }
  throw ConfigError("unknown target kind '" + kind + "'");
}

Mat sample_target(const TargetSpec& target, std::size_t m, std::uint64_t seed) {
  if (m < 1) throw ConfigError("sample_target needs m >= 1");
  const auto d = static_cast<Eigen::Index>(target.dim());
  Mat out(static_cast<Eigen::Index>(m), d);
  Vec xi(d);
  if (target.is_gaussian()) {
    const Mat chol = target.as_gaussian().covariance.llt().matrixL();
    for (std::size_t i = 0; i < m; ++i) {
      Rng rng(seed, StreamDomain::target_samples, i);
      rng.fill_normal({xi.data(), static_cast<std::size_t>(d)});
      out.row(static_cast<Eigen::Index>(i)) = (chol * xi).transpose();
    }
    return out;
  }
  const GmmTarget& g = target.as_gmm();
  for (std::size_t i = 0; i < m; ++i) {
    Rng rng(seed, StreamDomain::target_samples, i);
    const double u = rng.uniform();
    std::size_t k = 0;
    double acc = g.weights[0];
    while (u >= acc && k + 1 < g.weights.size()) acc += g.weights[++k];
    rng.fill_normal({xi.data(), static_cast<std::size_t>(d)});
    out.row(static_cast<Eigen::Index>(i)) = (g.means[k] + std::sqrt(g.variances[k]) * xi).transpose();
  }
  return out;
}

Mat random_spd_uniform_spectrum(std::size_t d, double lo, double hi, std::uint64_t seed) {
  Rng rng(seed, StreamDomain::target_samples, ~std::uint64_t{0});
  const auto n = static_cast<Eigen::Index>(d);
  Mat g(n, n);
  for (Eigen::Index c = 0; c < n; ++c)
    for (Eigen::Index r = 0; r < n; ++r) g(r, c) = rng.normal();
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ();
  const Mat r = qr.matrixQR();
  for (Eigen::Index c = 0; c < n; ++c)
    if (r(c, c) < 0) q.col(c) *= -1.0;
  Vec lambda(n);
  for (Eigen::Index k = 0; k < n; ++k) lambda(k) = rng.uniform(lo, hi);
  Mat s = q * lambda.asDiagonal() * q.transpose();
  return 0.5 * (s + s.transpose());
}

Mat random_spd_wishart(std::size_t d, std::uint64_t seed) {
  Rng rng(seed, StreamDomain::target_samples, ~std::uint64_t{0} - 1);
  const auto n = static_cast<Eigen::Index>(d);
  Mat m(n, n);
  Vec v(n);
  for (Eigen::Index c = 0; c < n; ++c)
    for (Eigen::Index r = 0; r < n; ++r) m(r, c) = rng.normal();
  for (Eigen::Index k = 0; k < n; ++k) v(k) = rng.normal();
  Mat s = 5.0 * m * m.transpose() + 5.0 * v * v.transpose();
  return 0.5 * (s + s.transpose());
}

// ---------------------------------------------------------------------------

namespace {

struct MixturePosterior {
  std::vector<double> log_terms;  // log w_k + log N(x; μ'_k, v'_k I)
  std::vector<double> resp;
  std::vector<double> var;  // v'_k
  double log_density = 0.0;
};

MixturePosterior mixture_posterior(const GmmTarget& g, double t, const Vec& x) {
  const double decay = std::exp(-t);
  const double s2 = sigma_sq(t);
  const auto d = static_cast<double>(x.size());
  const std::size_t k_count = g.means.size();
  MixturePosterior p;
  p.log_terms.resize(k_count);
  p.resp.resize(k_count);
  p.var.resize(k_count);
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < k_count; ++k) {
    const double v = decay * decay * g.variances[k] + s2;
    p.var[k] = v;
    const double dist2 = (x - decay * g.means[k]).squaredNorm();
    p.log_terms[k] = std::log(g.weights[k]) - 0.5 * dist2 / v -
                     0.5 * d * std::log(2.0 * std::numbers::pi * v);
    peak = std::max(peak, p.log_terms[k]);
  }
  double total = 0.0;
  for (std::size_t k = 0; k < k_count; ++k) {
    p.resp[k] = std::exp(p.log_terms[k] - peak);
    total += p.resp[k];
  }
  for (double& r : p.resp) r /= total;
  p.log_density = peak + std::log(total);
  return p;
}

}  // namespace

ScoreOracle::ScoreOracle(TargetSpec target, std::span<const double> cache_times)
    : target_(std::move(target)) {
  if (target_.is_gaussian()) {
    for (double t : cache_times) precision_cache_.emplace(t, spd_inverse(noised_covariance(t)));
  }
}

void ScoreOracle::require_gaussian(const char* what) const {
  if (!target_.is_gaussian())
    throw std::logic_error(std::string(what) + " is only available for Gaussian targets");
}

void ScoreOracle::require_gmm_time(double t) const {
  if (t < 0.0) throw std::domain_error("oracle time must be >= 0");
  if (t == 0.0) {
    for (double v : target_.as_gmm().variances)
      if (v == 0.0)
        throw std::domain_error("score of a point-mass component is undefined at t = 0");
  }
}

Mat ScoreOracle::noised_covariance(double t) const {
  require_gaussian("noised_covariance");
  const Mat& s = target_.as_gaussian().covariance;
  Mat out = std::exp(-2.0 * t) * s;
  out.diagonal().array() += sigma_sq(t);
  return out;
}

Mat ScoreOracle::precision(double t) const {
  require_gaussian("precision");
  if (auto it = precision_cache_.find(t); it != precision_cache_.end()) return it->second;
  return spd_inverse(noised_covariance(t));
}

double ScoreOracle::lipschitz(double t) const { return sym_op_norm(precision(t)); }

Mat ScoreOracle::posterior_x0_covariance(double t) const {
  require_gaussian("posterior_x0_covariance");
  const Mat& s = target_.as_gaussian().covariance;
  Mat c = s - std::exp(-2.0 * t) * s * precision(t) * s;
  return 0.5 * (c + c.transpose());
}

std::pair<Mat, Mat> ScoreOracle::backward_conditional(double t_prev, double t) const {
  require_gaussian("backward_conditional");
  if (!(t_prev < t)) throw std::invalid_argument("backward_conditional needs t_prev < t");
  const Mat prev_cov = t_prev == 0.0 ? target_.as_gaussian().covariance : noised_covariance(t_prev);
  const double decay = std::exp(-(t - t_prev));
  const Mat gain = decay * prev_cov * precision(t);
  Mat cov = prev_cov - decay * gain * prev_cov;
  return {gain, 0.5 * (cov + cov.transpose())};
}

Mat ScoreOracle::eval(double t, const Mat& points) const {
  if (target_.is_gaussian()) {
    if (t < 0.0) throw std::domain_error("oracle time must be >= 0");
    return -points * precision(t);
  }
  require_gmm_time(t);
  Mat out(points.rows(), points.cols());
  for (Eigen::Index r = 0; r < points.rows(); ++r) out.row(r) = score(t, points.row(r).transpose());
  return out;
}

Vec ScoreOracle::score(double t, const Vec& x) const {
  if (target_.is_gaussian()) {
    if (t < 0.0) throw std::domain_error("oracle time must be >= 0");
    return -precision(t) * x;
  }
  require_gmm_time(t);
  const GmmTarget& g = target_.as_gmm();
  const MixturePosterior p = mixture_posterior(g, t, x);
  const double decay = std::exp(-t);
  Vec s = Vec::Zero(x.size());
  for (std::size_t k = 0; k < g.means.size(); ++k)
    s += p.resp[k] * (decay * g.means[k] - x) / p.var[k];
  return s;
}

Mat ScoreOracle::hessian(double t, const Vec& x) const {
  if (target_.is_gaussian()) return -precision(t);
  require_gmm_time(t);
  const GmmTarget& g = target_.as_gmm();
  const MixturePosterior p = mixture_posterior(g, t, x);
  const double decay = std::exp(-t);
  const auto d = x.size();
  Mat h = Mat::Zero(d, d);
  Vec s = Vec::Zero(d);
  for (std::size_t k = 0; k < g.means.size(); ++k) {
    const Vec grad = (decay * g.means[k] - x) / p.var[k];
    s += p.resp[k] * grad;
    h += p.resp[k] * (grad * grad.transpose());
    h.diagonal().array() -= p.resp[k] / p.var[k];
  }
  h -= s * s.transpose();
  return h;
}

double ScoreOracle::log_density(double t, const Vec& x) const {
  if (target_.is_gaussian()) {
    const Mat cov = noised_covariance(t);
    Eigen::LLT<Mat> llt(cov);
    const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const auto d = static_cast<double>(x.size());
    return -0.5 * x.dot(llt.solve(x)) - 0.5 * (d * std::log(2.0 * std::numbers::pi) + log_det);
  }
  require_gmm_time(t);
  return mixture_posterior(target_.as_gmm(), t, x).log_density;
}

Vec ScoreOracle::posterior_mean_x0(double t, const Vec& x) const {
  if (t == 0.0) return x;
  return std::exp(t) * (x + sigma_sq(t) * score(t, x));
}

Mat ScoreOracle::conditional_noise_covariance(double t, double t_prev, const Vec& x) const {
  if (!(t_prev < t)) throw std::invalid_argument("conditional_noise_covariance needs t_prev < t");
  if (t_prev < 0.0) throw std::invalid_argument("conditional_noise_covariance needs t_prev >= 0");
  const double v = sigma_sq(t - t_prev);
  const Vec s = score(t, x);
  Mat out = v * v * (hessian(t, x) + s * s.transpose());
  out.diagonal().array() += v;
  return out;
}

}  // namespace scorelab
