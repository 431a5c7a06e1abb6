#include "scorelab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "scorelab/errors.hpp"
#include "scorelab/io.hpp"
#include "scorelab/parallel.hpp"
#include "scorelab/rng.hpp"

namespace scorelab {

namespace {

struct Moments {
  double mean;
  double se;
};

Moments moments(const Vec& v) {
  const double n = static_cast<double>(v.size());
  const double mean = v.mean();
  if (v.size() < 2) return {mean, 0.0};
  const double var = (v.array() - mean).square().sum() / (n - 1.0);
  return {mean, std::sqrt(var / n)};
}

Vec row_sq_norms(const Mat& a) { return a.rowwise().squaredNorm(); }

Vec row_dots(const Mat& a, const Mat& b) { return a.cwiseProduct(b).rowwise().sum(); }

/// Symmetric square root factor (works for semidefinite matrices).
Mat sqrt_factor(const Mat& cov) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (cov + cov.transpose()));
  const Vec root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal();
}

}  // namespace

void ErrorReport::recompute_total() {
  total = 0.0;
  double var = 0.0;
  for (std::size_t j = 0; j < errors.size(); ++j) {
    total += weights[j] * errors[j];
    const double se = j < stderrs.size() ? stderrs[j] : 0.0;
    var += weights[j] * weights[j] * se * se;
  }
  total_se = std::sqrt(var);
}

nlohmann::json ErrorReport::to_json() const {
  return {{"times", times}, {"weights", weights}, {"errors", errors},
          {"stderrs", stderrs}, {"total", total}, {"total_se", total_se}};
}

void ErrorReport::write_csv(std::ostream& out) const {
  CsvWriter csv(out, {"timestep", "t", "weight", "error", "stderr"});
  for (std::size_t j = 0; j < errors.size(); ++j) {
    csv.field(j + 1).field(times[j]).field(weights[j]).field(errors[j]).field(stderrs[j]);
    csv.end_row();
  }
}

ErrorReport empirical_l2(const ScoreField& model, const ScoreOracle& oracle, const NoisedDataset& ds) {
  ErrorReport r;
  const std::size_t n = ds.steps();
  r.times = ds.schedule.times();
  r.weights = ds.schedule.weights();
  r.errors.resize(n);
  r.stderrs.resize(n);
  parallel_for(n, [&](std::size_t j) {
    const double t = ds.schedule.time(j);
    const Moments mo = moments(row_sq_norms(model.eval(t, ds.x[j]) - oracle.eval(t, ds.x[j])));
    r.errors[j] = mo.mean;
    r.stderrs[j] = mo.se;
  });
  r.recompute_total();
  return r;
}

Mat draw_noised(const ScoreOracle& oracle, double t, std::size_t n, std::uint64_t seed) {
  if (t < 0.0) throw std::invalid_argument("draw_noised needs t >= 0");
  Mat x = sample_target(oracle.target(), n, stream_seed(seed, StreamDomain::monte_carlo, 0));
  const double decay = std::exp(-t);
  const double sd = sigma(t);
  const std::uint64_t noise_seed = stream_seed(seed, StreamDomain::monte_carlo, 1);
  const Eigen::Index d = x.cols();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Rng rng(noise_seed, StreamDomain::monte_carlo, static_cast<std::uint64_t>(i));
    for (Eigen::Index k = 0; k < d; ++k) x(i, k) = decay * x(i, k) + sd * rng.normal();
  }
  return x;
}

ErrorReport expected_l2(const ScoreField& model, const ScoreOracle& oracle, const Schedule& schedule,
                        std::size_t n_mc, std::uint64_t seed) {
  if (n_mc < 1) throw ConfigError("n_mc must be >= 1");
  ErrorReport r;
  const std::size_t n = schedule.size();
  r.times = schedule.times();
  r.weights = schedule.weights();
  r.errors.resize(n);
  r.stderrs.resize(n);
  parallel_for(n, [&](std::size_t j) {
    const double t = schedule.time(j);
    const Mat x = draw_noised(oracle, t, n_mc, stream_seed(seed, StreamDomain::monte_carlo, j));
    const Moments mo = moments(row_sq_norms(model.eval(t, x) - oracle.eval(t, x)));
    r.errors[j] = mo.mean;
    r.stderrs[j] = mo.se;
  });
  r.recompute_total();
  return r;
}

double cross_term(const NoisedDataset& ds, const ScoreField& model, const ScoreOracle& oracle) {
  const std::size_t n = ds.steps();
  const double m = static_cast<double>(ds.m());
  std::vector<double> per_step(n);
  parallel_for(n, [&](std::size_t j) {
    const double t = ds.schedule.time(j);
    const Mat s = oracle.eval(t, ds.x[j]);
    const Mat diff = model.eval(t, ds.x[j]) - s;
    const Mat resid = -ds.z[j] / sigma_sq(t) - s;
    per_step[j] = ds.schedule.weight(j) / m * diff.cwiseProduct(resid).sum();
  });
  double h = 0.0;
  for (double v : per_step) h += v;
  return h;
}

MartingaleLedger martingale_decompose(const NoisedDataset& ds, const ScoreField& model,
                                      const ScoreOracle& oracle) {
  const std::size_t n = ds.steps();
  const auto m = static_cast<Eigen::Index>(ds.m());
  const auto d = static_cast<Eigen::Index>(ds.d());
  const double inv_m = 1.0 / static_cast<double>(m);
  const double t1 = ds.schedule.time(0);

  // Per step: c_j = γ_j e^{-t_j} ζ_j / σ_j² and the posterior means μ_j.
  std::vector<Mat> c(n), mu(n), zeta_scaled(n);
  parallel_for(n, [&](std::size_t j) {
    const double t = ds.schedule.time(j);
    const Mat zeta = (oracle.eval(t, ds.x[j]) - model.eval(t, ds.x[j])) * inv_m;
    zeta_scaled[j] = zeta / sigma_sq(t);
    c[j] = ds.schedule.weight(j) * std::exp(-t) * zeta_scaled[j];
    mu[j].resize(m, d);
    for (Eigen::Index i = 0; i < m; ++i)
      mu[j].row(i) = oracle.posterior_mean_x0(t, ds.x[j].row(i).transpose()).transpose();
  });

  MartingaleLedger led;
  led.R = Mat::Zero(m, static_cast<Eigen::Index>(n));
  Mat g = Mat::Zero(m, d);
  for (std::size_t k = 1; k < n; ++k) {
    const std::size_t l = n - k;  // zero-based index of t_{N-k+1}
    g += c[l];
    led.R.col(static_cast<Eigen::Index>(k - 1)) = row_dots(g, mu[l] - mu[l - 1]);
  }
  Mat g_bar = Mat::Zero(m, d);
  for (std::size_t j = 0; j < n; ++j)
    g_bar += ds.schedule.weight(j) * std::exp(-(ds.schedule.time(j) - t1)) * zeta_scaled[j];
  const Mat cond_z1 = ds.x[0] - std::exp(-t1) * mu[0];
  led.R.col(static_cast<Eigen::Index>(n - 1)) = row_dots(g_bar, ds.z[0] - cond_z1);

  led.h_direct = cross_term(ds, model, oracle);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index k = 0; k < led.R.cols(); ++k) sum += led.R(i, k);
  led.h_decomposed = sum;
  led.rel_gap = std::abs(led.h_direct - led.h_decomposed) / (std::abs(led.h_direct) + 1e-12);
  return led;
}

SpotCheck martingale_spot_check(const NoisedDataset& ds, const ScoreField& model,
                                const ScoreOracle& oracle, std::size_t i, std::size_t k,
                                std::size_t draws, std::uint64_t seed) {
  if (!oracle.target().is_gaussian())
    throw std::invalid_argument("spot check needs a Gaussian target");
  if (ds.mode != NoiseMode::markov) throw std::invalid_argument("spot check needs Markov trajectories");
  const std::size_t n = ds.steps();
  if (k < 1 || k > n) throw std::out_of_range("k must lie in [1, N]");
  if (i >= ds.m()) throw std::out_of_range("trajectory index out of range");
  if (draws < 2) throw std::invalid_argument("spot check needs at least two draws");
  const auto row = static_cast<Eigen::Index>(i);
  const double inv_m = 1.0 / static_cast<double>(ds.m());
  auto scaled_zeta = [&](std::size_t j) -> Vec {
    const double t = ds.schedule.time(j);
    const Vec x = ds.x[j].row(row).transpose();
    return (oracle(t, x) - model(t, x)) * (inv_m / sigma_sq(t));
  };

  Vec values(static_cast<Eigen::Index>(draws));
  const auto d = static_cast<Eigen::Index>(ds.d());
  Vec xi(d);
  if (k < n) {
    const std::size_t l = n - k;
    Vec g = Vec::Zero(d);
    for (std::size_t j = l; j < n; ++j)
      g += ds.schedule.weight(j) * std::exp(-ds.schedule.time(j)) * scaled_zeta(j);
    const double t_hi = ds.schedule.time(l), t_lo = ds.schedule.time(l - 1);
    const Vec x_hi = ds.x[l].row(row).transpose();
    const Vec mu_hi = oracle.posterior_mean_x0(t_hi, x_hi);
    const auto [gain, cov] = oracle.backward_conditional(t_lo, t_hi);
    const Vec mean = gain * x_hi;
    const Mat root = sqrt_factor(cov);
    for (std::size_t r = 0; r < draws; ++r) {
      Rng rng(seed, StreamDomain::monte_carlo, r);
      rng.fill_normal({xi.data(), static_cast<std::size_t>(d)});
      const Vec x_lo = mean + root * xi;
      values(static_cast<Eigen::Index>(r)) = g.dot(mu_hi - oracle.posterior_mean_x0(t_lo, x_lo));
    }
  } else {
    const double t1 = ds.schedule.time(0);
    Vec g_bar = Vec::Zero(d);
    for (std::size_t j = 0; j < n; ++j)
      g_bar += ds.schedule.weight(j) * std::exp(-(ds.schedule.time(j) - t1)) * scaled_zeta(j);
    const Vec x1 = ds.x[0].row(row).transpose();
    const Vec mu1 = oracle.posterior_mean_x0(t1, x1);
    const Mat root = sqrt_factor(oracle.posterior_x0_covariance(t1));
    const Vec cond = x1 - std::exp(-t1) * mu1;
    for (std::size_t r = 0; r < draws; ++r) {
      Rng rng(seed, StreamDomain::monte_carlo, r);
      rng.fill_normal({xi.data(), static_cast<std::size_t>(d)});
      const Vec x0 = mu1 + root * xi;
      const Vec z1 = x1 - std::exp(-t1) * x0;
      values(static_cast<Eigen::Index>(r)) = g_bar.dot(z1 - cond);
    }
  }
  const Moments mo = moments(values);
  return {mo.mean, mo.se, draws};
}

nlohmann::json ExcessRiskReport::to_json() const {
  nlohmann::json j = {{"skipped", skipped}};
  if (skipped) {
    j["warning"] = warning;
    return j;
  }
  j.update({{"selected", selected_name}, {"dsm_losses", dsm_losses}, {"L", L}, {"H", H},
            {"slack", slack}, {"L_le_H", holds}, {"L_le_2H", holds_factor2}});
  return j;
}

ExcessRiskReport excess_risk_check(const NoisedDataset& ds, const std::vector<PoolEntry>& pool,
                                   const ScoreOracle& oracle) {
  ExcessRiskReport rep;
  if (pool.empty()) throw std::invalid_argument("model pool is empty");
  if (std::none_of(pool.begin(), pool.end(), [](const PoolEntry& e) { return e.is_oracle; })) {
    rep.skipped = true;
    rep.warning = "model pool does not contain the true score; inequality not checked";
    return rep;
  }
  const double m = static_cast<double>(ds.m());
  for (const PoolEntry& e : pool) {
    std::vector<double> per_step(ds.steps());
    parallel_for(ds.steps(), [&](std::size_t j) {
      const double t = ds.schedule.time(j);
      const Mat resid = e.field->eval(t, ds.x[j]) + ds.z[j] / sigma_sq(t);
      per_step[j] = ds.schedule.weight(j) / m * resid.squaredNorm();
    });
    double loss = 0.0;
    for (double v : per_step) loss += v;
    rep.dsm_losses.push_back(loss);
  }
  rep.selected = static_cast<std::size_t>(
      std::min_element(rep.dsm_losses.begin(), rep.dsm_losses.end()) - rep.dsm_losses.begin());
  const PoolEntry& best = pool[rep.selected];
  rep.selected_name = best.name;
  rep.L = empirical_l2(*best.field, oracle, ds).total;
  rep.H = cross_term(ds, *best.field, oracle);
  rep.slack = rep.H - rep.L;
  // An ERM over a convex class that contains s attains L = H exactly, so
  // allow for rounding in the two sums.
  const double tol = 1e-9 * (std::abs(rep.L) + std::abs(rep.H));
  rep.holds = rep.L <= rep.H + tol;
  rep.holds_factor2 = rep.L <= 2.0 * rep.H + tol;
  return rep;
}

double kappa_estimate(const ScoreField& model, const ScoreOracle& oracle, double t,
                      std::size_t n_mc, std::uint64_t seed) {
  if (n_mc < 1) throw ConfigError("n_mc must be >= 1");
  const Mat x = draw_noised(oracle, t, n_mc, seed);
  const Vec e2 = row_sq_norms(model.eval(t, x) - oracle.eval(t, x));
  const double m2 = e2.mean();
  const double m4 = e2.array().square().mean();
  if (!(m2 > 0.0)) throw NumericError("kappa is undefined: the error has zero second moment");
  const double kappa = std::pow(m4, 0.25) / std::sqrt(m2);
  if (kappa < 1.0 - 1e-12) throw std::logic_error("kappa estimate below 1");
  return kappa;
}

RegularityReport time_regularity_check(const ScoreField& f, const ScoreOracle& sampler, double t,
                                       double t_prev, double lipschitz, std::size_t n_mc,
                                       double delta, std::uint64_t seed) {
  if (t_prev < 0.0 || t < t_prev) throw std::invalid_argument("need 0 <= t_prev <= t");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
  const double gap = t - t_prev;
  const double d = static_cast<double>(f.dim());
  const double bound = std::exp(gap) * lipschitz * std::sqrt(8.0 * d * gap * std::log(2.0 / delta));
  const Mat x = draw_noised(sampler, t, n_mc, seed);
  const Mat lhs = std::exp(-gap) * f.eval(t, x) - f.eval(t_prev, std::exp(gap) * x);
  const Vec norms = lhs.rowwise().norm();
  const auto bad = (norms.array() > bound).count();
  return {static_cast<double>(bad) / static_cast<double>(n_mc), bound, n_mc};
}

std::vector<double> lipschitz_per_step(const ScoreOracle& oracle, const Schedule& schedule) {
  std::vector<double> out;
  for (double t : schedule.times()) out.push_back(oracle.lipschitz(t));
  return out;
}

double schedule_max_lipschitz(const ScoreOracle& oracle, const Schedule& schedule) {
  const auto l = lipschitz_per_step(oracle, schedule);
  return *std::max_element(l.begin(), l.end());
}

nlohmann::json VarianceSweep::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"delta", r.delta}, {"alpha", r.alpha}, {"bsm_trace", r.bsm_trace},
                         {"bsm_trace_se", r.bsm_trace_se}, {"dsm_trace", r.dsm_trace},
                         {"dsm_trace_se", r.dsm_trace_se},
                         {"bsm_mean", std::vector<double>(r.bsm_mean.begin(), r.bsm_mean.end())},
                         {"bsm_mean_se",
                          std::vector<double>(r.bsm_mean_se.begin(), r.bsm_mean_se.end())}});
  }
  return {{"t", t}, {"rows", rows_json}, {"bsm_slope", bsm_slope}, {"dsm_slope", dsm_slope}};
}

void VarianceSweep::write_csv(std::ostream& out) const {
  CsvWriter csv(out, {"delta", "alpha", "bsm_trace", "bsm_trace_se", "dsm_trace", "dsm_trace_se"});
  for (const auto& r : rows) {
    csv.field(r.delta).field(r.alpha).field(r.bsm_trace).field(r.bsm_trace_se);
    csv.field(r.dsm_trace).field(r.dsm_trace_se);
    csv.end_row();
  }
}

namespace {

struct TraceStats {
  double trace;
  double se;
  Vec mean;
  Vec mean_se;
};

TraceStats trace_stats(const Mat& r) {
  const double n = static_cast<double>(r.rows());
  TraceStats s;
  s.mean = r.colwise().mean().transpose();
  const Mat centered = r.rowwise() - s.mean.transpose();
  const Vec q = centered.rowwise().squaredNorm();
  const Moments mo = moments(q);
  s.trace = q.sum() / (n - 1.0);
  s.se = mo.se;
  s.mean_se = (centered.colwise().squaredNorm().transpose() / (n - 1.0) / n).cwiseSqrt();
  return s;
}

}  // namespace

VarianceSweep variance_rate_sweep(const ScoreOracle& oracle, double t,
                                  const std::vector<double>& deltas, std::size_t n_mc,
                                  std::uint64_t seed, AlphaRule alpha_rule) {
  if (n_mc < 2) throw ConfigError("n_mc must be >= 2");
  VarianceSweep sweep;
  sweep.t = t;
  const auto d = static_cast<Eigen::Index>(oracle.dim());
  const auto n = static_cast<Eigen::Index>(n_mc);
  for (std::size_t r = 0; r < deltas.size(); ++r) {
    const double gap = deltas[r];
    if (!(gap > 0.0 && gap <= t)) throw ConfigError("each delta must lie in (0, t]");
    const double t_prev = std::max(0.0, t - gap);
    const std::uint64_t seed_r = stream_seed(seed, StreamDomain::monte_carlo, r);
    const Mat x0 = sample_target(oracle.target(), n_mc, seed_r);
    Mat x_prev(n, d), z_prev(n, d), x_t(n, d), z_t(n, d);
    const double sd_prev = sigma(t_prev), sd_gap = sigma(gap), decay = std::exp(-gap);
    for (Eigen::Index i = 0; i < n; ++i) {
      Rng rng(seed_r, StreamDomain::monte_carlo, static_cast<std::uint64_t>(i));
      for (Eigen::Index k = 0; k < d; ++k) {
        z_prev(i, k) = sd_prev * rng.normal();
        x_prev(i, k) = std::exp(-t_prev) * x0(i, k) + z_prev(i, k);
      }
      for (Eigen::Index k = 0; k < d; ++k) {
        const double w = sd_gap * rng.normal();
        x_t(i, k) = decay * x_prev(i, k) + w;
        z_t(i, k) = decay * z_prev(i, k) + w;
      }
    }
    const Mat dsm_resid = -z_t / sigma_sq(t) - oracle.eval(t, x_t);
    const double a = t_prev == 0.0 && alpha_rule.mode != AlphaMode::fixed
                         ? 0.0
                         : alpha_rule(t_prev, t);
    Mat bsm_resid = dsm_resid;
    if (a != 0.0) {
      if (t_prev == 0.0) throw ConfigError("a nonzero alpha needs t_prev > 0");
      bsm_resid += a * (oracle.eval(t_prev, x_prev) + z_prev / sigma_sq(t_prev));
    }
    const TraceStats bs = trace_stats(bsm_resid), ds = trace_stats(dsm_resid);
    sweep.rows.push_back({gap, a, bs.trace, bs.se, ds.trace, ds.se, bs.mean, bs.mean_se});
  }
  sweep.bsm_slope = sweep.dsm_slope = std::nan("");
  if (deltas.size() >= 2) {
    std::vector<double> bsm, dsm;
    for (const auto& row : sweep.rows) {
      bsm.push_back(row.bsm_trace);
      dsm.push_back(row.dsm_trace);
    }
    sweep.bsm_slope = loglog_slope(deltas, bsm);
    sweep.dsm_slope = loglog_slope(deltas, dsm);
  }
  return sweep;
}

double loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw std::invalid_argument("loglog_slope needs two or more matching points");
  double mx = 0.0, my = 0.0;
  const double n = static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0))
      throw std::invalid_argument("loglog_slope needs positive inputs");
    mx += std::log(xs[i]);
    my += std::log(ys[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = std::log(xs[i]) - mx;
    sxy += dx * (std::log(ys[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0.0) throw std::invalid_argument("loglog_slope needs distinct xs");
  return sxy / sxx;
}

std::vector<double> mode_weights(const Mat& samples, const std::vector<Vec>& means) {
  if (means.empty()) throw std::invalid_argument("mode_weights needs at least one mean");
  std::vector<double> counts(means.size(), 0.0);
  for (Eigen::Index r = 0; r < samples.rows(); ++r) {
    std::size_t best = 0;
    double best_d = (samples.row(r).transpose() - means[0]).squaredNorm();
    for (std::size_t k = 1; k < means.size(); ++k) {
      const double dist = (samples.row(r).transpose() - means[k]).squaredNorm();
      if (dist < best_d) {
        best_d = dist;
        best = k;
      }
    }
    counts[best] += 1.0;
  }
  for (double& c : counts) c /= static_cast<double>(samples.rows());
  return counts;
}

}  // namespace scorelab
