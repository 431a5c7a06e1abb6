// Acceptance checks 1-11. `acceptance` runs all of them, `acceptance N` runs
// one. Each prints a single PASS/FAIL line; 9 prints REVIEW instead of FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>

#include <boost/multiprecision/cpp_int.hpp>

#include "scorelab/analysis.hpp"
#include "scorelab/experiments.hpp"
#include "scorelab/models.hpp"
#include "scorelab/rng.hpp"
#include "scorelab/sample.hpp"
#include "scorelab/targets.hpp"
#include "scorelab/train.hpp"

using namespace scorelab;
using nlohmann::json;

namespace {

struct Outcome {
  enum { pass, fail, review } status;
  std::string detail;
};

double s2(double t) { return 1.0 - std::exp(-2.0 * t); }

Mat noised_precision(const Mat& cov, double t) {
  return (std::exp(-2 * t) * cov + s2(t) * Mat::Identity(cov.rows(), cov.cols())).inverse();
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

// 1. Tweedie regression -----------------------------------------------------------
Outcome tweedie_regression() {
  const Mat cov = random_spd_uniform_spectrum(2, 1.0, 2.0, 11);
  const double t = 0.5;
  const NoisedDataset ds = noise_dataset(sample_target(TargetSpec::gaussian(cov), 100000, 1),
                                         Schedule::make(ScheduleKind::linear, 1, t), 1);
  const AffineFit fit = fit_linear_least_squares(ds.x[0], -ds.z[0] / s2(t));
  const double err = (fit.weight + noised_precision(cov, t)).norm();
  return {err < 0.05 ? Outcome::pass : Outcome::fail, "frobenius error " + fmt(err) + " (< 0.05)"};
}

// 2. Martingale identity ----------------------------------------------------------
Outcome martingale_identity() {
  const Mat cov = random_spd_uniform_spectrum(2, 1.0, 2.0, 12);
  const ScoreOracle oracle(TargetSpec::gaussian(cov));
  const Schedule grid = Schedule::make(ScheduleKind::linear, 20, 1.0);
  double worst = 0.0;
  for (std::uint64_t inst = 0; inst < 20; ++inst) {
    const NoisedDataset ds = noise_dataset(sample_target(oracle.target(), 10, inst), grid, inst);
    Rng rng(inst, StreamDomain::experiment, 99);
    LinearScoreModel f(grid, 2);
    for (std::size_t j = 0; j < 20; ++j) {
      AffineFit a;
      a.weight = Mat(2, 2);
      a.bias = Vec(2);
      for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 2; ++c) a.weight(r, c) = rng.normal();
        a.bias(r) = rng.normal();
      }
      f.set(j, a);
    }
    // H^f written out from its definition.
    double h = 0.0;
    for (std::size_t j = 0; j < 20; ++j) {
      const double tj = grid.time(j);
      const Mat s = ds.x[j] * (-noised_precision(cov, tj));
      h += grid.weight(j) / 10.0 * (f.eval(tj, ds.x[j]) - s).cwiseProduct(-ds.z[j] / s2(tj) - s).sum();
    }
    const MartingaleLedger led = martingale_decompose(ds, f, oracle);
    worst = std::max(worst, std::abs(h - led.R.sum()) / (std::abs(h) + 1e-12));
  }
  return {worst < 1e-8 ? Outcome::pass : Outcome::fail, "max relative gap " + fmt(worst) + " over 20 instances (< 1e-8)"};
}

// 3. Excess-risk inequality -------------------------------------------------------
Outcome excess_risk() {
  int holds = 0, holds2 = 0, erm_selected = 0;
  double worst_ratio = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Mat cov = random_spd_uniform_spectrum(2, 1.0, 2.0, 100 + seed);
    const ScoreOracle oracle(TargetSpec::gaussian(cov));
    const Schedule grid = Schedule::make(ScheduleKind::linear, 10, 1.0);
    const NoisedDataset ds = noise_dataset(sample_target(oracle.target(), 50, seed), grid, seed);
    const LinearScoreModel erm = train_dsm_linear(ds);
    std::vector<LinearScoreModel> others;
    Rng rng(seed, StreamDomain::experiment, 3);
    for (double scale : {0.02, 0.1, 0.5}) {
      LinearScoreModel f(grid, 2);
      for (std::size_t j = 0; j < 10; ++j) {
        Mat e(2, 2);
        for (int r = 0; r < 2; ++r)
          for (int c = 0; c < 2; ++c) e(r, c) = rng.normal();
        f.set(j, {-noised_precision(cov, grid.time(j)) + scale * e, Vec::Zero(2)});
      }
      others.push_back(std::move(f));
    }
    std::vector<PoolEntry> pool{{"oracle", &oracle, true}, {"least-squares", &erm, false}};
    for (auto& f : others) pool.push_back({"perturbed", &f, false});
    const ExcessRiskReport rep = excess_risk_check(ds, pool, oracle);
    holds += rep.holds;
    holds2 += rep.holds_factor2;
    erm_selected += rep.selected_name == "least-squares";
    if (rep.H > 0) worst_ratio = std::max(worst_ratio, rep.L / rep.H);
  }
  return {holds == 20 ? Outcome::pass : Outcome::fail,
          "L<=H on " + std::to_string(holds) + "/20, L<=2H on " + std::to_string(holds2) +
              "/20, least-squares selected " + std::to_string(erm_selected) + "/20, max L/H " +
              fmt(worst_ratio)};
}

// 4. Bootstrap unbiasedness and variance order -------------------------------------
Outcome variance_order() {
  const ScoreOracle oracle(TargetSpec::gaussian(Mat::Identity(2, 2)));
  const VarianceSweep sw = variance_rate_sweep(oracle, 1.0, {0.2, 0.1, 0.05}, 100000, 4);
  double worst_z = 0.0;
  for (const auto& row : sw.rows)
    for (Eigen::Index k = 0; k < row.bsm_mean.size(); ++k)
      worst_z = std::max(worst_z, std::abs(row.bsm_mean(k)) / row.bsm_mean_se(k));
  const bool ok = worst_z < 4.0 && std::abs(sw.bsm_slope - 1.0) <= 0.25 && std::abs(sw.dsm_slope) <= 0.25;
  return {ok ? Outcome::pass : Outcome::fail, "max |mean|/SE " + fmt(worst_z) + ", bsm slope " +
                                                  fmt(sw.bsm_slope) + ", dsm slope " + fmt(sw.dsm_slope)};
}

// 5. Second-order Tweedie ---------------------------------------------------------
Outcome second_order_tweedie() {
  const double t = 1.0, tp = 0.8, gap = t - tp;
  const ScoreOracle oracle(TargetSpec::gaussian(Mat::Identity(1, 1)));
  const std::size_t n = 2000000;
  const double centers[3] = {-1.0, 0.0, 1.0}, half = 0.05;
  double sum[3] = {0, 0, 0}, sq[3] = {0, 0, 0}, closed[3] = {0, 0, 0}, lib[3] = {0, 0, 0};
  std::size_t count[3] = {0, 0, 0};
  Rng rng(5, StreamDomain::monte_carlo, 0);
  const double sg = std::sqrt(s2(gap));
  for (std::size_t i = 0; i < n; ++i) {
    const double x0 = rng.normal();
    const double xp = std::exp(-tp) * x0 + std::sqrt(s2(tp)) * rng.normal();
    const double w = sg * rng.normal();
    const double xt = std::exp(-gap) * xp + w;
    for (int b = 0; b < 3; ++b)
      if (std::abs(xt - centers[b]) < half) {
        const double zz = w * w;  // z_{t,t'} = x_t - e^{-Δ} x_{t'}
        sum[b] += zz;
        sq[b] += zz * zz;
        // σ⁴ h + σ⁴ s² + σ² with h = -1, s = -x for N(0, 1); averaged over the bin.
        const double v = s2(gap);
        closed[b] += -v * v + v * v * xt * xt + v;
        if (count[b] % 1000 == 0) lib[b] = oracle.conditional_noise_covariance(t, tp, Vec::Constant(1, xt))(0, 0) -
                                             (-v * v + v * v * xt * xt + v);
        ++count[b];
      }
  }
  double worst = 0.0, lib_gap = 0.0;
  for (int b = 0; b < 3; ++b) {
    const double nb = static_cast<double>(count[b]);
    const double mean = sum[b] / nb, var = sq[b] / nb - mean * mean;
    const double se = std::sqrt(var / nb);
    worst = std::max(worst, std::abs(mean - closed[b] / nb) / se);
    lib_gap = std::max(lib_gap, std::abs(lib[b]));
  }
  const bool ok = worst < 3.0 && lib_gap < 1e-12;
  return {ok ? Outcome::pass : Outcome::fail,
          "max |MC - closed form| / SE " + fmt(worst) + " at x_t in {-1, 0, 1}; oracle formula gap " + fmt(lib_gap)};
}

// 6. GMM sampling -----------------------------------------------------------------
Outcome gmm_sampling() {
  Vec a(1), b(1);
  a << 5;
  b << -5;
  const Schedule grid = Schedule::make(ScheduleKind::linear, 1000, 5.0);
  const ScoreOracle oracle(TargetSpec::gmm({a, b}, {1.0, 1.0}, {0.7, 0.3}));
  SamplerConfig cfg{grid};
  cfg.n = 10000;
  cfg.seed = 6;
  const Mat xs = reverse_sample(oracle, cfg);
  const double w_pos = (xs.col(0).array() > 0.0).cast<double>().mean();
  const bool ok = std::abs(w_pos - 0.7) <= 0.05 && std::abs((1 - w_pos) - 0.3) <= 0.05;
  return {ok ? Outcome::pass : Outcome::fail, "mode weights (" + fmt(w_pos) + ", " + fmt(1 - w_pos) + ")"};
}

// 7. BSM vs DSM, linear Gaussian ------------------------------------------------------
Outcome bsm_vs_dsm() {
  json cfg = normalize_config(preset_config("gaussian-linear"));
  const Schedule grid = build_schedule(cfg["schedule"]);
  const auto m = cfg["data"]["m"].get<std::size_t>();
  const auto k0 = cfg["train"]["k0"].get<std::size_t>();
  int better_avg = 0;
  double worst_frac = 1.0;
  std::ostringstream per;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const TargetSpec target = build_target(cfg["target"], seed);
    const Mat& cov = target.as_gaussian().covariance;
    const NoisedDataset ds = noise_dataset(sample_target(target, m, seed), grid, seed);
    const LinearScoreModel dsm = train_dsm_linear(ds);
    BsmConfig bc;
    bc.k0 = k0;
    const LinearScoreModel bsm = train_bsm_linear(ds, bc);
    std::size_t wins = 0, late = 0;
    double sum_b = 0.0, sum_d = 0.0;
    for (std::size_t j = k0; j < grid.size(); ++j) {
      const Mat p = noised_precision(cov, grid.time(j));
      const double eb = (bsm.weight(j) + p).squaredNorm() + bsm.bias(j).squaredNorm();
      const double ed = (dsm.weight(j) + p).squaredNorm() + dsm.bias(j).squaredNorm();
      wins += eb <= ed;
      ++late;
      sum_b += eb;
      sum_d += ed;
    }
    const double frac = static_cast<double>(wins) / static_cast<double>(late);
    worst_frac = std::min(worst_frac, frac);
    better_avg += sum_b < sum_d;
    per << " " << fmt(frac);
  }
  const bool ok = worst_frac >= 0.8 && better_avg >= 4;
  return {ok ? Outcome::pass : Outcome::fail, "late-step win fraction per seed" + per.str() +
                                                  "; lower late average on " + std::to_string(better_avg) + "/5 seeds"};
}

// 8. Fast-inference pigeonhole ------------------------------------------------------
Outcome pigeonhole() {
  using boost::multiprecision::cpp_rational;
  Rng rng(8, StreamDomain::experiment, 0);
  int failures = 0, disagreements = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(60);
    const std::size_t k = 1 + rng.below(n);
    const double delta = rng.uniform(1e-3, 1.0);
    std::vector<double> e(n);
    for (double& v : e) v = trial % 3 == 0 ? std::floor(rng.uniform(0, 4)) * 0.1 : -std::log(rng.uniform()) * 10;
    const SubsetChoice c = best_subset(e, delta, k);
    // Independent exact check: k Δ Σ_{j≡i} e_j minimized over i vs Δ Σ e_j.
    const cpp_rational d(delta);
    cpp_rational total = 0, best = -1;
    std::vector<cpp_rational> sums(k, 0);
    for (std::size_t j = 0; j < n; ++j) {
      total += d * cpp_rational(e[j]);
      sums[j % k] += cpp_rational(static_cast<long long>(k)) * d * cpp_rational(e[j]);
    }
    std::size_t arg = 0;
    for (std::size_t i = 0; i < k; ++i)
      if (best < 0 || sums[i] < best) {
        best = sums[i];
        arg = i;
      }
    failures += !(best <= total) || !c.bound_ok;
    disagreements += sums[c.offset - 1] != best || arg + 1 != c.offset;
  }
  const bool ok = failures == 0 && disagreements == 0;
  return {ok ? Outcome::pass : Outcome::fail, std::to_string(failures) + " bound failures, " +
                                                  std::to_string(disagreements) + " argmin disagreements in 1000 trials"};
}

// 9. Dimension sweep (reviewed, not gating) -------------------------------------------
Outcome dimension_sweep() {
  const json cfg = normalize_config(preset_config("dimension-sweep"));
  const std::vector<std::size_t> dims{8, 16, 32, 64};
  std::vector<double> xs, ys;
  std::ostringstream pts;
  for (std::size_t d : dims) {
    double acc = 0.0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) acc += dimension_sweep_point(d, cfg, seed).scaled;
    xs.push_back(static_cast<double>(d));
    ys.push_back(acc / 3.0);
    pts << " d=" << d << ":" << fmt(acc / 3.0);
  }
  const double slope = loglog_slope(xs, ys);
  return {std::abs(slope) < 0.3 ? Outcome::pass : Outcome::review, "log-log slope " + fmt(slope) + pts.str()};
}

// 10. MLP gradient check -------------------------------------------------------------
Outcome gradient_check() {
  int worst_ok = 25;
  double worst_rel = 0.0;
  const Schedule grid = Schedule::make(ScheduleKind::linear, 10, 2.0);
  for (std::uint64_t run = 0; run < 20; ++run) {
    TimeMlp net = TimeMlp::initialized({5, 32, 32, 4}, run % 2 ? Activation::relu : Activation::tanh, grid, run);
    Rng rng(run, StreamDomain::experiment, 10);
    std::vector<MlpExample> ex;
    for (int i = 0; i < 16; ++i) {
      Vec x(4), y(4);
      for (int k = 0; k < 4; ++k) {
        x(k) = rng.normal();
        y(k) = rng.normal();
      }
      ex.push_back({grid.time(rng.below(10)), x, y});
    }
    Vec grad;
    net.loss_grad(ex, grad);
    Vec scratch;
    int ok = 0;
    for (int c = 0; c < 25; ++c) {
      const auto k = static_cast<Eigen::Index>(rng.below(net.parameter_count()));
      const double keep = net.parameters()(k), h = 1e-5;
      net.parameters()(k) = keep + h;
      const double up = net.loss_grad(ex, scratch);
      net.parameters()(k) = keep - h;
      const double down = net.loss_grad(ex, scratch);
      net.parameters()(k) = keep;
      const double fd = (up - down) / (2 * h);
      const double rel = std::abs(fd - grad(k)) / std::max({std::abs(fd), std::abs(grad(k)), 1e-8});
      worst_rel = std::max(worst_rel, rel);
      ok += rel < 1e-4;
    }
    worst_ok = std::min(worst_ok, ok);
  }
  // ≥ 99% of 25 coordinates means all 25.
  return {worst_ok == 25 ? Outcome::pass : Outcome::fail,
          "worst run " + std::to_string(worst_ok) + "/25 coordinates, max relative error " + fmt(worst_rel)};
}

// 11. κ sanity ---------------------------------------------------------------------
Outcome kappa_sanity() {
  const ScoreOracle o(TargetSpec::gaussian(Mat::Identity(1, 1)));
  const FunctionField lin(1, [&](double t, const Vec& x) { return Vec(o.score(t, x) + 0.5 * x); });
  const double k = kappa_estimate(lin, o, 1.0, 300000, 11);
  const double ref = std::pow(3.0, 0.25);
  // κ >= 1 on a spread of error shapes (kappa_estimate throws otherwise).
  bool all_ge1 = k >= 1.0;
  Mat cov = random_spd_uniform_spectrum(3, 1.0, 2.0, 3);
  const ScoreOracle o3(TargetSpec::gaussian(cov));
  const FunctionField cubic(3, [&](double t, const Vec& x) { return Vec(o3.score(t, x) + x.array().cube().matrix()); });
  const FunctionField offset(3, [&](double t, const Vec& x) { return Vec(o3.score(t, x).array() + 1.0); });
  const FunctionField mixed(3, [&](double t, const Vec& x) { return Vec(o3.score(t, x) + 0.3 * x + Vec::Ones(3)); });
  for (const ScoreField* f : {static_cast<const ScoreField*>(&cubic), static_cast<const ScoreField*>(&offset),
                              static_cast<const ScoreField*>(&mixed)})
    for (double t : {0.1, 1.0, 3.0}) all_ge1 = all_ge1 && kappa_estimate(*f, o3, t, 20000, 12) >= 1.0;
  const bool ok = std::abs(k - ref) < 0.05 && all_ge1;
  return {ok ? Outcome::pass : Outcome::fail, "kappa " + fmt(k) + " vs 3^(1/4) = " + fmt(ref) +
                                                  (all_ge1 ? ", all estimates >= 1" : ", an estimate fell below 1")};
}

const std::vector<std::pair<std::string, std::function<Outcome()>>>& criteria() {
  static const std::vector<std::pair<std::string, std::function<Outcome()>>> list{
      {"tweedie regression", tweedie_regression},
      {"martingale identity", martingale_identity},
      {"excess-risk inequality", excess_risk},
      {"bootstrap unbiasedness and variance order", variance_order},
      {"second-order tweedie", second_order_tweedie},
      {"gmm sampling", gmm_sampling},
      {"bsm vs dsm on the linear gaussian", bsm_vs_dsm},
      {"fast-inference pigeonhole", pigeonhole},
      {"dimension sweep", dimension_sweep},
      {"mlp gradient check", gradient_check},
      {"kappa sanity", kappa_sanity},
  };
  return list;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::size_t> which;
  if (argc > 1) {
    const long c = std::strtol(argv[1], nullptr, 10);
    if (c < 1 || c > static_cast<long>(criteria().size())) {
      std::cerr << "usage: acceptance [1-" << criteria().size() << "]\n";
      return 2;
    }
    which.push_back(static_cast<std::size_t>(c));
  } else {
    for (std::size_t c = 1; c <= criteria().size(); ++c) which.push_back(c);
  }
  int failed = 0;
  for (std::size_t c : which) {
    const auto& [name, fn] = criteria()[c - 1];
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = fn();
    } catch (const std::exception& e) {
      out = {Outcome::fail, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const char* tag = out.status == Outcome::pass ? "PASS" : out.status == Outcome::review ? "REVIEW" : "FAIL";
    std::printf("%s criterion %zu (%s): %s [%.1fs]\n", tag, c, name.c_str(), out.detail.c_str(), secs);
    std::fflush(stdout);
    failed += out.status == Outcome::fail;
  }
  return failed == 0 ? 0 : 1;
}
