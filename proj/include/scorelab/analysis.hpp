#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "scorelab/linalg.hpp"
#include "scorelab/schedule.hpp"
#include "scorelab/targets.hpp"
#include "scorelab/train.hpp"

namespace scorelab {

/// Per-timestep mean squared score errors e_j (unweighted) with standard
/// errors; total = Σ γ_j e_j.
struct ErrorReport {
  std::vector<double> times;
  std::vector<double> weights;
  std::vector<double> errors;
  std::vector<double> stderrs;
  double total = 0.0;
  double total_se = 0.0;
  void recompute_total();
  nlohmann::json to_json() const;
  /// Columns timestep, t, weight, error, stderr.
  void write_csv(std::ostream& out) const;
};

/// (1/m) Σ_i ||f(t_j, x_j^(i)) - s(t_j, x_j^(i))||² over the stored dataset.
ErrorReport empirical_l2(const ScoreField& model, const ScoreOracle& oracle, const NoisedDataset& ds);

/// Monte Carlo E ||f - s||² at each grid time on fresh draws x_t ~ p_t.
ErrorReport expected_l2(const ScoreField& model, const ScoreOracle& oracle, const Schedule& schedule,
                        std::size_t n_mc, std::uint64_t seed);

/// n fresh draws from p_t (rows). Draw i uses its own stream under `seed`.
Mat draw_noised(const ScoreOracle& oracle, double t, std::size_t n, std::uint64_t seed);

// --- martingale decomposition of the cross term ------------------------------

struct MartingaleLedger {
  /// R(i, k-1) = R_{i,k} for k = 1..N.
  Mat R;
  double h_direct = 0.0;
  double h_decomposed = 0.0;
  double rel_gap = 0.0;
};

/// Computes H^f = Σ_{i,j} (γ_j/m) <f - s, -z/σ² - s> directly and again as
/// Σ_{i,k} R_{i,k}, where (1-based, ζ = (s - f)/m)
///   R_{i,k} = <Σ_{j=N-k+1}^{N} γ_j e^{-t_j} ζ_j / σ_j², μ_{N-k+1} - μ_{N-k}>,  k < N
///   R_{i,N} = <Σ_j γ_j e^{-(t_j - t_1)} ζ_j / σ_j², z_1 - E[z_1 | x_1]>
/// with μ_j = E[x_0 | x_{t_j}].
MartingaleLedger martingale_decompose(const NoisedDataset& ds, const ScoreField& model,
                                      const ScoreOracle& oracle);

struct SpotCheck {
  double mean;
  double stderr;
  std::size_t draws;
};

/// Conditional mean of R_{i,k} (k 1-based) given the retained prefix
/// x_{t_N}, ..., x_{t_{N-k+1}}: the next state back in the filtration is
/// regenerated `draws` times from its exact conditional law. Gaussian targets
/// on Markov datasets only.
SpotCheck martingale_spot_check(const NoisedDataset& ds, const ScoreField& model,
                                const ScoreOracle& oracle, std::size_t i, std::size_t k,
                                std::size_t draws, std::uint64_t seed);

// --- excess risk ------------------------------------------------------------

struct PoolEntry {
  std::string name;
  const ScoreField* field;
  bool is_oracle = false;
};

struct ExcessRiskReport {
  bool skipped = false;
  std::string warning;
  std::size_t selected = 0;
  std::string selected_name;
  std::vector<double> dsm_losses;  ///< γ-weighted empirical DSM loss per pool entry
  double L = 0.0;                  ///< Σ_j (γ_j/m) Σ_i ||f̂ - s||²
  double H = 0.0;                  ///< cross term H^{f̂}
  double slack = 0.0;              ///< H - L
  bool holds = false;              ///< L <= H
  bool holds_factor2 = false;      ///< L <= 2H
  nlohmann::json to_json() const;
};

/// Picks f̂ = argmin over the pool of Σ_j (γ_j/m) Σ_i ||f + z/σ²||² and
/// compares L(f̂) with H^{f̂}. Skipped (with a warning) when no pool entry is
/// flagged as the oracle.
ExcessRiskReport excess_risk_check(const NoisedDataset& ds, const std::vector<PoolEntry>& pool,
                                   const ScoreOracle& oracle);

/// Direct cross term Σ_{i,j} (γ_j/m) <f - s, -z/σ² - s>.
double cross_term(const NoisedDataset& ds, const ScoreField& model, const ScoreOracle& oracle);

// --- moments, regularity, variance rates -------------------------------------

/// E[||f-s||⁴]^{1/4} / E[||f-s||²]^{1/2} on n_mc fresh draws of x_t. Throws
/// NumericError when the second moment vanishes.
double kappa_estimate(const ScoreField& model, const ScoreOracle& oracle, double t,
                      std::size_t n_mc, std::uint64_t seed);

struct RegularityReport {
  double violation_fraction;
  double bound;
  std::size_t draws;
};

/// Fraction of draws x ~ p_t where ||e^{-Δ} f(t, x) - f(t', e^{Δ} x)|| exceeds
/// e^{Δ} L sqrt(8 d Δ log(2/δ)), Δ = t - t'.
RegularityReport time_regularity_check(const ScoreField& f, const ScoreOracle& sampler, double t,
                                       double t_prev, double lipschitz, std::size_t n_mc,
                                       double delta, std::uint64_t seed);

/// Lipschitz constant of the Gaussian score at each grid time, and its max.
std::vector<double> lipschitz_per_step(const ScoreOracle& oracle, const Schedule& schedule);
double schedule_max_lipschitz(const ScoreOracle& oracle, const Schedule& schedule);

struct VarianceRow {
  double delta;
  double alpha;
  double bsm_trace;
  double bsm_trace_se;
  double dsm_trace;
  double dsm_trace_se;
  Vec bsm_mean;
  Vec bsm_mean_se;
};

struct VarianceSweep {
  double t;
  std::vector<VarianceRow> rows;
  double bsm_slope;
  double dsm_slope;
  nlohmann::json to_json() const;
  void write_csv(std::ostream& out) const;
};

/// For each Δ: t' = t - Δ, residuals of the bootstrapped target (oracle score
/// at t' as the previous fit) and of the plain DSM target against s(t, x_t),
/// with trace covariances and log-log slopes in Δ.
VarianceSweep variance_rate_sweep(const ScoreOracle& oracle, double t,
                                  const std::vector<double>& deltas, std::size_t n_mc,
                                  std::uint64_t seed, AlphaRule alpha = {});

/// Least-squares slope of log ys on log xs.
double loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys);

/// Fraction of rows nearest (Euclidean) to each mean.
std::vector<double> mode_weights(const Mat& samples, const std::vector<Vec>& means);

}  // namespace scorelab
