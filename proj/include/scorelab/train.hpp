#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "scorelab/models.hpp"
#include "scorelab/optimizer.hpp"
#include "scorelab/schedule.hpp"

namespace scorelab {

/// (1/mN) Σ_i Σ_j ||f(t_j, x_j^(i)) + z_j^(i) / σ_{t_j}²||².
double dsm_total_loss(const ScoreField& model, const NoisedDataset& ds);

struct DsmConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 1000;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  /// Trace every n-th optimizer step (the last step is always traced).
  std::size_t log_every = 1;
};

struct TraceRow {
  std::size_t step;
  double loss;
  double lr;
};

struct MlpTrainResult {
  TimeMlp model;
  std::vector<TraceRow> trace;
};

/// Minibatch training of one shared network on the joint DSM objective. Each
/// epoch visits every (i, j) pair once in an order drawn from
/// Rng(seed, minibatch, epoch). Zero epochs returns the initial network.
MlpTrainResult train_dsm(const TimeMlp& init, const NoisedDataset& ds, const DsmConfig& config);

/// Exact per-timestep least-squares DSM fit, A_j x + b_j ≈ -z_j / σ_j².
LinearScoreModel train_dsm_linear(const NoisedDataset& ds);

enum class AlphaMode { ratio, sqrt, fixed, adaptive };
std::string to_string(AlphaMode mode);
AlphaMode alpha_mode_from_string(const std::string& name);

/// Bootstrap weight for the step t_prev -> t.
///   ratio:    e^{-(t - t_prev)} σ_{t_prev}² / σ_t²
///   sqrt:     e^{-(t - t_prev)} sqrt(σ_{t_prev}² / σ_t²)
///   adaptive: 1 - σ_t / (σ_{t - t_prev} + σ_t)
/// Fixed mode is handled by AlphaRule. Throws when t_prev >= t.
double alpha(double t_prev, double t, AlphaMode mode = AlphaMode::ratio);

struct AlphaRule {
  AlphaMode mode = AlphaMode::ratio;
  double fixed_value = 0.0;
  double operator()(double t_prev, double t) const;
};

struct BsmTargets {
  Mat targets;  ///< ỹ, one row per trajectory
  double alpha;
};

/// ỹ_i = -z_k^(i)/σ_k² + α (prev(t_{k-1}, x_{k-1}^(i)) + z_{k-1}^(i)/σ_{k-1}²) for
/// zero-based step k >= 1.
BsmTargets bsm_targets(const NoisedDataset& ds, std::size_t k, const ScoreField& prev_model,
                       double alpha_k);

struct BsmConfig {
  /// Number of leading timesteps fitted with plain DSM (1 <= k0 <= N).
  std::size_t k0 = 1;
  AlphaRule alpha;
  /// Minibatch settings for the per-step network fits.
  std::size_t epochs_per_step = 1;
  std::size_t batch_size = 1000;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
};

/// Sequential per-timestep least-squares fits: DSM targets for the first k0
/// steps, bootstrapped targets built from the previous step's fit afterwards.
LinearScoreModel train_bsm_linear(const NoisedDataset& ds, const BsmConfig& config);

/// One network per grid time, evaluated only at its own time.
class PerStepMlp final : public ScoreField {
 public:
  explicit PerStepMlp(std::vector<TimeMlp> nets);
  std::size_t dim() const override { return nets_.front().dim(); }
  Mat eval(double t, const Mat& points) const override;
  const std::vector<TimeMlp>& nets() const { return nets_; }

 private:
  std::vector<TimeMlp> nets_;
};

/// Per-timestep network fits in increasing k, each warm-started from the
/// previous step's parameters. k0 = N reproduces per-step DSM exactly.
PerStepMlp train_bsm_mlp(const TimeMlp& init, const NoisedDataset& ds, const BsmConfig& config);

/// Shared-network bootstrapping (experimental): plain DSM for the first
/// `bootstrap_start_epoch` epochs; afterwards, at the start of each epoch the
/// targets of steps k >= k0 are rebuilt from a frozen snapshot of the network.
MlpTrainResult train_bsm_shared(const TimeMlp& init, const NoisedDataset& ds,
                                const DsmConfig& config, std::size_t k0, AlphaRule alpha,
                                std::size_t bootstrap_start_epoch);

}  // namespace scorelab
