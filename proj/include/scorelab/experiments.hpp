#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "scorelab/models.hpp"
#include "scorelab/schedule.hpp"
#include "scorelab/targets.hpp"
#include "scorelab/train.hpp"

namespace scorelab {

const std::vector<std::string>& experiment_names();

/// Fully defaulted configuration of a named experiment.
nlohmann::json preset_config(const std::string& name);

/// Sets a dotted path ("train.epochs=50"). The value is parsed as JSON when
/// possible and kept as a string otherwise.
void apply_override(nlohmann::json& config, const std::string& assignment);

/// Merges `raw` over the defaults of its experiment, fills derived defaults
/// (k0 = N/4) and checks every field. All problems are collected into one
/// ConfigError; when `source` holds the original text, each message carries
/// the line of the offending key. `base_dir` resolves relative file paths.
nlohmann::json normalize_config(const nlohmann::json& raw, const std::string& source = "",
                                const std::string& base_dir = ".");

/// Reads, parses, overrides and normalizes a config file.
nlohmann::json load_config(const std::string& path, const std::vector<std::string>& overrides = {});

/// Builds the target of a normalized config. Random covariances are drawn
/// from `seed`.
TargetSpec build_target(const nlohmann::json& target, std::uint64_t seed,
                        const std::string& base_dir = ".");
Schedule build_schedule(const nlohmann::json& schedule);
OptimizerConfig build_optimizer(const nlohmann::json& train);
AlphaRule build_alpha(const nlohmann::json& train);
std::vector<std::size_t> mlp_widths(std::size_t dim, const nlohmann::json& model);

// --- per-experiment kernels ------------------------------------------------------

/// ||Â_j + Σ_{t_j}^{-1}||_F² + ||b_j||² per grid time.
std::vector<double> linear_score_errors(const LinearScoreModel& model, const ScoreOracle& oracle);

struct SweepPoint {
  std::size_t dim;
  std::size_t params;
  double error;   ///< held-out error averaged over steps 2..N
  double scaled;  ///< error / (params · log log d)
};

/// One dimension of the dimension sweep: a two-layer network trained with
/// joint DSM on m samples of a Gaussian with spectrum in [1, 2].
SweepPoint dimension_sweep_point(std::size_t dim, const nlohmann::json& config, std::uint64_t seed);

// --- orchestration --------------------------------------------------------------

struct RunResult {
  std::string output_dir;
  nlohmann::json summary;
  std::vector<std::string> files;  ///< relative to output_dir
};

/// Runs a normalized config: per-seed CSVs, summary.json and MANIFEST.
RunResult run_experiment(const nlohmann::json& config);

/// Saves a model checkpoint; supports linear, mlp and per-step mlp models.
void save_score_model(const std::string& path, const ScoreField& model);
std::unique_ptr<ScoreField> load_score_model(const std::string& path);
/// Grid stored in a checkpoint.
Schedule checkpoint_schedule(const std::string& path);

}  // namespace scorelab

namespace scorelab {

/// Trains the config's model with `method` ("dsm" or "bsm") on the first
/// seed's dataset and writes model.ckpt (plus trace.csv for networks and one
/// checkpoint per timestep under steps/ for bootstrapped runs).
std::vector<std::string> train_from_config(const nlohmann::json& config, const std::string& method,
                                           const std::string& out_dir);

}  // namespace scorelab
