#pragma once

#include <cstddef>
#include <string>

#include "json.hpp"
#include "scorelab/linalg.hpp"

namespace scorelab {

struct LrSchedule {
  enum class Kind { constant, cosine_warmup };
  Kind kind = Kind::constant;
  double warmup_fraction = 0.1;
  std::size_t total_steps = 0;

  /// Learning rate at zero-based `step`. Cosine-with-warmup ramps linearly
  /// from 0 to `base` over round(warmup_fraction * total_steps) steps, then
  /// decays as base (1 + cos(π progress)) / 2, reaching 0 at total_steps.
  double at(std::size_t step, double base) const;
};

struct OptimizerConfig {
  enum class Kind { sgd, adamw };
  Kind kind = Kind::adamw;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  LrSchedule schedule;

  nlohmann::json to_json() const;
  static OptimizerConfig from_json(const nlohmann::json& j);
};

/// SGD or AdamW (decoupled weight decay) with bias-corrected moments.
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, std::size_t parameter_count);

  /// Applies one update with the scheduled learning rate of the current step,
  /// then advances the step counter. Throws NumericError on non-finite grads.
  void step(Vec& params, const Vec& grad);

  double current_lr() const { return config_.schedule.at(steps_, config_.lr); }
  std::size_t steps() const { return steps_; }
  const OptimizerConfig& config() const { return config_; }

 private:
  OptimizerConfig config_;
  Vec first_;
  Vec second_;
  std::size_t steps_ = 0;
};

}  // namespace scorelab
