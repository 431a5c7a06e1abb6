#include "scorelab/optimizer.hpp"

#include <cmath>
#include <numbers>

#include "scorelab/errors.hpp"

namespace scorelab {

double LrSchedule::at(std::size_t step, double base) const {
  if (kind == Kind::constant || total_steps == 0) return base;
  const auto warmup =
      static_cast<std::size_t>(std::llround(warmup_fraction * static_cast<double>(total_steps)));
  if (step < warmup) return base * static_cast<double>(step) / static_cast<double>(warmup);
  if (step >= total_steps) return 0.0;
  const double span = static_cast<double>(total_steps - warmup);
  const double progress = static_cast<double>(step - warmup) / span;
  return 0.5 * base * (1.0 + std::cos(std::numbers::pi * progress));
}

nlohmann::json OptimizerConfig::to_json() const {
  return {{"kind", kind == Kind::sgd ? "sgd" : "adamw"},
          {"lr", lr},
          {"beta1", beta1},
          {"beta2", beta2},
          {"eps", eps},
          {"weight_decay", weight_decay},
          {"lr_schedule", schedule.kind == LrSchedule::Kind::constant ? "constant" : "cosine"},
          {"warmup_fraction", schedule.warmup_fraction}};
}

OptimizerConfig OptimizerConfig::from_json(const nlohmann::json& j) {
  OptimizerConfig c;
  const auto kind = j.value("kind", std::string("adamw"));
  if (kind == "sgd")
    c.kind = Kind::sgd;
  else if (kind == "adamw")
    c.kind = Kind::adamw;
  else
    throw ConfigError("unknown optimizer '" + kind + "'");
  c.lr = j.value("lr", c.lr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  const auto sched = j.value("lr_schedule", std::string("constant"));
  if (sched == "constant")
    c.schedule.kind = LrSchedule::Kind::constant;
  else if (sched == "cosine")
    c.schedule.kind = LrSchedule::Kind::cosine_warmup;
  else
    throw ConfigError("unknown lr_schedule '" + sched + "'");
  c.schedule.warmup_fraction = j.value("warmup_fraction", c.schedule.warmup_fraction);
  return c;
}

Optimizer::Optimizer(OptimizerConfig config, std::size_t parameter_count)
    : config_(config) {
  if (config_.kind == OptimizerConfig::Kind::adamw) {
    first_ = Vec::Zero(static_cast<Eigen::Index>(parameter_count));
    second_ = Vec::Zero(static_cast<Eigen::Index>(parameter_count));
  }
}

void Optimizer::step(Vec& params, const Vec& grad) {
  if (params.size() != grad.size()) throw std::invalid_argument("parameter/gradient size mismatch");
  if (!grad.allFinite())
    throw NumericError("non-finite gradient at optimizer step " + std::to_string(steps_));
  const double lr = current_lr();
  if (config_.kind == OptimizerConfig::Kind::sgd) {
    params -= lr * grad;
  } else {
    if (first_.size() != params.size()) throw std::invalid_argument("optimizer state shape mismatch");
    const double t = static_cast<double>(steps_ + 1);
    first_ = config_.beta1 * first_ + (1.0 - config_.beta1) * grad;
    second_ = config_.beta2 * second_ + (1.0 - config_.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(config_.beta1, t);
    const double c2 = 1.0 - std::pow(config_.beta2, t);
    if (config_.weight_decay != 0.0) params *= 1.0 - lr * config_.weight_decay;
    params.array() -=
        lr * (first_.array() / c1) / ((second_.array() / c2).sqrt() + config_.eps);
  }
  ++steps_;
}

}  // namespace scorelab
