#include "scorelab/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "scorelab/errors.hpp"
#include "scorelab/parallel.hpp"
#include "scorelab/rng.hpp"

namespace scorelab {

double dsm_total_loss(const ScoreField& model, const NoisedDataset& ds) {
  const std::size_t n = ds.steps();
  std::vector<double> per_step(n);
  parallel_for(n, [&](std::size_t j) {
    const double t = ds.schedule.time(j);
    const Mat pred = model.eval(t, ds.x[j]);
    per_step[j] = (pred + ds.z[j] / sigma_sq(t)).squaredNorm();
  });
  double total = 0.0;
  for (double v : per_step) total += v;
  return total / static_cast<double>(ds.m() * n);
}

namespace {

/// Shared minibatch loop over all (i, j) pairs with materialized targets.
/// `before_epoch(epoch, net)` may rebuild targets in place.
template <typename BeforeEpoch>
MlpTrainResult run_shared_epochs(const TimeMlp& init, const NoisedDataset& ds,
                                 const DsmConfig& config, std::vector<Mat>& targets,
                                 BeforeEpoch&& before_epoch) {
  MlpTrainResult result{init, {}};
  if (config.epochs == 0) return result;
  if (config.batch_size == 0) throw ConfigError("batch size must be positive");
  const std::size_t m = ds.m();
  const std::size_t n = ds.steps();
  const auto d = static_cast<Eigen::Index>(ds.d());
  const std::size_t pairs = m * n;
  const std::size_t steps_per_epoch = (pairs + config.batch_size - 1) / config.batch_size;

  OptimizerConfig opt_config = config.optimizer;
  opt_config.schedule.total_steps = steps_per_epoch * config.epochs;
  Optimizer optimizer(opt_config, init.parameter_count());

  std::vector<double> embed(n);
  for (std::size_t j = 0; j < n; ++j) embed[j] = init.embed_time(ds.schedule.time(j));

  TimeMlp& net = result.model;
  std::vector<std::uint64_t> order(pairs);
  Vec grad(net.parameter_count());
  MlpBatch batch;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    before_epoch(epoch, net);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(config.seed, StreamDomain::minibatch, epoch);
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const std::size_t lo = s * config.batch_size;
      const std::size_t hi = std::min(pairs, lo + config.batch_size);
      const auto count = static_cast<Eigen::Index>(hi - lo);
      batch.inputs.resize(d + 1, count);
      batch.targets.resize(d, count);
      for (Eigen::Index c = 0; c < count; ++c) {
        const std::uint64_t pair = order[lo + static_cast<std::size_t>(c)];
        const auto i = static_cast<Eigen::Index>(pair % m);
        const auto j = static_cast<std::size_t>(pair / m);
        batch.inputs.col(c).head(d) = ds.x[j].row(i).transpose();
        batch.inputs(d, c) = embed[j];
        batch.targets.col(c) = targets[j].row(i).transpose();
      }
      const double lr = optimizer.current_lr();
      const double loss = net.loss_grad(batch, grad);
      const std::size_t global = optimizer.steps();
      if (!std::isfinite(loss))
        throw NumericError("training diverged at step " + std::to_string(global));
      optimizer.step(net.parameters(), grad);
      const bool last = epoch + 1 == config.epochs && s + 1 == steps_per_epoch;
      if (global % std::max<std::size_t>(1, config.log_every) == 0 || last)
        result.trace.push_back({global, loss, lr});
    }
  }
  return result;
}

std::vector<Mat> all_dsm_targets(const NoisedDataset& ds) {
  std::vector<Mat> targets(ds.steps());
  for (std::size_t j = 0; j < ds.steps(); ++j) targets[j] = ds.dsm_targets(j);
  return targets;
}

}  // namespace

MlpTrainResult train_dsm(const TimeMlp& init, const NoisedDataset& ds, const DsmConfig& config) {
  std::vector<Mat> targets = config.epochs == 0 ? std::vector<Mat>{} : all_dsm_targets(ds);
  return run_shared_epochs(init, ds, config, targets, [](std::size_t, const TimeMlp&) {});
}

LinearScoreModel train_dsm_linear(const NoisedDataset& ds) {
  LinearScoreModel model(ds.schedule, ds.d());
  std::vector<AffineFit> fits(ds.steps());
  parallel_for(ds.steps(), [&](std::size_t j) {
    fits[j] = fit_linear_least_squares(ds.x[j], ds.dsm_targets(j));
  });
  for (std::size_t j = 0; j < ds.steps(); ++j) model.set(j, std::move(fits[j]));
  return model;
}

std::string to_string(AlphaMode mode) {
  switch (mode) {
    case AlphaMode::ratio: return "ratio";
    case AlphaMode::sqrt: return "sqrt";
    case AlphaMode::fixed: return "fixed";
    case AlphaMode::adaptive: return "adaptive";
  }
  return "unknown";
}

AlphaMode alpha_mode_from_string(const std::string& name) {
  if (name == "ratio") return AlphaMode::ratio;
  if (name == "sqrt") return AlphaMode::sqrt;
  if (name == "fixed") return AlphaMode::fixed;
  if (name == "adaptive") return AlphaMode::adaptive;
  throw ConfigError("unknown alpha mode '" + name + "'");
}

double alpha(double t_prev, double t, AlphaMode mode) {
  if (!(t_prev < t)) throw std::invalid_argument("alpha needs t_prev < t");
  if (t_prev < 0.0) throw std::invalid_argument("alpha needs t_prev >= 0");
  const double gap = t - t_prev;
  switch (mode) {
    case AlphaMode::ratio: return std::exp(-gap) * sigma_sq(t_prev) / sigma_sq(t);
    case AlphaMode::sqrt: return std::exp(-gap) * std::sqrt(sigma_sq(t_prev) / sigma_sq(t));
    case AlphaMode::adaptive: return 1.0 - sigma(t) / (sigma(gap) + sigma(t));
    case AlphaMode::fixed: break;
  }
  throw std::invalid_argument("fixed alpha needs an AlphaRule with a value");
}

double AlphaRule::operator()(double t_prev, double t) const {
  if (mode == AlphaMode::fixed) {
    if (!(fixed_value >= 0.0 && fixed_value <= 1.0))
      throw ConfigError("fixed alpha must lie in [0, 1]");
    if (!(t_prev < t)) throw std::invalid_argument("alpha needs t_prev < t");
    return fixed_value;
  }
  return alpha(t_prev, t, mode);
}

BsmTargets bsm_targets(const NoisedDataset& ds, std::size_t k, const ScoreField& prev_model,
                       double alpha_k) {
  if (k == 0) throw std::invalid_argument("bootstrapped targets need a previous timestep (k >= 1)");
  if (k >= ds.steps()) throw std::out_of_range("timestep index out of range");
  const double t = ds.schedule.time(k);
  const double t_prev = ds.schedule.time(k - 1);
  Mat y = -ds.z[k] / sigma_sq(t);
  if (alpha_k != 0.0) {
    const Mat correction = prev_model.eval(t_prev, ds.x[k - 1]) + ds.z[k - 1] / sigma_sq(t_prev);
    y += alpha_k * correction;
  }
  return {std::move(y), alpha_k};
}

namespace {

void check_k0(const BsmConfig& config, std::size_t n) {
  if (config.k0 < 1 || config.k0 > n)
    throw ConfigError("k0 must satisfy 1 <= k0 <= N (got " + std::to_string(config.k0) + ")");
}

}  // namespace

LinearScoreModel train_bsm_linear(const NoisedDataset& ds, const BsmConfig& config) {
  check_k0(config, ds.steps());
  LinearScoreModel model(ds.schedule, ds.d());
  for (std::size_t k = 0; k < ds.steps(); ++k) {
    Mat targets;
    if (k < config.k0) {
      targets = ds.dsm_targets(k);
    } else {
      const double a = config.alpha(ds.schedule.time(k - 1), ds.schedule.time(k));
      targets = bsm_targets(ds, k, model, a).targets;
    }
    AffineFit fit = fit_linear_least_squares(ds.x[k], targets);
    if (!fit.weight.allFinite() || !fit.bias.allFinite())
      throw NumericError("bootstrapped fit diverged at timestep " + std::to_string(k + 1));
    model.set(k, std::move(fit));
  }
  return model;
}

PerStepMlp::PerStepMlp(std::vector<TimeMlp> nets) : nets_(std::move(nets)) {
  if (nets_.empty()) throw std::invalid_argument("PerStepMlp needs at least one network");
}

Mat PerStepMlp::eval(double t, const Mat& points) const {
  const auto j = nets_.front().grid().index_of(t);
  if (!j) throw std::domain_error("time is not on the grid");
  return nets_.at(*j).eval(t, points);
}

PerStepMlp train_bsm_mlp(const TimeMlp& init, const NoisedDataset& ds, const BsmConfig& config) {
  check_k0(config, ds.steps());
  if (config.batch_size == 0) throw ConfigError("batch size must be positive");
  const std::size_t m = ds.m();
  const auto d = static_cast<Eigen::Index>(ds.d());
  const std::size_t steps_per_epoch = (m + config.batch_size - 1) / config.batch_size;
  std::vector<TimeMlp> nets;
  nets.reserve(ds.steps());
  std::vector<std::uint64_t> order(m);
  for (std::size_t k = 0; k < ds.steps(); ++k) {
    TimeMlp net = k == 0 ? init : nets.back();
    const double t = ds.schedule.time(k);
    Mat targets;
    if (k < config.k0) {
      targets = ds.dsm_targets(k);
    } else {
      const PerStepMlp prev(nets);
      const double a = config.alpha(ds.schedule.time(k - 1), t);
      targets = bsm_targets(ds, k, prev, a).targets;
    }
    OptimizerConfig opt = config.optimizer;
    opt.schedule.total_steps = steps_per_epoch * config.epochs_per_step;
    Optimizer optimizer(opt, net.parameter_count());
    Vec grad(net.parameter_count());
    MlpBatch batch;
    for (std::size_t epoch = 0; epoch < config.epochs_per_step; ++epoch) {
      std::iota(order.begin(), order.end(), 0);
      Rng rng(config.seed, StreamDomain::minibatch, k * 1'000'003ULL + epoch);
      std::shuffle(order.begin(), order.end(), rng.engine());
      for (std::size_t s = 0; s < steps_per_epoch; ++s) {
        const std::size_t lo = s * config.batch_size;
        const auto count = static_cast<Eigen::Index>(std::min(m, lo + config.batch_size) - lo);
        batch.inputs.resize(d + 1, count);
        batch.targets.resize(d, count);
        for (Eigen::Index c = 0; c < count; ++c) {
          const auto i = static_cast<Eigen::Index>(order[lo + static_cast<std::size_t>(c)]);
          batch.inputs.col(c).head(d) = ds.x[k].row(i).transpose();
          batch.inputs(d, c) = net.embed_time(t);
          batch.targets.col(c) = targets.row(i).transpose();
        }
        const double loss = net.loss_grad(batch, grad);
        if (!std::isfinite(loss))
          throw NumericError("training diverged at timestep " + std::to_string(k + 1));
        optimizer.step(net.parameters(), grad);
      }
    }
    nets.push_back(std::move(net));
  }
  return PerStepMlp(std::move(nets));
}

MlpTrainResult train_bsm_shared(const TimeMlp& init, const NoisedDataset& ds,
                                const DsmConfig& config, std::size_t k0, AlphaRule alpha_rule,
                                std::size_t bootstrap_start_epoch) {
  if (k0 < 1 || k0 > ds.steps()) throw ConfigError("k0 must satisfy 1 <= k0 <= N");
  std::vector<Mat> targets = config.epochs == 0 ? std::vector<Mat>{} : all_dsm_targets(ds);
  std::vector<double> alphas(ds.steps(), 0.0);
  for (std::size_t k = std::max<std::size_t>(k0, 1); k < ds.steps(); ++k)
    alphas[k] = alpha_rule(ds.schedule.time(k - 1), ds.schedule.time(k));
  return run_shared_epochs(init, ds, config, targets, [&](std::size_t epoch, const TimeMlp& net) {
    if (epoch < bootstrap_start_epoch) return;
    const TimeMlp snapshot = net;
    parallel_for(ds.steps(), [&](std::size_t k) {
      if (k < k0 || k == 0) return;
      targets[k] = bsm_targets(ds, k, snapshot, alphas[k]).targets;
    });
  });
}

}  // namespace scorelab
