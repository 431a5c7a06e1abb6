#include "scorelab/schedule.hpp"

#include <cmath>
#include "json.hpp"

#include "scorelab/errors.hpp"
#include "scorelab/parallel.hpp"
#include "scorelab/rng.hpp"

namespace scorelab {

double sigma_sq(double t) { return -std::expm1(-2.0 * t); }
double sigma(double t) { return std::sqrt(sigma_sq(t)); }

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::linear: return "linear";
    case ScheduleKind::quadratic: return "quadratic";
    case ScheduleKind::strided: return "strided";
  }
  return "unknown";
}

ScheduleKind schedule_kind_from_string(const std::string& name) {
  if (name == "linear") return ScheduleKind::linear;
  if (name == "quadratic") return ScheduleKind::quadratic;
  if (name == "strided") return ScheduleKind::strided;
  throw ConfigError("unknown schedule kind '" + name + "'");
}

Schedule Schedule::make(ScheduleKind kind, std::size_t n, double horizon) {
  if (n == 0) throw ConfigError("schedule needs at least one timestep");
  if (!(horizon > 0.0)) throw ConfigError("schedule horizon must be positive");
  Schedule s;
  s.kind_ = kind;
  s.horizon_ = horizon;
  s.base_size_ = n;
  s.times_.resize(n);
  switch (kind) {
    case ScheduleKind::linear:
      s.delta_ = horizon / static_cast<double>(n);
      for (std::size_t j = 0; j < n; ++j) s.times_[j] = static_cast<double>(j + 1) * s.delta_;
      s.times_.back() = horizon;
      break;
    case ScheduleKind::quadratic: {
      const double lo = 0.001;
      const double hi = std::sqrt(horizon);
      if (!(hi > lo)) throw ConfigError("quadratic schedule needs sqrt(T) > 0.001");
      if (n == 1) {
        s.times_[0] = horizon;
      } else {
        const double step = (hi - lo) / static_cast<double>(n - 1);
        for (std::size_t j = 0; j < n; ++j) {
          const double r = lo + static_cast<double>(j) * step;
          s.times_[j] = r * r;
        }
        s.times_.back() = horizon;
      }
      break;
    }
    case ScheduleKind::strided:
      throw ConfigError("strided schedules are built with Schedule::strided");
  }
  s.weights_.resize(n);
  double prev = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    s.weights_[j] = s.times_[j] - prev;
    prev = s.times_[j];
  }
  if (kind == ScheduleKind::linear) {
    for (double& w : s.weights_) w = s.delta_;
  }
  s.validate();
  return s;
}

Schedule Schedule::strided(const Schedule& base, std::size_t stride, std::size_t offset) {
  if (base.kind_ != ScheduleKind::linear)
    throw ConfigError("stride subsets require a linear schedule");
  const std::size_t n = base.size();
  if (stride < 1 || stride > n) throw ConfigError("stride must lie in [1, N]");
  if (offset < 1 || offset > stride) throw ConfigError("offset must lie in [1, stride]");
  if (stride == 1) return base;
  Schedule s;
  s.kind_ = ScheduleKind::strided;
  s.horizon_ = base.horizon_;
  s.delta_ = base.delta_;
  s.base_size_ = n;
  s.stride_ = stride;
  s.offset_ = offset;
  for (std::size_t j = offset; j <= n; j += stride) {
    s.times_.push_back(base.times_[j - 1]);
    s.weights_.push_back(static_cast<double>(stride) * base.delta_);
  }
  s.validate();
  return s;
}

void Schedule::validate() const {
  double prev = 0.0;
  for (std::size_t j = 0; j < times_.size(); ++j) {
    if (!(times_[j] > prev)) throw ConfigError("schedule times must be strictly increasing and > 0");
    if (!(weights_[j] > 0.0)) throw ConfigError("schedule weights must be positive");
    prev = times_[j];
  }
}

std::optional<std::size_t> Schedule::index_of(double t) const {
  auto it = std::lower_bound(times_.begin(), times_.end(), t * (1.0 - 1e-12));
  if (it == times_.end()) return std::nullopt;
  if (std::abs(*it - t) <= 1e-12 * std::max(1.0, std::abs(t)))
    return static_cast<std::size_t>(it - times_.begin());
  return std::nullopt;
}

nlohmann::json Schedule::to_json() const {
  nlohmann::json j;
  j["kind"] = to_string(kind_);
  j["horizon"] = horizon_;
  if (kind_ == ScheduleKind::strided) {
    j["steps"] = base_size_;
    j["stride"] = stride_;
    j["offset"] = offset_;
  } else {
    j["steps"] = times_.size();
  }
  return j;
}

Schedule Schedule::from_json(const nlohmann::json& j) {
  const auto kind = schedule_kind_from_string(j.at("kind").get<std::string>());
  const auto steps = j.at("steps").get<std::size_t>();
  const auto horizon = j.at("horizon").get<double>();
  if (kind == ScheduleKind::strided) {
    return strided(make(ScheduleKind::linear, steps, horizon), j.at("stride").get<std::size_t>(),
                   j.at("offset").get<std::size_t>());
  }
  return make(kind, steps, horizon);
}

Mat NoisedDataset::dsm_targets(std::size_t j) const {
  return -z.at(j) / sigma_sq(schedule.time(j));
}

NoisedDataset noise_dataset(const Mat& x0, const Schedule& schedule, std::uint64_t seed,
                            NoiseMode mode) {
  if (x0.rows() < 1) throw ConfigError("noise_dataset needs at least one sample");
  const std::size_t m = static_cast<std::size_t>(x0.rows());
  const std::size_t d = static_cast<std::size_t>(x0.cols());
  const std::size_t n = schedule.size();

  NoisedDataset ds{x0, std::vector<Mat>(n, Mat(m, d)), std::vector<Mat>(n, Mat(m, d)), schedule,
                   seed, mode};

  std::vector<double> decay(n), noise_scale(n), marginal_decay(n);
  double prev = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double t = schedule.time(j);
    const double gap = t - prev;
    marginal_decay[j] = std::exp(-t);
    if (mode == NoiseMode::markov) {
      decay[j] = std::exp(-gap);
      noise_scale[j] = std::sqrt(sigma_sq(gap));
    } else {
      decay[j] = marginal_decay[j];
      noise_scale[j] = sigma(t);
    }
    prev = t;
  }

  parallel_for(m, [&](std::size_t i) {
    Rng rng(seed, StreamDomain::trajectories, i);
    Vec state = x0.row(static_cast<Eigen::Index>(i)).transpose();
    const Vec start = state;
    Vec w(d);
    for (std::size_t j = 0; j < n; ++j) {
      rng.fill_normal({w.data(), d});
      if (mode == NoiseMode::markov) {
        state = decay[j] * state + noise_scale[j] * w;
      } else {
        state = decay[j] * start + noise_scale[j] * w;
      }
      const auto row = static_cast<Eigen::Index>(i);
      ds.x[j].row(row) = state.transpose();
      ds.z[j].row(row) = (state - marginal_decay[j] * start).transpose();
    }
  });
  return ds;
}

Vec replay_increment(const NoisedDataset& ds, std::size_t i, std::size_t j) {
  if (ds.mode != NoiseMode::markov) throw ConfigError("increments exist only for Markov datasets");
  const std::size_t d = ds.d();
  Rng rng(ds.seed, StreamDomain::trajectories, i);
  Vec w(d);
  for (std::size_t l = 0; l <= j; ++l) rng.fill_normal({w.data(), d});
  const double prev = j == 0 ? 0.0 : ds.schedule.time(j - 1);
  return std::sqrt(sigma_sq(ds.schedule.time(j) - prev)) * w;
}

}  // namespace scorelab
