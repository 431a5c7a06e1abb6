#include "scorelab/sample.hpp"

#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>

#include "scorelab/errors.hpp"
#include "scorelab/parallel.hpp"
#include "scorelab/rng.hpp"

namespace scorelab {

std::string to_string(Integrator integrator) {
  return integrator == Integrator::exponential ? "exponential" : "euler-maruyama";
}

Integrator integrator_from_string(const std::string& name) {
  if (name == "exponential") return Integrator::exponential;
  if (name == "euler-maruyama" || name == "euler_maruyama" || name == "em")
    return Integrator::euler_maruyama;
  throw ConfigError("unknown integrator '" + name + "'");
}

Mat reverse_sample(const ScoreField& score, const SamplerConfig& config) {
  const Schedule& grid = config.schedule;
  if (config.n == 0) throw ConfigError("sampler needs n >= 1");
  const double t_min = config.t_min < 0.0 ? grid.time(0) : config.t_min;
  if (t_min < grid.time(0) * (1.0 - 1e-12))
    throw ConfigError("t_min must be at least the smallest grid time");
  const std::size_t n = config.n;
  const auto d = static_cast<Eigen::Index>(score.dim());

  std::vector<Rng> streams;
  streams.reserve(n);
  for (std::size_t c = 0; c < n; ++c) streams.emplace_back(config.seed, StreamDomain::sampler, c);

  Mat x(static_cast<Eigen::Index>(n), d);
  for (std::size_t c = 0; c < n; ++c)
    for (Eigen::Index k = 0; k < d; ++k) x(static_cast<Eigen::Index>(c), k) = streams[c].normal();

  // Fixed-size chunks keep the arithmetic identical for any worker count.
  constexpr std::size_t chunk = 256;
  const std::size_t chunks = (n + chunk - 1) / chunk;
  for (std::size_t j = grid.size() - 1; j >= 1; --j) {
    if (grid.time(j - 1) < t_min * (1.0 - 1e-12)) break;
    const double t = grid.time(j);
    const double gamma = grid.weight(j);
    double drift_scale, score_scale, noise_scale;
    if (config.integrator == Integrator::exponential) {
      drift_scale = std::exp(gamma);
      score_scale = 2.0 * std::expm1(gamma);
      noise_scale = std::sqrt(std::expm1(2.0 * gamma));
    } else {
      drift_scale = 1.0 + gamma;
      score_scale = 2.0 * gamma;
      noise_scale = std::sqrt(2.0 * gamma);
    }
    parallel_for(chunks, [&](std::size_t b) {
      const auto lo = static_cast<Eigen::Index>(b * chunk);
      const auto rows = static_cast<Eigen::Index>(std::min(n, (b + 1) * chunk)) - lo;
      const Mat s = score.eval(t, x.middleRows(lo, rows));
      for (Eigen::Index r = 0; r < rows; ++r) {
        auto& rng = streams[static_cast<std::size_t>(lo + r)];
        for (Eigen::Index k = 0; k < d; ++k) {
          const double xi = rng.normal();
          double& v = x(lo + r, k);
          v = drift_scale * v + score_scale * s(r, k);
          if (!config.zero_noise) v += noise_scale * xi;
        }
      }
    });
    if (!x.allFinite())
      throw NumericError("sampler state became non-finite at timestep " + std::to_string(j + 1) +
                         " (t=" + std::to_string(t) + ")");
  }
  return x;
}

Schedule subsample_schedule(const Schedule& schedule, std::size_t stride, std::size_t offset) {
  return Schedule::strided(schedule, stride, offset);
}

SubsetChoice best_subset(const std::vector<double>& errors, double delta, std::size_t stride) {
  using boost::multiprecision::cpp_rational;
  const std::size_t n = errors.size();
  if (stride < 1 || stride > n) throw ConfigError("stride must satisfy 1 <= k <= N");
  if (!(delta > 0.0)) throw ConfigError("step must be positive");
  // Doubles are dyadic rationals, so these conversions are exact.
  const cpp_rational step(delta);
  std::vector<cpp_rational> sums(stride);
  cpp_rational total;
  for (std::size_t j = 0; j < n; ++j) {
    if (!(errors[j] >= 0.0)) throw std::invalid_argument("errors must be nonnegative");
    const cpp_rational e(errors[j]);
    total += step * e;
    sums[j % stride] += cpp_rational(stride) * step * e;
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < stride; ++i)
    if (sums[i] < sums[best]) best = i;
  SubsetChoice out;
  out.offset = best + 1;
  out.bound_ok = sums[best] <= total;
  out.total = static_cast<double>(total);
  for (const auto& s : sums) out.subset_sums.push_back(static_cast<double>(s));
  return out;
}

SubsetChoice best_subset(const std::vector<double>& errors, const Schedule& schedule,
                         std::size_t stride) {
  if (schedule.kind() != ScheduleKind::linear)
    throw ConfigError("best_subset needs a linear schedule");
  if (errors.size() != schedule.size())
    throw std::invalid_argument("one error per timestep expected");
  return best_subset(errors, schedule.delta(), stride);
}

}  // namespace scorelab
