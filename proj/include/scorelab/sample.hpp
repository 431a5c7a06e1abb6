#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scorelab/linalg.hpp"
#include "scorelab/schedule.hpp"
#include "scorelab/score_field.hpp"

namespace scorelab {

enum class Integrator { euler_maruyama, exponential };
std::string to_string(Integrator integrator);
Integrator integrator_from_string(const std::string& name);

struct SamplerConfig {
  Schedule schedule;
  Integrator integrator = Integrator::exponential;
  std::size_t n = 1;
  std::uint64_t seed = 0;
  /// Early-stop time; negative means "the smallest grid time".
  double t_min = -1.0;
  /// Drop the Brownian term (deterministic runs).
  bool zero_noise = false;
};

/// Reverse-time sampler. Chains start from N(0, I) at the largest grid time
/// and step t_j -> t_{j-1} with weight γ_j using the score at t_j:
///   euler-maruyama: x += γ (x + 2 s) + sqrt(2γ) ξ
///   exponential:    x  = e^γ x + 2 (e^γ - 1) s + sqrt(e^{2γ} - 1) ξ
/// Sampling stops at the first grid time >= t_min (default t_1). Chain c draws
/// all of its normals from Rng(seed, sampler, c): d for the start, then d per
/// step. Returns n × d.
Mat reverse_sample(const ScoreField& score, const SamplerConfig& config);

/// Stride-k subset {t_j : j ≡ offset (mod k)} of a linear schedule, weights kΔ.
Schedule subsample_schedule(const Schedule& schedule, std::size_t stride, std::size_t offset);

struct SubsetChoice {
  std::size_t offset;                ///< 1-based index of the best subset
  std::vector<double> subset_sums;   ///< Σ_{j∈S_i} kΔ e_j, i = 1..k
  double total;                      ///< Σ_j Δ e_j
  bool bound_ok;                     ///< min_i subset sum <= total, in exact arithmetic
};

/// Best stride-k subset for per-timestep errors on a linear grid with step Δ.
/// The comparison is done in exact rational arithmetic.
SubsetChoice best_subset(const std::vector<double>& errors, double delta, std::size_t stride);
SubsetChoice best_subset(const std::vector<double>& errors, const Schedule& schedule,
                         std::size_t stride);

}  // namespace scorelab
