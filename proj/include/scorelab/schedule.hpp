#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "scorelab/linalg.hpp"

namespace scorelab {

/// σ_t² = 1 - e^{-2t}, computed with expm1 so tiny t keeps full precision.
double sigma_sq(double t);
/// σ_t = sqrt(1 - e^{-2t}).
double sigma(double t);

enum class ScheduleKind {
  linear,     ///< t_j = j T / N
  quadratic,  ///< t_j = (0.001 + (j-1)(sqrt(T) - 0.001)/(N-1))^2
  strided,    ///< stride-k subset of a linear grid, weights k Δ
};

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& name);

/// Discrete timestep grid 0 < t_1 < ... < t_N with weights γ_j.
///
/// Indices are zero-based: times()[0] is t_1. For linear and quadratic grids
/// γ_j = t_j - t_{j-1} with t_0 = 0; strided grids carry γ'_j = kΔ.
class Schedule {
 public:
  static Schedule make(ScheduleKind kind, std::size_t n, double horizon);

  /// Stride-k subset of a linear schedule. `offset` is 1-based in [1, k] and
  /// selects grid indices j ≡ offset (mod k).
  static Schedule strided(const Schedule& base, std::size_t stride, std::size_t offset);

  ScheduleKind kind() const { return kind_; }
  std::size_t size() const { return times_.size(); }
  double horizon() const { return horizon_; }
  const std::vector<double>& times() const { return times_; }
  const std::vector<double>& weights() const { return weights_; }
  double time(std::size_t j) const { return times_.at(j); }
  double weight(std::size_t j) const { return weights_.at(j); }
  /// Base step Δ of a linear (or strided) grid.
  double delta() const { return delta_; }
  std::size_t stride() const { return stride_; }
  std::size_t offset() const { return offset_; }

  /// Grid index of `t` if it lies on the grid (relative tolerance 1e-12).
  std::optional<std::size_t> index_of(double t) const;

  nlohmann::json to_json() const;
  static Schedule from_json(const nlohmann::json& j);

 private:
  Schedule() = default;
  void validate() const;

  ScheduleKind kind_ = ScheduleKind::linear;
  std::vector<double> times_;
  std::vector<double> weights_;
  double horizon_ = 0.0;
  double delta_ = 0.0;
  std::size_t base_size_ = 0;
  std::size_t stride_ = 1;
  std::size_t offset_ = 1;
};

enum class NoiseMode {
  markov,       ///< x_{t_j} = e^{-γ_j} x_{t_{j-1}} + w_j, the dependent OU path
  independent,  ///< x_{t_j} = e^{-t_j} x_0 + σ_{t_j} ξ_j with fresh ξ_j (ablation)
};

/// Noised trajectories of the OU forward process.
///
/// x[j] and z[j] are m×d matrices at grid index j (row i is trajectory i), and
/// z[j] = x[j] - e^{-t_j} x0 row-wise.
struct NoisedDataset {
  Mat x0;
  std::vector<Mat> x;
  std::vector<Mat> z;
  Schedule schedule;
  std::uint64_t seed = 0;
  NoiseMode mode = NoiseMode::markov;

  std::size_t m() const { return static_cast<std::size_t>(x0.rows()); }
  std::size_t d() const { return static_cast<std::size_t>(x0.cols()); }
  std::size_t steps() const { return schedule.size(); }

  /// DSM regression targets -z/σ² at grid index j.
  Mat dsm_targets(std::size_t j) const;
};

/// Generates one trajectory per row of x0.
///
/// Trajectory i draws all of its noise from Rng(seed, trajectories, i): for
/// j = 1..N in order, d standard normals. Output is identical for any worker
/// count.
NoisedDataset noise_dataset(const Mat& x0, const Schedule& schedule, std::uint64_t seed,
                            NoiseMode mode = NoiseMode::markov);

/// Replays the Markov increment w_j (j zero-based) of trajectory i from its
/// seed stream, without touching the stored dataset.
Vec replay_increment(const NoisedDataset& ds, std::size_t i, std::size_t j);

}  // namespace scorelab
