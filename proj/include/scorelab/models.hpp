#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "scorelab/linalg.hpp"
#include "scorelab/schedule.hpp"
#include "scorelab/score_field.hpp"

namespace scorelab {

struct AffineFit {
  Mat weight;  ///< d_out × d_in
  Vec bias;
};

/// Ordinary least squares of targets on [points, 1] through the normal
/// equations. Needs more rows than design columns; throws
/// SingularMatrixError when the Gram matrix is worse conditioned than 1e12.
AffineFit fit_linear_least_squares(const Mat& points, const Mat& targets, bool with_bias = true);

/// Per-timestep affine score model f(t_j, x) = A_j x + b_j.
class LinearScoreModel final : public ScoreField {
 public:
  LinearScoreModel(Schedule grid, std::size_t dim);

  std::size_t dim() const override { return dim_; }
  const Schedule& grid() const { return grid_; }
  Mat eval(double t, const Mat& points) const override;

  void set(std::size_t j, AffineFit fit);
  const Mat& weight(std::size_t j) const { return weights_.at(j); }
  const Vec& bias(std::size_t j) const { return biases_.at(j); }

  nlohmann::json arch() const;
  std::vector<double> flat_parameters() const;
  static LinearScoreModel from_checkpoint(const nlohmann::json& arch, std::span<const double> body);

 private:
  std::size_t index(double t) const;

  Schedule grid_;
  std::size_t dim_;
  std::vector<Mat> weights_;
  std::vector<Vec> biases_;
};

enum class Activation { tanh, relu };
std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// A minibatch laid out column-wise: inputs are (d+1)×B with the time
/// embedding in the last row, targets are d×B.
struct MlpBatch {
  Mat inputs;
  Mat targets;
};

/// One training example for the time-conditioned network.
struct MlpExample {
  double t;
  Vec x;
  Vec target;
};

/// Fully connected network f(t, x) = MLP([x; t / T]) shared across all grid
/// times. widths = [d+1, hidden..., d]; hidden layers use the activation, the
/// output layer is affine.
///
/// Parameters live in one flat vector, layer by layer: W_l (column-major,
/// out×in) followed by b_l.
class TimeMlp final : public ScoreField {
 public:
  TimeMlp(std::vector<std::size_t> widths, Activation activation, Schedule grid);

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.
  static TimeMlp initialized(std::vector<std::size_t> widths, Activation activation, Schedule grid,
                             std::uint64_t seed);

  std::size_t dim() const override { return widths_.back(); }
  const std::vector<std::size_t>& widths() const { return widths_; }
  Activation activation() const { return activation_; }
  const Schedule& grid() const { return grid_; }
  std::size_t parameter_count() const { return static_cast<std::size_t>(params_.size()); }
  Vec& parameters() { return params_; }
  const Vec& parameters() const { return params_; }

  double embed_time(double t) const;

  /// Rejects times that are not on the grid.
  Mat eval(double t, const Mat& points) const override;
  Vec forward(double t, const Vec& x) const;

  /// Forward pass on prepared columns (no grid check).
  Mat forward_columns(const Mat& inputs) const;

  /// Mean over the batch of ||f - target||², and its exact gradient.
  double loss_grad(const MlpBatch& batch, Vec& grad) const;
  double loss_grad(std::span<const MlpExample> examples, Vec& grad) const;

  MlpBatch make_batch(std::span<const MlpExample> examples) const;

  nlohmann::json arch() const;
  static TimeMlp from_checkpoint(const nlohmann::json& arch, std::span<const double> body);

 private:
  struct LayerView {
    Eigen::Index weight_offset, bias_offset, in, out;
  };
  std::vector<LayerView> layers_;
  std::vector<std::size_t> widths_;
  Activation activation_;
  Schedule grid_;
  Vec params_;
};

/// Returns the parameter count Σ (w_in + 1) w_out.
std::size_t mlp_parameter_count(const std::vector<std::size_t>& widths);

/// Parses "d,H,...,d" as used by the --arch flag.
std::vector<std::size_t> parse_arch(const std::string& spec);

// --- checkpoints ----------------------------------------------------------
//
// Layout (little-endian): magic "SCLBCKP1", u64 json length, arch JSON bytes,
// u64 parameter count, f64 parameters.

void write_checkpoint(const std::string& path, const nlohmann::json& arch,
                      std::span<const double> params);
std::pair<nlohmann::json, std::vector<double>> read_checkpoint(const std::string& path);

}  // namespace scorelab
