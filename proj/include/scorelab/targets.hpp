#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <variant>
#include <vector>

#include "json.hpp"
#include "scorelab/linalg.hpp"
#include "scorelab/score_field.hpp"

namespace scorelab {

struct GaussianTarget {
  Mat covariance;
};

/// Mixture of isotropic Gaussians N(mean_k, variance_k I) with weights w_k.
struct GmmTarget {
  std::vector<Vec> means;
  std::vector<double> variances;
  std::vector<double> weights;
};

/// Data distribution π. Construction validates the invariants: SPD covariance
/// for Gaussians; positive weights summing to 1 (within 1e-12), non-negative
/// variances and matching dimensions for mixtures.
class TargetSpec {
 public:
  static TargetSpec gaussian(Mat covariance);
  static TargetSpec gmm(std::vector<Vec> means, std::vector<double> variances,
                        std::vector<double> weights);

  std::size_t dim() const { return dim_; }
  bool is_gaussian() const { return std::holds_alternative<GaussianTarget>(variant_); }
  const GaussianTarget& as_gaussian() const { return std::get<GaussianTarget>(variant_); }
  const GmmTarget& as_gmm() const { return std::get<GmmTarget>(variant_); }

  nlohmann::json to_json() const;
  static TargetSpec from_json(const nlohmann::json& j);

 private:
  explicit TargetSpec(std::variant<GaussianTarget, GmmTarget> v, std::size_t dim)
      : variant_(std::move(v)), dim_(dim) {}

  std::variant<GaussianTarget, GmmTarget> variant_;
  std::size_t dim_;
};

/// m i.i.d. draws from π as rows. Draw i uses Rng(seed, target_samples, i), so
/// a larger m extends a smaller one with the same prefix.
Mat sample_target(const TargetSpec& target, std::size_t m, std::uint64_t seed);

/// Q Λ Qᵀ with Q Haar-orthogonal and Λ_ii ~ Uniform(lo, hi).
Mat random_spd_uniform_spectrum(std::size_t d, double lo, double hi, std::uint64_t seed);
/// 5 M Mᵀ + 5 v vᵀ with standard normal M (d×d) and v (d).
Mat random_spd_wishart(std::size_t d, std::uint64_t seed);

/// Closed-form score s(t, x) = ∇ log p_t(x) of the OU-noised target and the
/// quantities derived from it through Tweedie's formulas.
class ScoreOracle final : public ScoreField {
 public:
  /// `cache_times` are the grid times whose Gaussian precision matrices are
  /// precomputed; other times are computed on demand.
  explicit ScoreOracle(TargetSpec target, std::span<const double> cache_times = {});

  const TargetSpec& target() const { return target_; }
  std::size_t dim() const override { return target_.dim(); }
  Mat eval(double t, const Mat& points) const override;

  Vec score(double t, const Vec& x) const;
  Mat hessian(double t, const Vec& x) const;
  double log_density(double t, const Vec& x) const;

  /// E[x_0 | x_t] = e^t (x_t + σ_t² s(t, x_t)); x_t itself at t = 0.
  Vec posterior_mean_x0(double t, const Vec& x) const;

  /// E[z_{t,t'} z_{t,t'}ᵀ | x_t] = σ⁴ h_t + σ⁴ s sᵀ + σ² I with σ² = σ_{t-t'}².
  Mat conditional_noise_covariance(double t, double t_prev, const Vec& x) const;

  // Gaussian-only closed forms.
  Mat noised_covariance(double t) const;  ///< Σ_t = e^{-2t} Σ + σ_t² I
  Mat precision(double t) const;          ///< Σ_t^{-1}
  /// Exact Lipschitz constant ‖Σ_t^{-1}‖_op of the Gaussian score.
  double lipschitz(double t) const;
  /// Covariance of x_0 given x_t; the mean is posterior_mean_x0.
  Mat posterior_x0_covariance(double t) const;
  /// Law of x_{t'} given x_t: mean = map * x_t, covariance returned second.
  std::pair<Mat, Mat> backward_conditional(double t_prev, double t) const;

 private:
  void require_gaussian(const char* what) const;
  void require_gmm_time(double t) const;

  TargetSpec target_;
  std::map<double, Mat> precision_cache_;
};

}  // namespace scorelab
