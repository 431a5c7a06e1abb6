#pragma once

#include <cstddef>
#include <functional>
#include <utility>

#include "scorelab/linalg.hpp"

namespace scorelab {

/// A function f(t, x) -> R^d evaluated row-wise on batches of points.
///
/// Implementations are immutable during evaluation and safe to call from
/// several threads at once.
class ScoreField {
 public:
  virtual ~ScoreField() = default;
  virtual std::size_t dim() const = 0;
  /// Row r of the result is f(t, points.row(r)).
  virtual Mat eval(double t, const Mat& points) const = 0;

  Vec operator()(double t, const Vec& x) const { return eval(t, x.transpose()).row(0).transpose(); }
};

/// Adapts a per-point callable.
class FunctionField final : public ScoreField {
 public:
  using Fn = std::function<Vec(double, const Vec&)>;
  FunctionField(std::size_t dim, Fn fn) : dim_(dim), fn_(std::move(fn)) {}

  std::size_t dim() const override { return dim_; }
  Mat eval(double t, const Mat& points) const override {
    Mat out(points.rows(), points.cols());
    for (Eigen::Index r = 0; r < points.rows(); ++r)
      out.row(r) = fn_(t, points.row(r).transpose()).transpose();
    return out;
  }

 private:
  std::size_t dim_;
  Fn fn_;
};

}  // namespace scorelab
