#include <cmath>
#include <limits>
#include <numbers>

#include "doctest.h"
#include "scorelab/errors.hpp"
#include "scorelab/optimizer.hpp"

using namespace scorelab;

TEST_SUITE("optimizer") {
  TEST_CASE("cosine warmup") {
    LrSchedule s;
    s.kind = LrSchedule::Kind::cosine_warmup;
    s.warmup_fraction = 0.1;
    s.total_steps = 100;
    CHECK(s.at(0, 1.0) == 0.0);
    CHECK(s.at(5, 1.0) == doctest::Approx(0.5));
    CHECK(s.at(10, 1.0) == doctest::Approx(1.0));
    CHECK(s.at(55, 1.0) == doctest::Approx(0.5));
    CHECK(s.at(40, 2.0) == doctest::Approx(1.0 + std::cos(std::numbers::pi / 3.0)));
    CHECK(s.at(100, 1.0) == 0.0);
    LrSchedule c;
    CHECK(c.at(12345, 0.3) == 0.3);
  }

  TEST_CASE("sgd step") {
    OptimizerConfig cfg;
    cfg.kind = OptimizerConfig::Kind::sgd;
    cfg.lr = 0.1;
    Optimizer opt(cfg, 2);
    Vec p(2), g(2);
    p << 1, 2;
    g << 0.5, -1;
    opt.step(p, g);
    CHECK(p(0) == doctest::Approx(0.95));
    CHECK(p(1) == doctest::Approx(2.1));
    CHECK(opt.steps() == 1);
  }

  TEST_CASE("adamw matches a hand computation") {
    OptimizerConfig cfg;
    cfg.lr = 0.01;
    cfg.weight_decay = 0.1;
    Optimizer opt(cfg, 1);
    Vec p(1), g(1);
    p << 1.0;
    double m = 0, v = 0, ref = 1.0;
    for (int t = 1; t <= 3; ++t) {
      const double grad = 0.5 * t - 0.2;
      g << grad;
      m = 0.9 * m + 0.1 * grad;
      v = 0.999 * v + 0.001 * grad * grad;
      const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
      ref = ref * (1 - 0.01 * 0.1) - 0.01 * mh / (std::sqrt(vh) + 1e-8);
      opt.step(p, g);
      CHECK(p(0) == doctest::Approx(ref).epsilon(1e-12));
    }
    // First bias-corrected Adam step has magnitude ≈ lr.
    Optimizer fresh(OptimizerConfig{}, 1);
    Vec q = Vec::Zero(1), gg = Vec::Constant(1, 123.0);
    fresh.step(q, gg);
    CHECK(q(0) == doctest::Approx(-1e-3).epsilon(1e-6));
  }

  TEST_CASE("non-finite gradients throw") {
    Optimizer opt(OptimizerConfig{}, 2);
    Vec p = Vec::Zero(2), g(2);
    g << 1, std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(opt.step(p, g), NumericError);
    g << std::numeric_limits<double>::infinity(), 0;
    CHECK_THROWS_AS(opt.step(p, g), NumericError);
  }

  TEST_CASE("json round trip") {
    OptimizerConfig cfg;
    cfg.kind = OptimizerConfig::Kind::sgd;
    cfg.lr = 0.05;
    cfg.schedule.kind = LrSchedule::Kind::cosine_warmup;
    cfg.schedule.warmup_fraction = 0.2;
    const auto back = OptimizerConfig::from_json(cfg.to_json());
    CHECK(back.kind == cfg.kind);
    CHECK(back.lr == cfg.lr);
    CHECK(back.schedule.kind == cfg.schedule.kind);
    CHECK(back.schedule.warmup_fraction == 0.2);
    CHECK_THROWS_AS(OptimizerConfig::from_json({{"kind", "rmsprop"}}), ConfigError);
  }
}
