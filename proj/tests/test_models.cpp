#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "scorelab/errors.hpp"
#include "scorelab/models.hpp"
#include "scorelab/rng.hpp"

using namespace scorelab;

namespace {

Mat normals(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  Rng rng(seed);
  Mat m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = rng.normal();
  return m;
}

// Reference loss: mean over examples of the squared error, computed one
// example at a time through the public forward().
double reference_loss(const TimeMlp& net, const std::vector<MlpExample>& ex) {
  double total = 0.0;
  for (const auto& e : ex) total += (net.forward(e.t, e.x) - e.target).squaredNorm();
  return total / static_cast<double>(ex.size());
}

}  // namespace

TEST_SUITE("models") {
  TEST_CASE("least squares recovers an exact affine map") {
    const Mat x = normals(50, 3, 1);
    Mat a(2, 3);
    a << 1, -2, 0.5, 0.3, 0, 4;
    Vec b(2);
    b << 0.7, -1.2;
    Mat y = x * a.transpose();
    y.rowwise() += b.transpose();
    const AffineFit fit = fit_linear_least_squares(x, y);
    CHECK((fit.weight - a).norm() < 1e-10);
    CHECK((fit.bias - b).norm() < 1e-10);

    const AffineFit nob = fit_linear_least_squares(x, x * a.transpose(), false);
    CHECK((nob.weight - a).norm() < 1e-10);
    CHECK(nob.bias.norm() == 0.0);
  }

  TEST_CASE("least squares matches a QR solve under noise") {
    const Mat x = normals(200, 2, 2);
    const Mat y = normals(200, 2, 3) + x;
    Mat design(200, 3);
    design << x, Vec::Ones(200);
    const Mat sol = design.colPivHouseholderQr().solve(y);
    const AffineFit fit = fit_linear_least_squares(x, y);
    CHECK((fit.weight - sol.topRows(2).transpose()).norm() < 1e-10);
    CHECK((fit.bias - sol.row(2).transpose()).norm() < 1e-10);
  }

  TEST_CASE("least squares rejects degenerate inputs") {
    CHECK_THROWS_AS(fit_linear_least_squares(normals(3, 3, 1), normals(3, 3, 2)), ConfigError);
    Mat x = normals(20, 2, 4);
    x.col(1) = 2 * x.col(0);
    CHECK_THROWS_AS(fit_linear_least_squares(x, normals(20, 2, 5)), SingularMatrixError);
  }

  TEST_CASE("linear model evaluates per grid step and rejects off-grid times") {
    const Schedule s = Schedule::make(ScheduleKind::linear, 4, 1.0);
    LinearScoreModel m(s, 2);
    AffineFit f;
    f.weight = Mat::Identity(2, 2) * 3;
    f.bias = Vec::Ones(2);
    m.set(1, f);
    Mat p(1, 2);
    p << 1, 2;
    CHECK(m.eval(0.5, p)(0, 1) == doctest::Approx(7.0));
    CHECK(m.eval(0.25, p).norm() == 0.0);
    CHECK_THROWS_AS(m.eval(0.3, p), std::domain_error);

    const auto body = m.flat_parameters();
    const LinearScoreModel back = LinearScoreModel::from_checkpoint(m.arch(), body);
    CHECK(back.eval(0.5, p) == m.eval(0.5, p));
  }

  TEST_CASE("parameter count and arch parsing") {
    CHECK(mlp_parameter_count({3, 10, 10, 2}) == 4 * 10 + 11 * 10 + 11 * 2);
    const auto w = parse_arch("5,64,4");
    CHECK(w == std::vector<std::size_t>{5, 64, 4});
    CHECK_THROWS_AS(parse_arch("5"), ConfigError);
    CHECK_THROWS_AS(parse_arch("5,x,4"), ConfigError);
    CHECK_THROWS_AS(parse_arch("5,-3,4"), ConfigError);
    const Schedule s = Schedule::make(ScheduleKind::linear, 4, 1.0);
    CHECK_THROWS_AS(TimeMlp({4, 8, 4}, Activation::tanh, s), ConfigError);
    const TimeMlp net = TimeMlp::initialized({3, 7, 2}, Activation::tanh, s, 1);
    CHECK(net.parameter_count() == mlp_parameter_count({3, 7, 2}));
    CHECK(net.parameters().cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(3.0));
  }

  TEST_CASE("forward pass matches a hand-written network") {
    const Schedule s = Schedule::make(ScheduleKind::linear, 4, 2.0);
    const TimeMlp net = TimeMlp::initialized({3, 4, 2}, Activation::tanh, s, 9);
    const Vec& p = net.parameters();
    const Mat w1 = Eigen::Map<const Mat>(p.data(), 4, 3);
    const Vec b1 = p.segment(12, 4);
    const Mat w2 = Eigen::Map<const Mat>(p.data() + 16, 2, 4);
    const Vec b2 = p.segment(24, 2);
    Vec x(2);
    x << 0.3, -1.0;
    Vec in(3);
    in << x, 1.5 / 2.0;
    const Vec expect = w2 * (w1 * in + b1).array().tanh().matrix() + b2;
    CHECK((net.forward(1.5, x) - expect).norm() < 1e-14);
    CHECK_THROWS_AS(net.forward(1.2, x), std::domain_error);
  }

  TEST_CASE("gradient matches central differences") {
    for (Activation act : {Activation::tanh, Activation::relu}) {
      const Schedule s = Schedule::make(ScheduleKind::linear, 5, 1.0);
      TimeMlp net = TimeMlp::initialized({3, 6, 5, 2}, act, s, 11);
      std::vector<MlpExample> ex;
      Rng rng(5);
      for (int i = 0; i < 7; ++i) {
        Vec x(2), y(2);
        x << rng.normal(), rng.normal();
        y << rng.normal(), rng.normal();
        ex.push_back({s.time(static_cast<std::size_t>(i % 5)), x, y});
      }
      Vec grad;
      const double loss = net.loss_grad(ex, grad);
      CHECK(loss == doctest::Approx(reference_loss(net, ex)).epsilon(1e-12));
      const double h = 1e-6;
      double worst = 0.0;
      for (Eigen::Index k = 0; k < grad.size(); ++k) {
        const double keep = net.parameters()(k);
        net.parameters()(k) = keep + h;
        const double up = reference_loss(net, ex);
        net.parameters()(k) = keep - h;
        const double down = reference_loss(net, ex);
        net.parameters()(k) = keep;
        const double fd = (up - down) / (2 * h);
        worst = std::max(worst, std::abs(fd - grad(k)) / std::max(1.0, std::abs(fd)));
      }
      CHECK(worst < 1e-6);
    }
  }

  TEST_CASE("checkpoint round trip") {
    const Schedule s = Schedule::make(ScheduleKind::quadratic, 6, 3.0);
    const TimeMlp net = TimeMlp::initialized({4, 9, 3}, Activation::relu, s, 2);
    const auto path = (std::filesystem::temp_directory_path() / "scorelab_models_test.ckpt").string();
    write_checkpoint(path, net.arch(), {net.parameters().data(), net.parameter_count()});
    const auto [arch, body] = read_checkpoint(path);
    const TimeMlp back = TimeMlp::from_checkpoint(arch, body);
    CHECK(back.parameters() == net.parameters());
    CHECK(back.widths() == net.widths());
    CHECK(back.activation() == Activation::relu);
    CHECK(back.grid().times() == s.times());

    // A truncated file is rejected.
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 8);
    CHECK_THROWS(read_checkpoint(path));
    std::filesystem::remove(path);
  }
}
