#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "scorelab/errors.hpp"
#include "scorelab/experiments.hpp"
#include "scorelab/io.hpp"

using namespace scorelab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string error_of(const json& raw, const std::string& source = "") {
  try {
    normalize_config(raw, source);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_SUITE("experiments") {
  TEST_CASE("every preset normalizes and every shipped config loads") {
    for (const auto& name : experiment_names()) {
      const json cfg = normalize_config(preset_config(name));
      CHECK(cfg["experiment"] == name);
      CHECK(normalize_config(cfg) == cfg);
      CHECK_NOTHROW(load_config(std::string(SCORELAB_CONFIG_DIR) + "/" + name + ".json"));
    }
    const json g = normalize_config(preset_config("gaussian-linear"));
    CHECK(g["train"]["k0"] == 50);  // N / 4 with N = 200
    CHECK_THROWS_AS(preset_config("nope"), ConfigError);
  }

  TEST_CASE("validation reports every problem with its line") {
    const std::string text = slurp(std::string(SCORELAB_TEST_DATA) + "/bad_weights.json");
    const std::string msg = error_of(json::parse(text), text);
    CHECK(msg.find("target.weights") != std::string::npos);
    CHECK(msg.find("line 7") != std::string::npos);
    CHECK(msg.find("got 0.99") != std::string::npos);

    json raw = preset_config("gaussian-linear");
    raw["train"]["k0"] = 300;
    raw["schedule"]["steps"] = -4;
    raw["bogus"] = 1;
    const std::string many = error_of(raw);
    CHECK(many.find("schedule.steps") != std::string::npos);
    CHECK(many.find("bogus") != std::string::npos);

    json bad_k0 = preset_config("gaussian-linear");
    bad_k0["train"]["k0"] = 300;
    CHECK(error_of(bad_k0).find("train.k0") != std::string::npos);

    CHECK_THROWS_AS(load_config(std::string(SCORELAB_TEST_DATA) + "/bad_k0.json"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
  }

  TEST_CASE("overrides") {
    json cfg = preset_config("martingale-check");
    apply_override(cfg, "data.m=25");
    apply_override(cfg, "--schedule.horizon=2.5");
    apply_override(cfg, "output_dir=some/where");
    apply_override(cfg, "seeds=[4,5]");
    CHECK(cfg["data"]["m"] == 25);
    CHECK(cfg["schedule"]["horizon"] == 2.5);
    CHECK(cfg["output_dir"] == "some/where");
    CHECK(cfg["seeds"] == json::array({4, 5}));
    CHECK_THROWS_AS(apply_override(cfg, "novalue"), ConfigError);
  }

  TEST_CASE("builders") {
    const Schedule s = build_schedule({{"kind", "quadratic"}, {"steps", 10}, {"horizon", 2.0}});
    CHECK(s.size() == 10);
    CHECK(s.kind() == ScheduleKind::quadratic);
    const TargetSpec t = build_target({{"kind", "identity"}, {"dim", 3}}, 0);
    CHECK(t.as_gaussian().covariance == Mat::Identity(3, 3));
    const TargetSpec w1 = build_target({{"kind", "gaussian-wishart"}, {"dim", 4}}, 1);
    const TargetSpec w2 = build_target({{"kind", "gaussian-wishart"}, {"dim", 4}}, 2);
    CHECK(w1.as_gaussian().covariance != w2.as_gaussian().covariance);
    CHECK(mlp_widths(3, {{"hidden", {10, 10}}}) == std::vector<std::size_t>{4, 10, 10, 3});
  }

  TEST_CASE("linear score errors") {
    const ScoreOracle o(TargetSpec::gaussian(Mat::Identity(2, 2)));
    LinearScoreModel m(Schedule::make(ScheduleKind::linear, 2, 1.0), 2);
    AffineFit f;
    f.weight = -Mat::Identity(2, 2);  // exact: Σ_t = I for the identity target
    f.bias = Vec::Constant(2, 0.5);
    m.set(0, f);
    const auto e = linear_score_errors(m, o);
    CHECK(e[0] == doctest::Approx(0.5));
    CHECK(e[1] == doctest::Approx(2.0));  // zero model: ||I||_F² = 2
  }

  TEST_CASE("runs are reproducible and the manifest hashes its files") {
    json cfg = preset_config("martingale-check");
    cfg["seeds"] = json::array({0});
    cfg["schedule"]["steps"] = 8;
    cfg["analysis"]["instances"] = 3;
    cfg["analysis"]["spot_draws"] = 200;
    const fs::path base = fs::temp_directory_path() / "scorelab_exp_test";
    fs::remove_all(base);
    cfg["output_dir"] = (base / "a").string();
    const RunResult a = run_experiment(cfg);
    cfg["output_dir"] = (base / "b").string();
    const RunResult b = run_experiment(cfg);
    REQUIRE(a.files == b.files);
    std::size_t csvs = 0;
    for (const auto& f : a.files)
      if (f.size() > 4 && f.substr(f.size() - 4) == ".csv") {
        ++csvs;
        CHECK(slurp(fs::path(a.output_dir) / f) == slurp(fs::path(b.output_dir) / f));
      }
    CHECK(csvs > 0);

    std::istringstream mf(slurp(fs::path(a.output_dir) / "MANIFEST"));
    std::string line;
    std::size_t hashed = 0;
    while (std::getline(mf, line)) {
      const auto sep = line.find("  ");
      if (sep == std::string::npos) continue;
      const std::string rel = line.substr(sep + 2);
      CHECK(sha256_file((fs::path(a.output_dir) / rel).string()) == line.substr(0, sep));
      ++hashed;
    }
    CHECK(hashed + 1 == a.files.size());
    CHECK(a.summary.contains("aggregate"));
    fs::remove_all(base);
  }

  TEST_CASE("checkpoints through the generic loader") {
    const fs::path dir = fs::temp_directory_path() / "scorelab_exp_ckpt";
    fs::create_directories(dir);
    const Schedule s = Schedule::make(ScheduleKind::linear, 3, 1.0);
    const TimeMlp net = TimeMlp::initialized({3, 4, 2}, Activation::tanh, s, 1);
    save_score_model((dir / "net.ckpt").string(), net);
    const auto back = load_score_model((dir / "net.ckpt").string());
    Mat x(2, 2);
    x << 1, 2, 3, 4;
    CHECK(back->eval(s.time(1), x) == net.eval(s.time(1), x));
    CHECK(checkpoint_schedule((dir / "net.ckpt").string()).times() == s.times());

    const json cfg = json::parse(slurp(std::string(SCORELAB_TEST_DATA) + "/small_linear.json"));
    const auto files = train_from_config(cfg, "bsm", (dir / "run").string());
    CHECK(fs::exists(dir / "run" / "model.ckpt"));
    CHECK(fs::exists(dir / "run" / "steps" / "step-00001.ckpt"));
    CHECK_THROWS_AS(train_from_config(cfg, "magic", (dir / "run2").string()), ConfigError);
    fs::remove_all(dir);
  }
}
