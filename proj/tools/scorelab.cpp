// scorelab command line: train, sample, analyze, run, validate.
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "scorelab/analysis.hpp"
#include "scorelab/errors.hpp"
#include "scorelab/experiments.hpp"
#include "scorelab/io.hpp"
#include "scorelab/sample.hpp"

using namespace scorelab;
using nlohmann::json;

namespace {

// Leftover "--section.key=value" arguments become config overrides.
std::vector<std::string> overrides_from(const CLI::App* cmd) {
  std::vector<std::string> out;
  for (const auto& arg : cmd->remaining()) {
    if (arg.rfind("--", 0) != 0 || arg.find('=') == std::string::npos)
      throw ConfigError("unexpected argument '" + arg + "'");
    out.push_back(arg);
  }
  return out;
}

json config_for(const std::string& path, const std::string& preset, std::vector<std::string> overrides,
                const std::string& out_dir) {
  if (!out_dir.empty()) overrides.push_back("output_dir=\"" + out_dir + "\"");
  if (!path.empty()) return load_config(path, overrides);
  if (preset.empty()) throw ConfigError("give --config FILE or --preset NAME");
  json raw = {{"experiment", preset}};
  for (const auto& o : overrides) apply_override(raw, o);
  return normalize_config(raw);
}

void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(out, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + out);
  f << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"score-matching lab: DSM/BSM training, sampling and identity checks"};
  app.require_subcommand(1);

  std::string config_path, preset, out, method = "dsm", arch, checkpoint, integrator = "exponential",
                                       format = "csv", binary_out, report = "expected";
  std::size_t n = 1000, stride = 1, offset = 1, n_mc = 2000;
  std::uint64_t seed = 0;
  bool zero_noise = false;

  auto* train = app.add_subcommand("train", "train a score model from a config");
  train->add_option("--method", method, "dsm or bsm")->check(CLI::IsMember({"dsm", "bsm"}));
  train->add_option("--config", config_path, "config file")->required();
  train->add_option("--out", out, "output directory (default model-out)");
  train->add_option("--arch", arch, "network widths \"d,H,...,d\" (switches the model to an mlp)");
  train->allow_extras();

  auto* sample = app.add_subcommand("sample", "draw samples with a checkpointed score model");
  sample->add_option("--checkpoint", checkpoint)->required();
  sample->add_option("--n", n, "number of samples");
  sample->add_option("--stride", stride, "use every k-th timestep");
  sample->add_option("--offset", offset, "subset index in [1, stride]");
  sample->add_option("--seed", seed);
  sample->add_option("--integrator", integrator)->check(CLI::IsMember({"exponential", "euler-maruyama"}));
  sample->add_flag("--zero-noise", zero_noise, "drop the Brownian term");
  sample->add_option("--out", out, "CSV output (default stdout)");
  sample->add_option("--binary", binary_out, "also write the binary sample layout here");

  auto* analyze = app.add_subcommand("analyze", "score error of a checkpoint against the config's target");
  analyze->add_option("--checkpoint", checkpoint)->required();
  analyze->add_option("--config", config_path, "config naming the target")->required();
  analyze->add_option("--report", report, "expected (fresh draws) or empirical (config dataset)")
      ->check(CLI::IsMember({"expected", "empirical"}));
  analyze->add_option("--n-mc", n_mc, "fresh draws per timestep");
  analyze->add_option("--format", format)->check(CLI::IsMember({"csv", "json"}));
  analyze->add_option("--out", out, "output file (default stdout)");
  analyze->allow_extras();

  auto* run = app.add_subcommand("run", "run a named experiment");
  run->add_option("--config", config_path, "config file");
  run->add_option("--preset", preset, "experiment name, using its defaults");
  run->add_option("--out", out, "output directory (overrides output_dir)");
  run->allow_extras();

  auto* validate = app.add_subcommand("validate", "check a config and print it with all defaults");
  validate->add_option("config", config_path)->required();
  validate->allow_extras();

  try {
    app.parse(argc, argv);

    if (*train) {
      std::vector<std::string> ov = overrides_from(train);
      json cfg = load_config(config_path, ov);
      if (!arch.empty()) {
        const auto widths = parse_arch(arch);
        const auto dim = build_target(cfg["target"], 0).dim();
        if (widths.size() < 3 || widths.front() != dim || widths.back() != dim)
          throw ConfigError("--arch must read \"d,H,...,d\" with d = " + std::to_string(dim));
        cfg["model"]["type"] = "mlp";
        cfg["model"]["hidden"] = std::vector<std::size_t>(widths.begin() + 1, widths.end() - 1);
      }
      if (out.empty()) out = "model-out";
      for (const auto& f : train_from_config(cfg, method, out)) std::cout << out << "/" << f << "\n";
    } else if (*sample) {
      auto model = load_score_model(checkpoint);
      Schedule grid = checkpoint_schedule(checkpoint);
      if (stride > 1) grid = subsample_schedule(grid, stride, offset);
      SamplerConfig sc{grid, integrator_from_string(integrator), n, seed, -1.0, zero_noise};
      const Mat x = reverse_sample(*model, sc);
      std::ostringstream os;
      write_samples_csv(os, x);
      emit(out, os.str());
      if (!binary_out.empty()) write_samples_binary(binary_out, x, seed);
    } else if (*analyze) {
      json cfg = load_config(config_path, overrides_from(analyze));
      const std::uint64_t s = cfg["seeds"][0].get<std::uint64_t>();
      const TargetSpec target = build_target(cfg["target"], s);
      auto model = load_score_model(checkpoint);
      const Schedule grid = checkpoint_schedule(checkpoint);
      const ScoreOracle oracle(target, grid.times());
      ErrorReport rep;
      if (report == "expected") {
        rep = expected_l2(*model, oracle, grid, n_mc, s);
      } else {
        const auto m = cfg["data"]["m"].get<std::size_t>();
        rep = empirical_l2(*model, oracle, noise_dataset(sample_target(target, m, s), grid, s));
      }
      std::ostringstream os;
      if (format == "json")
        os << rep.to_json().dump(2) << "\n";
      else
        rep.write_csv(os);
      emit(out, os.str());
    } else if (*run) {
      const json cfg = config_for(config_path, preset, overrides_from(run), out);
      const RunResult res = run_experiment(cfg);
      std::cout << res.summary["aggregate"].dump(2) << "\n";
      std::cout << "wrote " << res.files.size() << " files under " << res.output_dir << "\n";
    } else if (*validate) {
      std::cout << load_config(config_path, overrides_from(validate)).dump(2) << "\n";
    }
    return 0;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
