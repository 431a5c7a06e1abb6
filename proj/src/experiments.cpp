#include "scorelab/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>

#include "scorelab/analysis.hpp"
#include "scorelab/errors.hpp"
#include "scorelab/io.hpp"
#include "scorelab/rng.hpp"
#include "scorelab/sample.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace scorelab {

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {
      "gaussian-linear", "gmm-bsm",          "dimension-sweep", "variance-compare",
      "martingale-check", "fast-inference", "identity-suite"};
  return names;
}

namespace {

json base_config() {
  return {
      {"experiment", ""},
      {"seeds", json::array({0})},
      {"output_dir", ""},
      {"target", {{"kind", "gaussian-uniform-spectrum"}, {"dim", 2}, {"low", 1.0}, {"high", 2.0}}},
      {"schedule", {{"kind", "linear"}, {"steps", 100}, {"horizon", 5.0}}},
      {"data", {{"m", 1000}, {"test_m", 1000}, {"noise", "markov"}}},
      {"model", {{"type", "linear"}, {"hidden", json::array({128})}, {"activation", "tanh"}}},
      {"train",
       {{"method", "dsm"},
        {"epochs", 1},
        {"batch_size", 1000},
        {"log_every", 1},
        {"optimizer", OptimizerConfig{}.to_json()},
        {"k0", nullptr},
        {"alpha", {{"mode", "ratio"}, {"value", 0.9}}},
        {"bsm_network", "per-step"},
        {"bootstrap_start_epoch", 0},
        {"epochs_per_step", 1}}},
      {"sample", {{"n", 1000}, {"integrator", "exponential"}, {"stride", 1}, {"offset", 0}}},
      {"analysis",
       {{"n_mc", 2000},
        {"t", 1.0},
        {"deltas", json::array({0.2, 0.1, 0.05})},
        {"instances", 20},
        {"dims", json::array({8, 16, 32, 64})},
        {"noise_parameterization", false},
        {"spot_draws", 1000}}},
  };
}

}  // namespace

json preset_config(const std::string& name) {
  json c = base_config();
  c["experiment"] = name;
  c["output_dir"] = "runs/" + name;
  if (name == "gaussian-linear") {
    c["seeds"] = {0, 1, 2, 3, 4};
    c["target"] = {{"kind", "gaussian-wishart"}, {"dim", 10}};
    c["schedule"] = {{"kind", "linear"}, {"steps", 200}, {"horizon", 5.0}};
    c["data"]["m"] = 10000;
    c["train"]["method"] = "both";
  } else if (name == "gmm-bsm") {
    c["target"] = {{"kind", "gmm"},
                   {"means", json::array({json::array({5.0}), json::array({-5.0})})},
                   {"variances", {1.0, 1.0}},
                   {"weights", {0.7, 0.3}}};
    c["schedule"] = {{"kind", "linear"}, {"steps", 1000}, {"horizon", 5.0}};
    c["data"]["m"] = 10000;
    c["model"] = {{"type", "mlp"}, {"hidden", {10, 10}}, {"activation", "tanh"}};
    OptimizerConfig opt;
    opt.lr = 0.05;
    opt.schedule.kind = LrSchedule::Kind::cosine_warmup;
    opt.schedule.warmup_fraction = 0.1;
    c["train"].update({{"method", "both"},
                       {"epochs", 100},
                       {"log_every", 100},
                       {"optimizer", opt.to_json()},
                       {"k0", 250},
                       {"alpha", {{"mode", "fixed"}, {"value", 0.9}}},
                       {"bsm_network", "shared"},
                       {"bootstrap_start_epoch", 90}});
    c["sample"]["n"] = 10000;
  } else if (name == "dimension-sweep") {
    c["seeds"] = {0, 1, 2, 3, 4};
    c["model"] = {{"type", "mlp"}, {"hidden", {128}}, {"activation", "tanh"}};
    c["train"].update({{"epochs", 50}, {"log_every", 1000}});
  } else if (name == "variance-compare") {
    c["target"] = {{"kind", "identity"}, {"dim", 2}};
    c["analysis"]["n_mc"] = 100000;
  } else if (name == "martingale-check") {
    c["schedule"] = {{"kind", "linear"}, {"steps", 20}, {"horizon", 1.0}};
    c["data"]["m"] = 10;
  } else if (name == "fast-inference") {
    c["schedule"] = {{"kind", "linear"}, {"steps", 500}, {"horizon", 5.0}};
    c["data"]["m"] = 10000;
    c["sample"].update({{"n", 10000}, {"stride", 5}});
  } else if (name == "identity-suite") {
    c["schedule"] = {{"kind", "linear"}, {"steps", 20}, {"horizon", 1.0}};
    c["data"]["m"] = 100000;
    c["analysis"].update({{"t", 0.5}, {"n_mc", 20000}});
  } else {
    throw ConfigError("unknown experiment '" + name + "'");
  }
  return c;
}

void apply_override(json& config, const std::string& assignment) {
  std::string text = assignment;
  if (text.rfind("--", 0) == 0) text = text.substr(2);
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' must look like section.key=value");
  const std::string path = text.substr(0, eq);
  const std::string raw = text.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json* node = &config;
  std::stringstream ss(path);
  std::string key;
  std::vector<std::string> keys;
  while (std::getline(ss, key, '.')) keys.push_back(key);
  for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
    json& next = (*node)[keys[i]];
    if (next.is_null()) next = json::object();
    if (!next.is_object()) throw ConfigError("override path '" + path + "' crosses a non-object");
    node = &next;
  }
  (*node)[keys.back()] = std::move(value);
}

// --- validation -------------------------------------------------------------------

namespace {

std::size_t line_of(const std::string& source, const std::string& path) {
  if (source.empty()) return 0;
  std::size_t pos = 0;
  std::stringstream ss(path);
  std::string key;
  while (std::getline(ss, key, '.')) {
    const auto p = source.find("\"" + key + "\"", pos);
    if (p == std::string::npos) return 0;
    pos = p;
  }
  return 1 + static_cast<std::size_t>(std::count(source.begin(), source.begin() + static_cast<long>(pos), '\n'));
}

class Checker {
 public:
  Checker(json& cfg, const std::string& source) : cfg_(cfg), source_(source) {}

  json* find(const std::string& path) {
    json* node = &cfg_;
    std::stringstream ss(path);
    std::string key;
    while (std::getline(ss, key, '.')) {
      if (!node->is_object() || !node->contains(key)) return nullptr;
      node = &(*node)[key];
    }
    return node;
  }

  void fail(const std::string& path, const std::string& msg) {
    const std::size_t line = line_of(source_, path);
    std::ostringstream out;
    if (line > 0)
      out << "line " << line << ": " << path << ": " << msg;
    else
      out << path << ": " << msg;
    issues_.push_back(out.str());
  }

  std::optional<long long> integer(const std::string& path, long long lo, long long hi) {
    json* v = find(path);
    if (!v || !v->is_number_integer()) {
      fail(path, "must be an integer");
      return std::nullopt;
    }
    const long long x = v->get<long long>();
    if (x < lo || x > hi) {
      fail(path, "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "] (got " +
                     std::to_string(x) + ")");
      return std::nullopt;
    }
    return x;
  }

  std::optional<double> number(const std::string& path, double lo, double hi, bool open_lo = false) {
    json* v = find(path);
    if (!v || !v->is_number()) {
      fail(path, "must be a number");
      return std::nullopt;
    }
    const double x = v->get<double>();
    if (!(open_lo ? x > lo : x >= lo) || !(x <= hi)) {
      std::ostringstream msg;
      msg << "must lie in " << (open_lo ? "(" : "[") << lo << ", " << hi << "] (got " << x << ")";
      fail(path, msg.str());
      return std::nullopt;
    }
    return x;
  }

  std::optional<std::string> choice(const std::string& path, const std::vector<std::string>& options) {
    json* v = find(path);
    if (!v || !v->is_string()) {
      fail(path, "must be a string");
      return std::nullopt;
    }
    const auto s = v->get<std::string>();
    if (std::find(options.begin(), options.end(), s) == options.end()) {
      std::string list;
      for (const auto& o : options) list += (list.empty() ? "" : ", ") + o;
      fail(path, "unknown value '" + s + "' (expected one of: " + list + ")");
      return std::nullopt;
    }
    return s;
  }

  void unknown_keys(const json& reference, const json& node, const std::string& prefix) {
    if (!node.is_object()) return;
    for (const auto& [key, value] : node.items()) {
      const std::string path = prefix.empty() ? key : prefix + "." + key;
      if (!reference.contains(key)) {
        fail(path, "unknown field");
        continue;
      }
      if (path == "target" || path == "train.optimizer") continue;
      if (reference[key].is_object()) unknown_keys(reference[key], value, path);
    }
  }

  const std::vector<std::string>& issues() const { return issues_; }

 private:
  json& cfg_;
  const std::string& source_;
  std::vector<std::string> issues_;
};

void merge_into(json& base, const json& patch) {
  for (const auto& [key, value] : patch.items()) {
    if (key == "target") {
      base[key] = value;  // replaced wholesale: fields depend on the kind
    } else if (value.is_object() && base.contains(key) && base[key].is_object()) {
      merge_into(base[key], value);
    } else {
      base[key] = value;
    }
  }
}

}  // namespace

TargetSpec build_target(const json& t, std::uint64_t seed, const std::string& base_dir) {
  const auto kind = t.at("kind").get<std::string>();
  if (kind == "gaussian" || kind == "gmm") return TargetSpec::from_json(t);
  if (kind == "identity") {
    const auto d = t.at("dim").get<std::size_t>();
    return TargetSpec::gaussian(Mat::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)));
  }
  if (kind == "gaussian-uniform-spectrum")
    return TargetSpec::gaussian(random_spd_uniform_spectrum(
        t.at("dim").get<std::size_t>(), t.value("low", 1.0), t.value("high", 2.0), seed));
  if (kind == "gaussian-wishart")
    return TargetSpec::gaussian(random_spd_wishart(t.at("dim").get<std::size_t>(), seed));
  if (kind == "file") {
    fs::path p = t.at("path").get<std::string>();
    if (p.is_relative()) p = fs::path(base_dir) / p;
    std::ifstream in(p);
    if (!in) throw ConfigError("cannot open target file " + p.string());
    return build_target(json::parse(in), seed, p.parent_path().string());
  }
  throw ConfigError("unknown target kind '" + kind + "'");
}

Schedule build_schedule(const json& s) { return Schedule::from_json(s); }

OptimizerConfig build_optimizer(const json& train) {
  return OptimizerConfig::from_json(train.at("optimizer"));
}

AlphaRule build_alpha(const json& train) {
  AlphaRule rule;
  rule.mode = alpha_mode_from_string(train.at("alpha").at("mode").get<std::string>());
  rule.fixed_value = train.at("alpha").value("value", 0.9);
  return rule;
}

std::vector<std::size_t> mlp_widths(std::size_t dim, const json& model) {
  std::vector<std::size_t> widths{dim + 1};
  for (const auto& h : model.at("hidden")) widths.push_back(h.get<std::size_t>());
  widths.push_back(dim);
  return widths;
}

json normalize_config(const json& raw, const std::string& source, const std::string& base_dir) {
  if (!raw.is_object()) throw ConfigError("config must be a JSON object");
  if (!raw.contains("experiment") || !raw["experiment"].is_string())
    throw ConfigError("experiment: missing experiment name");
  const auto name = raw["experiment"].get<std::string>();
  const auto& names = experiment_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    const std::size_t line = line_of(source, "experiment");
    throw ConfigError((line ? "line " + std::to_string(line) + ": " : std::string()) +
                      "experiment: unknown experiment '" + name + "'");
  }
  const json reference = preset_config(name);
  json cfg = reference;
  merge_into(cfg, raw);
  Checker ck(cfg, source);
  ck.unknown_keys(reference, raw, "");

  // seeds
  if (json* s = ck.find("seeds"); !s || !s->is_array() || s->empty()) {
    ck.fail("seeds", "must be a non-empty list of seeds");
  } else {
    if (std::any_of(s->begin(), s->end(), [](const json& v) { return !v.is_number_integer() || v.get<long long>() < 0; }))
      ck.fail("seeds", "seeds must be non-negative integers");
  }
  if (json* o = ck.find("output_dir"); !o || !o->is_string() || o->get<std::string>().empty())
    ck.fail("output_dir", "must be a non-empty path");

  // target
  std::optional<std::size_t> dim;
  try {
    const json& t = cfg["target"];
    if (t.is_object() && t.value("kind", "") == "file") {
      fs::path p = t.at("path").get<std::string>();
      if (p.is_relative()) p = fs::path(base_dir) / p;
      if (!fs::exists(p)) throw ConfigError("referenced file " + p.string() + " does not exist");
      cfg["target"]["path"] = fs::absolute(p).lexically_normal().string();
    }
    dim = build_target(t, 0, base_dir).dim();
  } catch (const std::exception& e) {
    std::string what = e.what();
    std::string field = "target";
    if (what.find("weights") != std::string::npos) field = "target.weights";
    else if (what.find("variances") != std::string::npos) field = "target.variances";
    else if (what.find("covariance") != std::string::npos || what.find("sigma") != std::string::npos)
      field = "target.sigma";
    ck.fail(field, what);
  }

  // schedule
  std::optional<std::size_t> steps;
  if (auto kind = ck.choice("schedule.kind", {"linear", "quadratic"})) {
    auto n = ck.integer("schedule.steps", *kind == "quadratic" ? 2 : 1, 10'000'000);
    auto h = ck.number("schedule.horizon", 0.0, 1e3, true);
    if (n && h) {
      try {
        steps = build_schedule(cfg["schedule"]).size();
      } catch (const std::exception& e) {
        ck.fail("schedule", e.what());
      }
    }
  }

  ck.integer("data.m", 1, 1'000'000'000);
  ck.integer("data.test_m", 1, 1'000'000'000);
  ck.choice("data.noise", {"markov", "independent"});

  ck.choice("model.type", {"linear", "mlp"});
  ck.choice("model.activation", {"tanh", "relu"});
  if (json* h = ck.find("model.hidden"); !h || !h->is_array() || h->empty()) {
    ck.fail("model.hidden", "must be a non-empty list of layer widths");
  } else {
    if (std::any_of(h->begin(), h->end(), [](const json& v) { return !v.is_number_integer() || v.get<long long>() < 1; }))
      ck.fail("model.hidden", "layer widths must be positive integers");
  }

  ck.choice("train.method", {"dsm", "bsm", "both"});
  const auto epochs = ck.integer("train.epochs", 1, 1'000'000);
  ck.integer("train.batch_size", 1, 1'000'000'000);
  ck.integer("train.log_every", 1, 1'000'000'000);
  ck.integer("train.epochs_per_step", 1, 1'000'000);
  ck.choice("train.bsm_network", {"per-step", "shared"});
  if (auto b = ck.integer("train.bootstrap_start_epoch", 0, 1'000'000); b && epochs && *b > *epochs)
    ck.fail("train.bootstrap_start_epoch", "must not exceed train.epochs");
  try {
    build_optimizer(cfg["train"]);
  } catch (const std::exception& e) {
    ck.fail("train.optimizer", e.what());
  }
  if (json* lr = ck.find("train.optimizer.lr"); lr && (!lr->is_number() || !(lr->get<double>() > 0.0)))
    ck.fail("train.optimizer.lr", "must be positive");
  if (auto mode = ck.choice("train.alpha.mode", {"ratio", "sqrt", "fixed", "adaptive"});
      mode && *mode == "fixed")
    ck.number("train.alpha.value", 0.0, 1.0);
  if (steps) {
    json& k0 = cfg["train"]["k0"];
    if (k0.is_null()) k0 = std::max<std::size_t>(1, *steps / 4);
    if (!k0.is_number_integer()) {
      ck.fail("train.k0", "must be an integer");
    } else if (k0.get<long long>() < 1 || k0.get<long long>() > static_cast<long long>(*steps)) {
      ck.fail("train.k0", "bootstrapping needs 1 <= k0 <= N (N = " + std::to_string(*steps) +
                              ", got k0 = " + std::to_string(k0.get<long long>()) + ")");
    }
    if (auto stride = ck.integer("sample.stride", 1, static_cast<long long>(*steps)))
      ck.integer("sample.offset", 0, *stride);
  }
  ck.integer("sample.n", 1, 1'000'000'000);
  ck.choice("sample.integrator", {"exponential", "euler-maruyama"});

  ck.integer("analysis.n_mc", 2, 1'000'000'000);
  ck.integer("analysis.instances", 1, 1'000'000);
  ck.integer("analysis.spot_draws", 2, 1'000'000'000);
  if (json* np = ck.find("analysis.noise_parameterization"); !np || !np->is_boolean())
    ck.fail("analysis.noise_parameterization", "must be true or false");
  if (auto t = ck.number("analysis.t", 0.0, 1e3, true)) {
    if (json* d = ck.find("analysis.deltas"); !d || !d->is_array() || d->empty()) {
      ck.fail("analysis.deltas", "must be a non-empty list");
    } else {
      for (const auto& v : *d)
        if (!v.is_number() || !(v.get<double>() > 0.0) || v.get<double>() > *t)
          ck.fail("analysis.deltas", "each delta must lie in (0, analysis.t]");
    }
  }
  if (json* d = ck.find("analysis.dims"); !d || !d->is_array() || d->empty()) {
    ck.fail("analysis.dims", "must be a non-empty list");
  } else {
    if (std::any_of(d->begin(), d->end(), [](const json& v) { return !v.is_number_integer() || v.get<long long>() < 3; }))
      ck.fail("analysis.dims", "dimensions must be integers >= 3 (log log d must be positive)");
  }
  if (name == "gaussian-linear" && cfg["model"]["type"] != "linear")
    ck.fail("model.type", "gaussian-linear fits linear models");
  if (name == "gmm-bsm" && cfg["model"]["type"] != "mlp")
    ck.fail("model.type", "gmm-bsm trains networks");
  (void)dim;

  if (!ck.issues().empty()) {
    std::string msg = "invalid config:";
    for (const auto& issue : ck.issues()) msg += "\n  " + issue;
    throw ConfigError(msg);
  }
  return cfg;
}

json load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string source = buf.str();
  json raw;
  try {
    raw = json::parse(source);
  } catch (const json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte, source.size());
    const auto line = 1 + std::count(source.begin(), source.begin() + static_cast<long>(upto), '\n');
    throw ConfigError("line " + std::to_string(line) + ": malformed JSON: " + e.what());
  }
  for (const auto& o : overrides) apply_override(raw, o);
  return normalize_config(raw, source, fs::path(path).parent_path().string());
}

// --- kernels ---------------------------------------------------------------------

std::vector<double> linear_score_errors(const LinearScoreModel& model, const ScoreOracle& oracle) {
  std::vector<double> out;
  const auto& grid = model.grid();
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const double t = grid.time(j);
    out.push_back((model.weight(j) + oracle.precision(t)).squaredNorm() + model.bias(j).squaredNorm());
  }
  return out;
}

SweepPoint dimension_sweep_point(std::size_t dim, const json& config, std::uint64_t seed) {
  const json& tc = config.at("target");
  const double lo = tc.value("kind", "") == "gaussian-uniform-spectrum" ? tc.value("low", 1.0) : 1.0;
  const double hi = tc.value("kind", "") == "gaussian-uniform-spectrum" ? tc.value("high", 2.0) : 2.0;
  const std::uint64_t base = stream_seed(seed, StreamDomain::experiment, dim);
  const TargetSpec target = TargetSpec::gaussian(random_spd_uniform_spectrum(dim, lo, hi, base));
  const Schedule grid = build_schedule(config.at("schedule"));
  const ScoreOracle oracle(target, grid.times());
  const auto m = config.at("data").at("m").get<std::size_t>();
  const auto test_m = config.at("data").at("test_m").get<std::size_t>();
  const NoiseMode mode = config.at("data").at("noise") == "independent" ? NoiseMode::independent
                                                                         : NoiseMode::markov;
  const std::uint64_t train_seed = stream_seed(base, StreamDomain::experiment, 1);
  const std::uint64_t test_seed = stream_seed(base, StreamDomain::experiment, 2);
  const NoisedDataset train = noise_dataset(sample_target(target, m, train_seed), grid, train_seed, mode);
  const NoisedDataset test = noise_dataset(sample_target(target, test_m, test_seed), grid, test_seed, mode);

  const json& mc = config.at("model");
  const auto widths = mlp_widths(dim, mc);
  const TimeMlp init = TimeMlp::initialized(widths, activation_from_string(mc.at("activation")), grid,
                                            stream_seed(base, StreamDomain::init, 0));
  DsmConfig dc;
  dc.epochs = config.at("train").at("epochs").get<std::size_t>();
  dc.batch_size = config.at("train").at("batch_size").get<std::size_t>();
  dc.optimizer = build_optimizer(config.at("train"));
  dc.seed = stream_seed(base, StreamDomain::minibatch, 0);
  dc.log_every = config.at("train").at("log_every").get<std::size_t>();
  const TimeMlp net = train_dsm(init, train, dc).model;

  const bool noise_space = config.at("analysis").at("noise_parameterization").get<bool>();
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t j = 1; j < grid.size(); ++j) {
    const double t = grid.time(j);
    double e = (net.eval(t, test.x[j]) - oracle.eval(t, test.x[j])).rowwise().squaredNorm().mean();
    if (noise_space) e *= sigma_sq(t);
    acc += e;
    ++count;
  }
  SweepPoint p;
  p.dim = dim;
  p.params = net.parameter_count();
  p.error = count ? acc / static_cast<double>(count) : 0.0;
  p.scaled = p.error / (static_cast<double>(p.params) * std::log(std::log(static_cast<double>(dim))));
  return p;
}

// --- checkpoints -----------------------------------------------------------------

void save_score_model(const std::string& path, const ScoreField& model) {
  if (const auto* lin = dynamic_cast<const LinearScoreModel*>(&model)) {
    const auto body = lin->flat_parameters();
    write_checkpoint(path, lin->arch(), body);
  } else if (const auto* mlp = dynamic_cast<const TimeMlp*>(&model)) {
    write_checkpoint(path, mlp->arch(),
                     std::span<const double>(mlp->parameters().data(), mlp->parameter_count()));
  } else if (const auto* per = dynamic_cast<const PerStepMlp*>(&model)) {
    json arch = {{"type", "mlp-per-step"}, {"nets", json::array()}};
    std::vector<double> body;
    for (const auto& net : per->nets()) {
      arch["nets"].push_back(net.arch());
      body.insert(body.end(), net.parameters().data(), net.parameters().data() + net.parameter_count());
    }
    write_checkpoint(path, arch, body);
  } else {
    throw std::invalid_argument("this model type cannot be checkpointed");
  }
}

std::unique_ptr<ScoreField> load_score_model(const std::string& path) {
  const auto [arch, body] = read_checkpoint(path);
  const auto type = arch.at("type").get<std::string>();
  if (type == "linear") return std::make_unique<LinearScoreModel>(LinearScoreModel::from_checkpoint(arch, body));
  if (type == "mlp") return std::make_unique<TimeMlp>(TimeMlp::from_checkpoint(arch, body));
  if (type == "mlp-per-step") {
    std::vector<TimeMlp> nets;
    std::size_t pos = 0;
    for (const auto& a : arch.at("nets")) {
      const std::size_t count = mlp_parameter_count(a.at("widths").get<std::vector<std::size_t>>());
      if (pos + count > body.size()) throw ConfigError("per-step checkpoint is truncated");
      nets.push_back(TimeMlp::from_checkpoint(a, std::span<const double>(body).subspan(pos, count)));
      pos += count;
    }
    if (pos != body.size()) throw ConfigError("per-step checkpoint has trailing parameters");
    return std::make_unique<PerStepMlp>(std::move(nets));
  }
  throw ConfigError("unknown checkpoint type '" + type + "'");
}

Schedule checkpoint_schedule(const std::string& path) {
  const auto [arch, body] = read_checkpoint(path);
  if (arch.contains("schedule")) return Schedule::from_json(arch["schedule"]);
  if (arch.contains("nets") && !arch["nets"].empty()) return Schedule::from_json(arch["nets"][0]["schedule"]);
  throw ConfigError("checkpoint does not record a schedule");
}

// --- orchestration ----------------------------------------------------------------

namespace {

class Outputs {
 public:
  explicit Outputs(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

  std::ofstream open(const std::string& rel) {
    const fs::path p = root_ / rel;
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    record(rel);
    return out;
  }

  std::string path(const std::string& rel) {
    const fs::path p = root_ / rel;
    fs::create_directories(p.parent_path());
    record(rel);
    return p.string();
  }

  const fs::path& root() const { return root_; }
  const std::vector<std::string>& files() const { return files_; }

 private:
  void record(const std::string& rel) {
    if (std::find(files_.begin(), files_.end(), rel) == files_.end()) files_.push_back(rel);
  }
  fs::path root_;
  std::vector<std::string> files_;
};

struct Context {
  const json& cfg;
  std::uint64_t seed;
  std::string dir;  ///< per-seed prefix, e.g. "seed-3/"
  Outputs& out;
};

NoiseMode noise_mode(const json& cfg) {
  return cfg.at("data").at("noise") == "independent" ? NoiseMode::independent : NoiseMode::markov;
}

DsmConfig dsm_config(const json& cfg, std::uint64_t seed) {
  DsmConfig dc;
  const json& tr = cfg.at("train");
  dc.epochs = tr.at("epochs").get<std::size_t>();
  dc.batch_size = tr.at("batch_size").get<std::size_t>();
  dc.optimizer = build_optimizer(tr);
  dc.seed = seed;
  dc.log_every = tr.at("log_every").get<std::size_t>();
  return dc;
}

BsmConfig bsm_config(const json& cfg, std::uint64_t seed) {
  BsmConfig bc;
  const json& tr = cfg.at("train");
  bc.k0 = tr.at("k0").get<std::size_t>();
  bc.alpha = build_alpha(tr);
  bc.epochs_per_step = tr.at("epochs_per_step").get<std::size_t>();
  bc.batch_size = tr.at("batch_size").get<std::size_t>();
  bc.optimizer = build_optimizer(tr);
  bc.seed = seed;
  return bc;
}

void write_trace(std::ostream& os, const std::vector<TraceRow>& trace) {
  CsvWriter csv(os, {"step", "loss", "lr"});
  for (const auto& r : trace) {
    csv.field(r.step).field(r.loss).field(r.lr);
    csv.end_row();
  }
}

double covariance_error(const Mat& samples, const Mat& sigma_true) {
  return (sample_covariance(samples) - sigma_true).norm();
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// gaussian-linear ---------------------------------------------------------------

json run_gaussian_linear(const Context& c) {
  const TargetSpec target = build_target(c.cfg["target"], c.seed);
  const Schedule grid = build_schedule(c.cfg["schedule"]);
  const ScoreOracle oracle(target, grid.times());
  const auto m = c.cfg["data"]["m"].get<std::size_t>();
  const NoisedDataset ds = noise_dataset(sample_target(target, m, c.seed), grid, c.seed, noise_mode(c.cfg));
  const BsmConfig bc = bsm_config(c.cfg, c.seed);
  const auto dsm_err = linear_score_errors(train_dsm_linear(ds), oracle);
  const auto bsm_err = linear_score_errors(train_bsm_linear(ds, bc), oracle);

  auto os = c.out.open(c.dir + "errors.csv");
  CsvWriter csv(os, {"timestep", "t", "dsm_error", "bsm_error"});
  std::size_t wins = 0, late = 0;
  double late_dsm = 0.0, late_bsm = 0.0;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    csv.field(j + 1).field(grid.time(j)).field(dsm_err[j]).field(bsm_err[j]);
    csv.end_row();
    if (j >= bc.k0) {
      ++late;
      wins += bsm_err[j] <= dsm_err[j];
      late_dsm += dsm_err[j];
      late_bsm += bsm_err[j];
    }
  }
  json s = {{"seed", c.seed}, {"k0", bc.k0}, {"alpha_mode", to_string(bc.alpha.mode)}};
  if (late > 0) {
    s["late_win_fraction"] = static_cast<double>(wins) / static_cast<double>(late);
    s["late_dsm_mean"] = late_dsm / static_cast<double>(late);
    s["late_bsm_mean"] = late_bsm / static_cast<double>(late);
    s["bsm_better"] = late_bsm < late_dsm;
  }
  return s;
}

// gmm-bsm ------------------------------------------------------------------------

json run_gmm_bsm(const Context& c) {
  const TargetSpec target = build_target(c.cfg["target"], c.seed);
  const Schedule grid = build_schedule(c.cfg["schedule"]);
  const ScoreOracle oracle(target, grid.times());
  const auto m = c.cfg["data"]["m"].get<std::size_t>();
  const NoisedDataset ds = noise_dataset(sample_target(target, m, c.seed), grid, c.seed, noise_mode(c.cfg));
  const json& mc = c.cfg["model"];
  const TimeMlp init = TimeMlp::initialized(mlp_widths(target.dim(), mc),
                                            activation_from_string(mc["activation"]), grid,
                                            stream_seed(c.seed, StreamDomain::init, 0));
  const std::string method = c.cfg["train"]["method"];
  const DsmConfig dc = dsm_config(c.cfg, c.seed);

  SamplerConfig sc{grid, integrator_from_string(c.cfg["sample"]["integrator"]),
                   c.cfg["sample"]["n"].get<std::size_t>(), c.seed, -1.0, false};
  std::vector<std::pair<std::string, Mat>> samples;
  samples.emplace_back("oracle", reverse_sample(oracle, sc));

  if (method == "dsm" || method == "both") {
    const auto res = train_dsm(init, ds, dc);
    auto os = c.out.open(c.dir + "dsm_trace.csv");
    write_trace(os, res.trace);
    save_score_model(c.out.path(c.dir + "dsm.ckpt"), res.model);
    samples.emplace_back("dsm", reverse_sample(res.model, sc));
  }
  if (method == "bsm" || method == "both") {
    const json& tr = c.cfg["train"];
    const auto k0 = tr["k0"].get<std::size_t>();
    if (tr["bsm_network"] == "shared") {
      const auto res = train_bsm_shared(init, ds, dc, k0, build_alpha(tr),
                                        tr["bootstrap_start_epoch"].get<std::size_t>());
      auto os = c.out.open(c.dir + "bsm_trace.csv");
      write_trace(os, res.trace);
      save_score_model(c.out.path(c.dir + "bsm.ckpt"), res.model);
      samples.emplace_back("bsm", reverse_sample(res.model, sc));
    } else {
      const PerStepMlp model = train_bsm_mlp(init, ds, bsm_config(c.cfg, c.seed));
      save_score_model(c.out.path(c.dir + "bsm.ckpt"), model);
      samples.emplace_back("bsm", reverse_sample(model, sc));
    }
  }

  const GmmTarget& g = target.as_gmm();
  json s = {{"seed", c.seed}, {"target_weights", g.weights}};
  for (const auto& [name, x] : samples) {
    auto os = c.out.open(c.dir + "samples_" + name + ".csv");
    write_samples_csv(os, x);
    s["mode_weights"][name] = mode_weights(x, g.means);
  }
  if (target.dim() == 1) {
    // Histogram densities on a fixed grid, next to the exact target density.
    const double lo = -10.0, hi = 10.0;
    const std::size_t bins = 100;
    const double width = (hi - lo) / static_cast<double>(bins);
    std::vector<std::string> header{"x", "target"};
    for (const auto& p : samples) header.push_back(p.first);
    auto os = c.out.open(c.dir + "density.csv");
    CsvWriter csv(os, header);
    std::vector<std::vector<double>> counts(samples.size(), std::vector<double>(bins, 0.0));
    for (std::size_t k = 0; k < samples.size(); ++k)
      for (Eigen::Index r = 0; r < samples[k].second.rows(); ++r) {
        const double v = samples[k].second(r, 0);
        if (v < lo || v >= hi) continue;
        counts[k][static_cast<std::size_t>((v - lo) / width)] += 1.0;
      }
    for (std::size_t b = 0; b < bins; ++b) {
      const double x = lo + (static_cast<double>(b) + 0.5) * width;
      csv.field(x).field(std::exp(oracle.log_density(0.0, Vec::Constant(1, x))));
      for (std::size_t k = 0; k < samples.size(); ++k)
        csv.field(counts[k][b] / (static_cast<double>(samples[k].second.rows()) * width));
      csv.end_row();
    }
  }
  return s;
}

// dimension-sweep ------------------------------------------------------------------

json run_dimension_sweep(const Context& c) {
  auto os = c.out.open(c.dir + "sweep.csv");
  CsvWriter csv(os, {"d", "params", "error", "scaled_error"});
  json rows = json::array();
  std::vector<double> ds, es;
  for (const auto& dv : c.cfg["analysis"]["dims"]) {
    const SweepPoint p = dimension_sweep_point(dv.get<std::size_t>(), c.cfg, c.seed);
    csv.field(p.dim).field(p.params).field(p.error).field(p.scaled);
    csv.end_row();
    rows.push_back({{"d", p.dim}, {"params", p.params}, {"error", p.error}, {"scaled", p.scaled}});
    ds.push_back(static_cast<double>(p.dim));
    es.push_back(p.scaled);
  }
  json s = {{"seed", c.seed}, {"points", rows}};
  if (ds.size() >= 2) s["slope"] = loglog_slope(ds, es);
  return s;
}

// variance-compare ---------------------------------------------------------------

json run_variance_compare(const Context& c) {
  const TargetSpec target = build_target(c.cfg["target"], c.seed);
  const ScoreOracle oracle(target);
  const json& a = c.cfg["analysis"];
  const auto sweep = variance_rate_sweep(oracle, a["t"].get<double>(), a["deltas"].get<std::vector<double>>(),
                                         a["n_mc"].get<std::size_t>(), c.seed, build_alpha(c.cfg["train"]));
  auto os = c.out.open(c.dir + "variance.csv");
  sweep.write_csv(os);
  double worst_z = 0.0;
  for (const auto& r : sweep.rows)
    for (Eigen::Index k = 0; k < r.bsm_mean.size(); ++k)
      worst_z = std::max(worst_z, std::abs(r.bsm_mean(k)) / r.bsm_mean_se(k));
  json s = sweep.to_json();
  s["seed"] = c.seed;
  s["max_abs_mean_z"] = worst_z;
  return s;
}

// martingale-check -------------------------------------------------------------------

LinearScoreModel random_linear_model(const Schedule& grid, const ScoreOracle& oracle, Rng& rng) {
  const auto d = static_cast<Eigen::Index>(oracle.dim());
  LinearScoreModel model(grid, oracle.dim());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    Mat e(d, d);
    Vec b(d);
    for (Eigen::Index r = 0; r < d; ++r) {
      for (Eigen::Index k = 0; k < d; ++k) e(r, k) = rng.normal();
      b(r) = rng.normal();
    }
    model.set(j, {-oracle.precision(grid.time(j)) + 0.5 * e / std::sqrt(static_cast<double>(d)), 0.1 * b});
  }
  return model;
}

json run_martingale_check(const Context& c) {
  const TargetSpec target = build_target(c.cfg["target"], c.seed);
  const Schedule grid = build_schedule(c.cfg["schedule"]);
  const ScoreOracle oracle(target, grid.times());
  const auto m = c.cfg["data"]["m"].get<std::size_t>();
  const NoisedDataset ds = noise_dataset(sample_target(target, m, c.seed), grid, c.seed, noise_mode(c.cfg));
  const auto instances = c.cfg["analysis"]["instances"].get<std::size_t>();
  auto os = c.out.open(c.dir + "ledger.csv");
  CsvWriter csv(os, {"instance", "h_direct", "h_decomposed", "rel_gap"});
  double worst = 0.0;
  std::optional<LinearScoreModel> first;
  for (std::size_t k = 0; k < instances; ++k) {
    Rng rng(c.seed, StreamDomain::experiment, k);
    LinearScoreModel f = random_linear_model(grid, oracle, rng);
    const auto led = martingale_decompose(ds, f, oracle);
    csv.field(k).field(led.h_direct).field(led.h_decomposed).field(led.rel_gap);
    csv.end_row();
    worst = std::max(worst, led.rel_gap);
    if (!first) first = std::move(f);
  }
  json s = {{"seed", c.seed}, {"instances", instances}, {"max_rel_gap", worst}};
  if (ds.mode == NoiseMode::markov) {
    auto sp = c.out.open(c.dir + "spot_checks.csv");
    CsvWriter spot(sp, {"k", "mean", "stderr", "z"});
    const auto draws = c.cfg["analysis"]["spot_draws"].get<std::size_t>();
    double worst_z = 0.0;
    for (std::size_t k : {std::size_t{1}, grid.size()}) {
      const auto r = martingale_spot_check(ds, *first, oracle, 0, k, draws,
                                           stream_seed(c.seed, StreamDomain::monte_carlo, k));
      const double z = r.stderr > 0.0 ? r.mean / r.stderr : 0.0;
      spot.field(k).field(r.mean).field(r.stderr).field(z);
      spot.end_row();
      worst_z = std::max(worst_z, std::abs(z));
    }
    s["spot_check_max_abs_z"] = worst_z;
  }
  return s;
}

// fast-inference ------------------------------------------------------------------

json run_fast_inference(const Context& c) {
  const TargetSpec target = build_target(c.cfg["target"], c.seed);
  const Schedule grid = build_schedule(c.cfg["schedule"]);
  if (grid.kind() != ScheduleKind::linear) throw ConfigError("fast-inference needs a linear schedule");
  const ScoreOracle oracle(target, grid.times());
  const auto m = c.cfg["data"]["m"].get<std::size_t>();
  const NoisedDataset ds = noise_dataset(sample_target(target, m, c.seed), grid, c.seed, noise_mode(c.cfg));
  const LinearScoreModel model = train_dsm_linear(ds);
  const ErrorReport rep = expected_l2(model, oracle, grid, c.cfg["analysis"]["n_mc"].get<std::size_t>(),
                                      c.seed);
  {
    auto os = c.out.open(c.dir + "errors.csv");
    rep.write_csv(os);
  }
  const auto stride = c.cfg["sample"]["stride"].get<std::size_t>();
  const SubsetChoice choice = best_subset(rep.errors, grid, stride);
  {
    auto os = c.out.open(c.dir + "subsets.csv");
    CsvWriter csv(os, {"offset", "weighted_error"});
    for (std::size_t i = 0; i < choice.subset_sums.size(); ++i) {
      csv.field(i + 1).field(choice.subset_sums[i]);
      csv.end_row();
    }
  }
  auto offset = c.cfg["sample"]["offset"].get<std::size_t>();
  if (offset == 0) offset = choice.offset;
  const Schedule coarse = subsample_schedule(grid, stride, offset);
  SamplerConfig sc{grid, integrator_from_string(c.cfg["sample"]["integrator"]),
                   c.cfg["sample"]["n"].get<std::size_t>(), c.seed, -1.0, false};
  const Mat& sigma_true = target.as_gaussian().covariance;
  const double full_err = covariance_error(reverse_sample(model, sc), sigma_true);
  const double oracle_err = covariance_error(reverse_sample(oracle, sc), sigma_true);
  sc.schedule = coarse;
  const double coarse_err = covariance_error(reverse_sample(model, sc), sigma_true);
  return {{"seed", c.seed},
          {"stride", stride},
          {"best_offset", choice.offset},
          {"used_offset", offset},
          {"total_weighted_error", choice.total},
          {"subset_weighted_errors", choice.subset_sums},
          {"pigeonhole_ok", choice.bound_ok},
          {"cov_error_full", full_err},
          {"cov_error_subset", coarse_err},
          {"cov_error_oracle_full", oracle_err},
          {"degradation_ratio", coarse_err / full_err}};
}

// identity-suite --------------------------------------------------------------------

json run_identity_suite(const Context& c) {
  const TargetSpec target = build_target(c.cfg["target"], c.seed);
  if (!target.is_gaussian()) throw ConfigError("identity-suite needs a Gaussian target");
  const json& a = c.cfg["analysis"];
  auto os = c.out.open(c.dir + "identities.csv");
  CsvWriter csv(os, {"check", "value", "threshold", "pass"});
  json s = {{"seed", c.seed}};
  auto row = [&](const std::string& name, double value, double threshold, bool pass) {
    csv.field(name).field(value).field(threshold).field(pass ? "true" : "false");
    csv.end_row();
    s["checks"][name] = {{"value", value}, {"threshold", threshold}, {"pass", pass}};
  };

  {  // first-order Tweedie regression at a single time
    const double t = a["t"].get<double>();
    const Schedule one = Schedule::make(ScheduleKind::linear, 1, t);
    const ScoreOracle oracle(target, one.times());
    const auto m = c.cfg["data"]["m"].get<std::size_t>();
    const NoisedDataset ds = noise_dataset(sample_target(target, m, c.seed), one, c.seed);
    const AffineFit fit = fit_linear_least_squares(ds.x[0], ds.dsm_targets(0));
    const double err = (fit.weight + oracle.precision(t)).norm();
    row("tweedie_regression_frobenius", err, 0.05, err < 0.05);
  }
  const Schedule grid = build_schedule(c.cfg["schedule"]);
  const ScoreOracle oracle(target, grid.times());
  {
    const NoisedDataset ds = noise_dataset(sample_target(target, 10, c.seed), grid, c.seed);
    double worst = 0.0;
    for (std::size_t k = 0; k < a["instances"].get<std::size_t>(); ++k) {
      Rng rng(c.seed, StreamDomain::experiment, k);
      worst = std::max(worst, martingale_decompose(ds, random_linear_model(grid, oracle, rng), oracle).rel_gap);
    }
    row("martingale_identity_rel_gap", worst, 1e-8, worst < 1e-8);
  }
  {
    Rng rng(c.seed, StreamDomain::experiment, 1'000'000);
    std::size_t failures = 0;
    for (int rep = 0; rep < 1000; ++rep) {
      const std::size_t n = 1 + rng.below(64);
      std::vector<double> e(n);
      for (double& v : e) v = rng.uniform() * std::exp(4.0 * rng.normal());
      const auto choice = best_subset(e, 0.01 + rng.uniform(), 1 + rng.below(n));
      failures += !choice.bound_ok;
    }
    row("pigeonhole_failures", static_cast<double>(failures), 0.0, failures == 0);
  }
  {
    const TargetSpec one_d = TargetSpec::gaussian(Mat::Identity(1, 1));
    const ScoreOracle o1(one_d);
    const FunctionField f(1, [&](double t, const Vec& x) { return Vec(o1.score(t, x) + 0.5 * x); });
    const double kappa = kappa_estimate(f, o1, 1.0, a["n_mc"].get<std::size_t>(), c.seed);
    const double ref = std::pow(3.0, 0.25);
    row("kappa_gaussian_error", kappa, ref, std::abs(kappa - ref) < 0.05);
  }
  {
    const NoisedDataset ds = noise_dataset(sample_target(target, 1000, c.seed), grid, c.seed);
    std::vector<LinearScoreModel> perturbed;
    for (std::size_t k = 0; k < 3; ++k) {
      Rng rng(c.seed, StreamDomain::experiment, 2'000'000 + k);
      perturbed.push_back(random_linear_model(grid, oracle, rng));
    }
    const LinearScoreModel erm = train_dsm_linear(ds);
    std::vector<PoolEntry> pool{{"oracle", &oracle, true}, {"least-squares", &erm, false}};
    for (std::size_t k = 0; k < perturbed.size(); ++k)
      pool.push_back({"perturbed-" + std::to_string(k), &perturbed[k], false});
    const auto rep = excess_risk_check(ds, pool, oracle);
    row("excess_risk_slack", rep.slack, 0.0, rep.holds);
  }
  return s;
}

json run_seed(const Context& c) {
  const std::string name = c.cfg["experiment"];
  if (name == "gaussian-linear") return run_gaussian_linear(c);
  if (name == "gmm-bsm") return run_gmm_bsm(c);
  if (name == "dimension-sweep") return run_dimension_sweep(c);
  if (name == "variance-compare") return run_variance_compare(c);
  if (name == "martingale-check") return run_martingale_check(c);
  if (name == "fast-inference") return run_fast_inference(c);
  if (name == "identity-suite") return run_identity_suite(c);
  throw ConfigError("unknown experiment '" + name + "'");
}

json aggregate(const json& cfg, const json& per_seed) {
  const std::string name = cfg["experiment"];
  json agg = json::object();
  if (name == "gaussian-linear") {
    std::vector<double> wins;
    std::size_t better = 0;
    for (const auto& s : per_seed) {
      if (!s.contains("late_win_fraction")) continue;
      wins.push_back(s["late_win_fraction"].get<double>());
      better += s["bsm_better"].get<bool>();
    }
    agg = {{"mean_late_win_fraction", mean_of(wins)}, {"seeds_bsm_better", better},
           {"seeds", per_seed.size()}};
  } else if (name == "dimension-sweep") {
    std::map<std::size_t, std::vector<double>> by_dim;
    for (const auto& s : per_seed)
      for (const auto& p : s["points"]) by_dim[p["d"].get<std::size_t>()].push_back(p["scaled"].get<double>());
    std::vector<double> ds, es;
    json table = json::array();
    for (const auto& [d, v] : by_dim) {
      ds.push_back(static_cast<double>(d));
      es.push_back(mean_of(v));
      table.push_back({{"d", d}, {"mean_scaled_error", es.back()}});
    }
    agg["table"] = table;
    if (ds.size() >= 2) agg["slope"] = loglog_slope(ds, es);
  } else if (name == "gmm-bsm") {
    json mw = json::object();
    for (const auto& s : per_seed)
      for (const auto& [k, v] : s["mode_weights"].items()) mw[k].push_back(v);
    agg["mode_weights_by_seed"] = mw;
  } else if (name == "martingale-check") {
    double worst = 0.0;
    for (const auto& s : per_seed) worst = std::max(worst, s["max_rel_gap"].get<double>());
    agg["max_rel_gap"] = worst;
  } else if (name == "variance-compare") {
    std::vector<double> b, d;
    for (const auto& s : per_seed) {
      b.push_back(s["bsm_slope"].get<double>());
      d.push_back(s["dsm_slope"].get<double>());
    }
    agg = {{"mean_bsm_slope", mean_of(b)}, {"mean_dsm_slope", mean_of(d)}};
  } else if (name == "fast-inference") {
    std::vector<double> r;
    bool ok = true;
    for (const auto& s : per_seed) {
      r.push_back(s["degradation_ratio"].get<double>());
      ok = ok && s["pigeonhole_ok"].get<bool>();
    }
    agg = {{"mean_degradation_ratio", mean_of(r)}, {"pigeonhole_ok", ok}};
  } else if (name == "identity-suite") {
    bool ok = true;
    for (const auto& s : per_seed)
      for (const auto& [k, v] : s["checks"].items()) ok = ok && v["pass"].get<bool>();
    agg["all_pass"] = ok;
  }
  return agg;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

}  // namespace

RunResult run_experiment(const json& config) {
  const json cfg = normalize_config(config);
  Outputs out(cfg["output_dir"].get<std::string>());
  json per_seed = json::array();
  const auto seeds = cfg["seeds"].get<std::vector<std::uint64_t>>();
  for (std::uint64_t seed : seeds) {
    std::clog << "[" << cfg["experiment"].get<std::string>() << "] seed " << seed << "\n";
    const Context c{cfg, seed, "seed-" + std::to_string(seed) + "/", out};
    per_seed.push_back(run_seed(c));
  }
  json summary = {{"experiment", cfg["experiment"]},
                  {"seeds", seeds},
                  {"per_seed", per_seed},
                  {"aggregate", aggregate(cfg, per_seed)},
                  {"config", cfg}};
  {
    auto os = out.open("summary.json");
    os << summary.dump(2) << "\n";
  }
  {
    auto os = out.open("config.json");
    os << cfg.dump(2) << "\n";
  }
  std::vector<std::string> files = out.files();
  std::sort(files.begin(), files.end());
  {
    std::ofstream mf(out.root() / "MANIFEST", std::ios::binary);
    if (!mf) throw std::runtime_error("cannot write MANIFEST");
    mf << "config_sha256 " << sha256_hex(cfg.dump()) << "\n";
    mf << "seeds";
    for (auto s : seeds) mf << " " << s;
    mf << "\ncreated " << utc_timestamp() << "\n";
    for (const auto& f : files) mf << sha256_file((out.root() / f).string()) << "  " << f << "\n";
  }
  files.push_back("MANIFEST");
  return {out.root().string(), summary, files};
}

std::vector<std::string> train_from_config(const json& config, const std::string& method,
                                           const std::string& out_dir) {
  const json cfg = normalize_config(config);
  if (method != "dsm" && method != "bsm") throw ConfigError("--method must be dsm or bsm");
  const std::uint64_t seed = cfg["seeds"][0].get<std::uint64_t>();
  const TargetSpec target = build_target(cfg["target"], seed);
  const Schedule grid = build_schedule(cfg["schedule"]);
  const NoisedDataset ds = noise_dataset(sample_target(target, cfg["data"]["m"].get<std::size_t>(), seed),
                                         grid, seed, noise_mode(cfg));
  Outputs out(out_dir);
  const json& mc = cfg["model"];
  const json& tr = cfg["train"];
  if (mc["type"] == "linear") {
    if (method == "dsm") {
      save_score_model(out.path("model.ckpt"), train_dsm_linear(ds));
    } else {
      const LinearScoreModel model = train_bsm_linear(ds, bsm_config(cfg, seed));
      save_score_model(out.path("model.ckpt"), model);
      for (std::size_t j = 0; j < grid.size(); ++j) {
        std::ostringstream name;
        name << "steps/step-" << std::setw(5) << std::setfill('0') << j + 1 << ".ckpt";
        std::vector<double> body(model.weight(j).data(), model.weight(j).data() + model.weight(j).size());
        body.insert(body.end(), model.bias(j).data(), model.bias(j).data() + model.bias(j).size());
        write_checkpoint(out.path(name.str()),
                         {{"type", "linear-step"}, {"dim", model.dim()}, {"index", j + 1}, {"t", grid.time(j)}},
                         body);
      }
    }
  } else {
    const TimeMlp init = TimeMlp::initialized(mlp_widths(target.dim(), mc), activation_from_string(mc["activation"]),
                                              grid, stream_seed(seed, StreamDomain::init, 0));
    if (method == "dsm" || tr["bsm_network"] == "shared") {
      const auto res = method == "dsm"
                           ? train_dsm(init, ds, dsm_config(cfg, seed))
                           : train_bsm_shared(init, ds, dsm_config(cfg, seed), tr["k0"].get<std::size_t>(),
                                              build_alpha(tr), tr["bootstrap_start_epoch"].get<std::size_t>());
      auto os = out.open("trace.csv");
      write_trace(os, res.trace);
      save_score_model(out.path("model.ckpt"), res.model);
    } else {
      const PerStepMlp model = train_bsm_mlp(init, ds, bsm_config(cfg, seed));
      save_score_model(out.path("model.ckpt"), model);
      for (std::size_t j = 0; j < model.nets().size(); ++j) {
        std::ostringstream name;
        name << "steps/step-" << std::setw(5) << std::setfill('0') << j + 1 << ".ckpt";
        save_score_model(out.path(name.str()), model.nets()[j]);
      }
    }
  }
  return out.files();
}

}  // namespace scorelab
