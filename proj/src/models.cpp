#include "scorelab/models.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "scorelab/errors.hpp"
#include "scorelab/io.hpp"
#include "scorelab/rng.hpp"

namespace scorelab {

AffineFit fit_linear_least_squares(const Mat& points, const Mat& targets, bool with_bias) {
  const Eigen::Index m = points.rows();
  const Eigen::Index d = points.cols();
  const Eigen::Index cols = d + (with_bias ? 1 : 0);
  if (targets.rows() != m) throw std::invalid_argument("targets and points row counts differ");
  if (m <= cols) throw ConfigError("least squares needs more samples than design columns");

  Mat gram(cols, cols);
  Mat rhs(cols, targets.cols());
  gram.topLeftCorner(d, d).noalias() = points.transpose() * points;
  rhs.topRows(d).noalias() = points.transpose() * targets;
  if (with_bias) {
    const Vec col_sums = points.colwise().sum().transpose();
    gram.block(0, d, d, 1) = col_sums;
    gram.block(d, 0, 1, d) = col_sums.transpose();
    gram(d, d) = static_cast<double>(m);
    rhs.row(d) = targets.colwise().sum();
  }
  const Mat solution = spd_solve(gram, rhs);
  AffineFit fit;
  fit.weight = solution.topRows(d).transpose();
  fit.bias = with_bias ? Vec(solution.row(d).transpose()) : Vec::Zero(targets.cols());
  return fit;
}

// --- LinearScoreModel --------------------------------------------------------

LinearScoreModel::LinearScoreModel(Schedule grid, std::size_t dim)
    : grid_(std::move(grid)), dim_(dim) {
  const auto n = static_cast<Eigen::Index>(dim);
  weights_.assign(grid_.size(), Mat::Zero(n, n));
  biases_.assign(grid_.size(), Vec::Zero(n));
}

std::size_t LinearScoreModel::index(double t) const {
  auto j = grid_.index_of(t);
  if (!j) throw std::domain_error("time " + format_double(t) + " is not on the model grid");
  return *j;
}

void LinearScoreModel::set(std::size_t j, AffineFit fit) {
  if (static_cast<std::size_t>(fit.weight.rows()) != dim_ ||
      static_cast<std::size_t>(fit.weight.cols()) != dim_ ||
      static_cast<std::size_t>(fit.bias.size()) != dim_)
    throw std::invalid_argument("affine fit has the wrong shape");
  weights_.at(j) = std::move(fit.weight);
  biases_.at(j) = std::move(fit.bias);
}

Mat LinearScoreModel::eval(double t, const Mat& points) const {
  const std::size_t j = index(t);
  Mat out = points * weights_[j].transpose();
  out.rowwise() += biases_[j].transpose();
  return out;
}

nlohmann::json LinearScoreModel::arch() const {
  return {{"type", "linear"}, {"dim", dim_}, {"schedule", grid_.to_json()}};
}

std::vector<double> LinearScoreModel::flat_parameters() const {
  std::vector<double> out;
  out.reserve(grid_.size() * dim_ * (dim_ + 1));
  for (std::size_t j = 0; j < grid_.size(); ++j) {
    out.insert(out.end(), weights_[j].data(), weights_[j].data() + weights_[j].size());
    out.insert(out.end(), biases_[j].data(), biases_[j].data() + biases_[j].size());
  }
  return out;
}

LinearScoreModel LinearScoreModel::from_checkpoint(const nlohmann::json& arch,
                                                   std::span<const double> body) {
  if (arch.at("type") != "linear") throw ConfigError("checkpoint is not a linear model");
  LinearScoreModel model(Schedule::from_json(arch.at("schedule")), arch.at("dim").get<std::size_t>());
  const auto d = static_cast<Eigen::Index>(model.dim_);
  if (body.size() != model.grid_.size() * model.dim_ * (model.dim_ + 1))
    throw ConfigError("linear checkpoint has the wrong parameter count");
  std::size_t pos = 0;
  for (std::size_t j = 0; j < model.grid_.size(); ++j) {
    model.weights_[j] = Eigen::Map<const Mat>(body.data() + pos, d, d);
    pos += static_cast<std::size_t>(d * d);
    model.biases_[j] = Eigen::Map<const Vec>(body.data() + pos, d);
    pos += static_cast<std::size_t>(d);
  }
  return model;
}

// --- TimeMlp -------------------------------------------------------------------

std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + name + "'");
}

std::size_t mlp_parameter_count(const std::vector<std::size_t>& widths) {
  std::size_t total = 0;
  for (std::size_t l = 1; l < widths.size(); ++l) total += (widths[l - 1] + 1) * widths[l];
  return total;
}

std::vector<std::size_t> parse_arch(const std::string& spec) {
  std::vector<std::size_t> widths;
  std::stringstream in(spec);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(item, &used);
      if (used != item.size() || v <= 0) throw std::invalid_argument(item);
      widths.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError("invalid --arch entry '" + item + "'");
    }
  }
  if (widths.size() < 2) throw ConfigError("--arch needs at least input and output widths");
  return widths;
}

TimeMlp::TimeMlp(std::vector<std::size_t> widths, Activation activation, Schedule grid)
    : widths_(std::move(widths)), activation_(activation), grid_(std::move(grid)) {
  if (widths_.size() < 2) throw ConfigError("mlp needs at least two widths");
  if (widths_.front() != widths_.back() + 1)
    throw ConfigError("mlp input width must be output width + 1 (time embedding)");
  Eigen::Index offset = 0;
  for (std::size_t l = 1; l < widths_.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(widths_[l - 1]);
    const auto out = static_cast<Eigen::Index>(widths_[l]);
    layers_.push_back({offset, offset + in * out, in, out});
    offset += in * out + out;
  }
  params_ = Vec::Zero(offset);
}

TimeMlp TimeMlp::initialized(std::vector<std::size_t> widths, Activation activation, Schedule grid,
                             std::uint64_t seed) {
  TimeMlp net(std::move(widths), activation, std::move(grid));
  Rng rng(seed, StreamDomain::init, 0);
  for (const auto& layer : net.layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in));
    for (Eigen::Index p = 0; p < layer.in * layer.out + layer.out; ++p)
      net.params_(layer.weight_offset + p) = rng.uniform(-bound, bound);
  }
  return net;
}

double TimeMlp::embed_time(double t) const { return t / grid_.horizon(); }

Mat TimeMlp::forward_columns(const Mat& inputs) const {
  Mat a = inputs;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    Eigen::Map<const Mat> w(params_.data() + L.weight_offset, L.out, L.in);
    Eigen::Map<const Vec> b(params_.data() + L.bias_offset, L.out);
    Mat h = w * a;
    h.colwise() += b;
    if (l + 1 < layers_.size()) {
      if (activation_ == Activation::tanh)
        h = h.array().tanh();
      else
        h = h.cwiseMax(0.0);
    }
    a = std::move(h);
  }
  return a;
}

Mat TimeMlp::eval(double t, const Mat& points) const {
  if (!grid_.index_of(t))
    throw std::domain_error("time " + format_double(t) + " is not on the network grid");
  const Eigen::Index d = points.cols();
  Mat inputs(d + 1, points.rows());
  inputs.topRows(d) = points.transpose();
  inputs.row(d).setConstant(embed_time(t));
  return forward_columns(inputs).transpose();
}

Vec TimeMlp::forward(double t, const Vec& x) const { return eval(t, x.transpose()).row(0).transpose(); }

double TimeMlp::loss_grad(const MlpBatch& batch, Vec& grad) const {
  const Eigen::Index count = batch.inputs.cols();
  if (count == 0) throw std::invalid_argument("loss_grad needs a non-empty batch");
  const std::size_t n_layers = layers_.size();
  std::vector<Mat> acts(n_layers + 1);
  acts[0] = batch.inputs;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto& L = layers_[l];
    Eigen::Map<const Mat> w(params_.data() + L.weight_offset, L.out, L.in);
    Eigen::Map<const Vec> b(params_.data() + L.bias_offset, L.out);
    Mat h = w * acts[l];
    h.colwise() += b;
    if (l + 1 < n_layers) {
      if (activation_ == Activation::tanh)
        h = h.array().tanh();
      else
        h = h.cwiseMax(0.0);
    }
    acts[l + 1] = std::move(h);
  }
  const Mat residual = acts[n_layers] - batch.targets;
  const double loss = residual.squaredNorm() / static_cast<double>(count);

  grad.setZero(params_.size());
  Mat delta = (2.0 / static_cast<double>(count)) * residual;
  for (std::size_t l = n_layers; l-- > 0;) {
    const auto& L = layers_[l];
    Eigen::Map<Mat> gw(grad.data() + L.weight_offset, L.out, L.in);
    Eigen::Map<Vec> gb(grad.data() + L.bias_offset, L.out);
    gw.noalias() = delta * acts[l].transpose();
    gb = delta.rowwise().sum();
    if (l == 0) break;
    Eigen::Map<const Mat> w(params_.data() + L.weight_offset, L.out, L.in);
    Mat back = w.transpose() * delta;
    // acts[l] holds the activation output of layer l-1.
    if (activation_ == Activation::tanh)
      back.array() *= 1.0 - acts[l].array().square();
    else
      back.array() *= (acts[l].array() > 0.0).cast<double>();
    delta = std::move(back);
  }
  return loss;
}

MlpBatch TimeMlp::make_batch(std::span<const MlpExample> examples) const {
  if (examples.empty()) throw std::invalid_argument("batch must be non-empty");
  const auto d = static_cast<Eigen::Index>(dim());
  MlpBatch batch{Mat(d + 1, static_cast<Eigen::Index>(examples.size())),
                 Mat(d, static_cast<Eigen::Index>(examples.size()))};
  for (std::size_t c = 0; c < examples.size(); ++c) {
    const auto& e = examples[c];
    if (!grid_.index_of(e.t))
      throw std::domain_error("time " + format_double(e.t) + " is not on the network grid");
    const auto col = static_cast<Eigen::Index>(c);
    batch.inputs.col(col).head(d) = e.x;
    batch.inputs(d, col) = embed_time(e.t);
    batch.targets.col(col) = e.target;
  }
  return batch;
}

double TimeMlp::loss_grad(std::span<const MlpExample> examples, Vec& grad) const {
  return loss_grad(make_batch(examples), grad);
}

nlohmann::json TimeMlp::arch() const {
  return {{"type", "mlp"},
          {"widths", widths_},
          {"activation", to_string(activation_)},
          {"schedule", grid_.to_json()}};
}

TimeMlp TimeMlp::from_checkpoint(const nlohmann::json& arch, std::span<const double> body) {
  if (arch.at("type") != "mlp") throw ConfigError("checkpoint is not an mlp");
  TimeMlp net(arch.at("widths").get<std::vector<std::size_t>>(),
              activation_from_string(arch.at("activation").get<std::string>()),
              Schedule::from_json(arch.at("schedule")));
  if (body.size() != net.parameter_count())
    throw ConfigError("mlp checkpoint has the wrong parameter count");
  net.params_ = Eigen::Map<const Vec>(body.data(), static_cast<Eigen::Index>(body.size()));
  return net;
}

// --- checkpoints ---------------------------------------------------------------

namespace {
constexpr char kCheckpointMagic[8] = {'S', 'C', 'L', 'B', 'C', 'K', 'P', '1'};
}

void write_checkpoint(const std::string& path, const nlohmann::json& arch,
                      std::span<const double> params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open " + path);
  const std::string text = arch.dump();
  out.write(kCheckpointMagic, 8);
  write_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  write_u64(out, params.size());
  for (double v : params) write_f64(out, v);
}

std::pair<nlohmann::json, std::vector<double>> read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::string_view(magic, 8) != std::string_view(kCheckpointMagic, 8))
    throw ConfigError(path + " is not a scorelab checkpoint");
  std::string text(read_u64(in), '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(text.size())))
    throw ConfigError(path + " is truncated");
  std::vector<double> params(read_u64(in));
  for (double& v : params) v = read_f64(in);
  return {nlohmann::json::parse(text), std::move(params)};
}

}  // namespace scorelab
