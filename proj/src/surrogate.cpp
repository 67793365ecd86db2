#include "certopt/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "certopt/errors.hpp"
#include "certopt/kernels.hpp"

namespace certopt::surrogate {

using nlohmann::json;

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

std::string to_string(LrSchedule s) {
  switch (s) {
    case LrSchedule::constant:
      return "constant";
    case LrSchedule::plateau:
      return "plateau";
    case LrSchedule::cosine:
      return "cosine";
  }
  return "constant";
}

LrSchedule parse_lr_schedule(const std::string& text) {
  if (text == "constant") return LrSchedule::constant;
  if (text == "plateau") return LrSchedule::plateau;
  if (text == "cosine") return LrSchedule::cosine;
  throw ArgumentError("lr schedule must be 'constant', 'plateau' or 'cosine', got '" + text + "'");
}

Activation parse_activation(const std::string& text) {
  if (text == "tanh") return Activation::tanh;
  if (text == "relu") return Activation::relu;
  throw ArgumentError("activation must be 'tanh' or 'relu', got '" + text + "'");
}

ParamCount param_count(std::span<const std::size_t> widths) {
  if (widths.size() < 2) throw ArgumentError("param_count: need at least 2 layer widths");
  ParamCount pc;
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    if (widths[k] == 0 || widths[k + 1] == 0) throw ArgumentError("param_count: layer widths must be positive");
    pc.per_layer.push_back(widths[k] * widths[k + 1] + widths[k + 1]);
    pc.total += pc.per_layer.back();
  }
  return pc;
}

Normalization Normalization::identity(std::size_t n_inputs) {
  Normalization n;
  n.inputs.assign(n_inputs, MinMax{0.0, 1.0});
  n.output = MinMax{0.0, 1.0};
  n.fitted = true;
  return n;
}

// ---------------------------------------------------------------------------
// Model

MlpModel::MlpModel(std::vector<std::size_t> widths, Activation activation)
    : widths_(std::move(widths)), activation_(activation) {
  const ParamCount pc = param_count(widths_);
  if (widths_.back() != 1) throw ArgumentError("MlpModel: output width must be 1 (one model per output)");
  std::size_t offset = 0;
  for (std::size_t k = 0; k < pc.per_layer.size(); ++k) {
    offsets_.push_back(offset);
    offset += pc.per_layer[k];
  }
  params_.assign(pc.total, 0.0);
}

MlpModel MlpModel::initialized(std::vector<std::size_t> widths, Activation activation, std::uint64_t seed) {
  MlpModel m(std::move(widths), activation);
  Rng rng = Rng::derive(seed, "init");
  for (std::size_t k = 0; k < m.n_layers(); ++k) {
    const double limit = std::sqrt(3.0 / static_cast<double>(m.widths_[k]));
    for (double& w : m.weights(k)) w = rng.uniform(-limit, limit);
  }
  return m;
}

std::span<double> MlpModel::weights(std::size_t layer) {
  return {params_.data() + offsets_.at(layer), widths_[layer] * widths_[layer + 1]};
}
std::span<const double> MlpModel::weights(std::size_t layer) const {
  return {params_.data() + offsets_.at(layer), widths_[layer] * widths_[layer + 1]};
}
std::span<double> MlpModel::biases(std::size_t layer) {
  return {params_.data() + offsets_.at(layer) + widths_[layer] * widths_[layer + 1], widths_[layer + 1]};
}
std::span<const double> MlpModel::biases(std::size_t layer) const {
  return {params_.data() + offsets_.at(layer) + widths_[layer] * widths_[layer + 1], widths_[layer + 1]};
}

bool MlpModel::all_finite() const {
  return std::all_of(params_.begin(), params_.end(), [](double v) { return std::isfinite(v); });
}

void MlpModel::check_input(std::size_t n) const {
  if (widths_.empty()) throw StateError("MlpModel: model has no layers");
  if (n != input_width()) {
    throw ArgumentError("MlpModel: expected " + std::to_string(input_width()) + " inputs, got " + std::to_string(n));
  }
}

namespace {

void activate(Activation a, std::span<double> z) {
  if (a == Activation::tanh) {
    kernels::active().tanh_inplace(z.data(), z.size());
  } else {
    for (double& v : z) v = v > 0.0 ? v : 0.0;
  }
}

// Multiplies delta (dL/d activation) by the activation derivative, given the activated values.
void activation_backward(Activation a, std::span<const double> activated, std::span<double> delta) {
  if (a == Activation::tanh) {
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] *= 1.0 - activated[i] * activated[i];
  } else {
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = activated[i] > 0.0 ? delta[i] : 0.0;
  }
}

// Per-layer activations for a batch; acts[0] is the input.
struct Workspace {
  std::vector<Matrix> acts;
  Matrix delta;
  Matrix delta_prev;
};

void forward_batch(const MlpModel& model, const Matrix& xn, Workspace& ws) {
  const auto& k = kernels::active();
  const auto& w = model.widths();
  const std::size_t batch = xn.rows();
  ws.acts.resize(w.size());
  ws.acts[0] = xn;
  for (std::size_t layer = 0; layer < model.n_layers(); ++layer) {
    Matrix& out = ws.acts[layer + 1];
    if (out.rows() != batch || out.cols() != w[layer + 1]) out = Matrix(batch, w[layer + 1]);
    k.gemm_nt_bias(ws.acts[layer].data().data(), model.weights(layer).data(), model.biases(layer).data(),
                   out.data().data(), batch, w[layer + 1], w[layer]);
    if (layer + 1 < model.n_layers()) activate(model.activation(), out.data());
  }
}

double loss_and_gradient_ws(const MlpModel& model, const Matrix& xn, std::span<const double> yn,
                            std::span<double> grad, Workspace& ws) {
  const std::size_t batch = xn.rows();
  if (batch == 0 || yn.size() != batch) throw ArgumentError("loss_and_gradient: empty batch or target size mismatch");
  if (grad.size() != model.parameters().size()) throw ArgumentError("loss_and_gradient: gradient size mismatch");
  forward_batch(model, xn, ws);

  const auto& k = kernels::active();
  const auto& w = model.widths();
  const std::size_t L = model.n_layers();
  const double inv_b = 1.0 / static_cast<double>(batch);

  ws.delta = Matrix(batch, 1);
  double loss = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    const double r = ws.acts[L](i, 0) - yn[i];
    loss += r * r;
    ws.delta(i, 0) = 2.0 * r * inv_b;
  }
  loss *= inv_b;

  std::fill(grad.begin(), grad.end(), 0.0);
  const auto params = model.parameters();
  for (std::size_t layer = L; layer-- > 0;) {
    const std::size_t in = w[layer];
    const std::size_t out = w[layer + 1];
    const std::size_t offset = static_cast<std::size_t>(model.weights(layer).data() - params.data());
    double* gw = grad.data() + offset;
    double* gb = gw + in * out;
    k.gemm_tn_acc(ws.delta.data().data(), ws.acts[layer].data().data(), gw, out, in, batch);
    for (std::size_t i = 0; i < batch; ++i) k.axpy(1.0, ws.delta.row(i).data(), gb, out);
    if (layer == 0) break;
    ws.delta_prev = Matrix(batch, in);
    k.gemm_nn_acc(ws.delta.data().data(), model.weights(layer).data(), ws.delta_prev.data().data(), batch, in, out);
    activation_backward(model.activation(), ws.acts[layer].data(), ws.delta_prev.data());
    std::swap(ws.delta, ws.delta_prev);
  }
  return loss;
}

double batch_loss_ws(const MlpModel& model, const Matrix& xn, std::span<const double> yn, Workspace& ws) {
  forward_batch(model, xn, ws);
  const Matrix& out = ws.acts.back();
  double loss = 0.0;
  for (std::size_t i = 0; i < xn.rows(); ++i) {
    const double r = out(i, 0) - yn[i];
    loss += r * r;
  }
  return loss / static_cast<double>(xn.rows());
}

}  // namespace

double MlpModel::forward_normalized(std::span<const double> xn) const {
  check_input(xn.size());
  Matrix m(1, xn.size());
  std::copy(xn.begin(), xn.end(), m.row(0).begin());
  double out = 0.0;
  predict_normalized(m, std::span<double>(&out, 1));
  return out;
}

void MlpModel::predict_normalized(const Matrix& xn, std::span<double> out) const {
  check_input(xn.cols());
  if (out.size() != xn.rows()) throw ArgumentError("predict_normalized: output size mismatch");
  if (xn.rows() == 0) return;
  Workspace ws;
  forward_batch(*this, xn, ws);
  for (std::size_t i = 0; i < xn.rows(); ++i) out[i] = ws.acts.back()(i, 0);
}

double MlpModel::forward(std::span<const double> x) const {
  check_input(x.size());
  Matrix m(1, x.size());
  std::copy(x.begin(), x.end(), m.row(0).begin());
  return predict(m).front();
}

std::vector<double> MlpModel::predict(const Matrix& x) const {
  check_input(x.cols());
  if (!norm_.fitted) throw StateError("MlpModel: normalization has not been fitted");
  Matrix xn(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) xn(r, c) = norm_.inputs[c].normalize(x(r, c));
  std::vector<double> out(x.rows());
  predict_normalized(xn, out);
  for (double& v : out) v = norm_.output.denormalize(v);
  return out;
}

double loss_and_gradient(const MlpModel& model, const Matrix& xn, std::span<const double> yn, std::span<double> grad) {
  Workspace ws;
  return loss_and_gradient_ws(model, xn, yn, grad, ws);
}

double batch_loss(const MlpModel& model, const Matrix& xn, std::span<const double> yn) {
  if (xn.rows() == 0 || yn.size() != xn.rows()) throw ArgumentError("batch_loss: empty batch or target size mismatch");
  Workspace ws;
  return batch_loss_ws(model, xn, yn, ws);
}

// ---------------------------------------------------------------------------
// Data preparation and training

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ArgumentError("learning_rate must be positive");
  if (batch_size == 0) throw ArgumentError("batch_size must be at least 1");
  if (epochs == 0) throw ArgumentError("epochs must be at least 1");
  if (!(lr_factor > 0.0 && lr_factor <= 1.0)) throw ArgumentError("lr_factor must lie in (0,1]");
  if (!(min_learning_rate >= 0.0)) throw ArgumentError("min_learning_rate must be nonnegative");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0 && test_fraction > 0.0 && test_fraction < 1.0 &&
        validation_fraction + test_fraction < 1.0)) {
    throw ArgumentError("validation/test fractions must lie in (0,1) and sum to less than 1");
  }
}

Matrix RegressionData::rows_x(std::span<const std::size_t> idx) const {
  Matrix m(idx.size(), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) std::copy_n(x.row(idx[i]).begin(), x.cols(), m.row(i).begin());
  return m;
}

std::vector<double> RegressionData::rows_y(std::span<const std::size_t> idx) const {
  std::vector<double> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = y[idx[i]];
  return out;
}

RegressionData prepare_regression(const Dataset& data, const std::string& target, const TrainConfig& config) {
  config.validate();
  if (data.rows() == 0) throw ArgumentError("prepare_regression: dataset is empty");
  const std::size_t col = data.column_index(target);
  if (col < data.n_inputs) throw ArgumentError("prepare_regression: '" + target + "' is an input column");
  if (data.input_bounds.size() != data.n_inputs) throw ArgumentError("prepare_regression: dataset lacks input bounds");

  RegressionData rd;
  rd.target = target;
  rd.splits = make_splits(data.rows(), config.validation_fraction, config.test_fraction, config.seed);
  for (const auto& b : data.input_bounds) rd.norm.inputs.push_back(MinMax{b.lo, b.hi});

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i : rd.splits.train) {
    lo = std::min(lo, data.values(i, col));
    hi = std::max(hi, data.values(i, col));
  }
  if (!(hi > lo)) hi = lo + 1.0;
  rd.norm.output = MinMax{lo, hi};
  rd.norm.fitted = true;

  rd.x = Matrix(data.rows(), data.n_inputs);
  rd.y.resize(data.rows());
  for (std::size_t r = 0; r < data.rows(); ++r) {
    for (std::size_t c = 0; c < data.n_inputs; ++c) rd.x(r, c) = rd.norm.inputs[c].normalize(data.values(r, c));
    rd.y[r] = rd.norm.output.normalize(data.values(r, col));
  }
  return rd;
}

Trainer::Trainer(const RegressionData& data, std::vector<std::size_t> widths, const TrainConfig& config)
    : data_(&data),
      config_(config),
      lr_(config.learning_rate),
      plateau_best_(std::numeric_limits<double>::infinity()),
      rng_(Rng::derive(config.seed, "shuffle")) {
  config_.validate();
  if (widths.empty() || widths.front() != data.x.cols()) {
    throw ArgumentError("Trainer: first layer width must equal the number of inputs (" + std::to_string(data.x.cols()) +
                        ")");
  }
  if (data.splits.train.empty() || data.splits.validation.empty()) throw ArgumentError("Trainer: empty split");
  model_ = MlpModel::initialized(std::move(widths), config_.activation, config_.seed);
  model_.normalization() = data.norm;
  model_.set_training_seed(config_.seed);
  adam_m_.assign(model_.parameters().size(), 0.0);
  adam_v_.assign(model_.parameters().size(), 0.0);
  grad_.assign(model_.parameters().size(), 0.0);
  val_x_ = data.rows_x(data.splits.validation);
  val_y_ = data.rows_y(data.splits.validation);
  const Matrix tx = data.rows_x(data.splits.train);
  history_.initial_train = batch_loss(model_, tx, data.rows_y(data.splits.train));
}

double Trainer::validation_loss() const { return batch_loss(model_, val_x_, val_y_); }

double Trainer::run_epoch() {
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-7;
  const auto& k = kernels::active();
  std::vector<std::size_t> order = data_->splits.train;
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng_.below(i)]);

  Workspace ws;
  double loss_sum = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
    const std::size_t end = std::min(order.size(), start + config_.batch_size);
    const std::span<const std::size_t> idx(order.data() + start, end - start);
    const Matrix bx = data_->rows_x(idx);
    const std::vector<double> by = data_->rows_y(idx);
    loss_sum += loss_and_gradient_ws(model_, bx, by, grad_, ws);
    ++batches;
    ++step_;
    const double t = static_cast<double>(step_);
    const kernels::AdamStep s{lr_, beta1, beta2, eps, 1.0 - std::pow(beta1, t), 1.0 - std::pow(beta2, t)};
    k.adam_update(model_.parameters().data(), adam_m_.data(), adam_v_.data(), grad_.data(), grad_.size(), s);
  }
  return loss_sum / static_cast<double>(batches);
}

void Trainer::update_learning_rate(double val_loss) {
  switch (config_.schedule) {
    case LrSchedule::constant:
      break;
    case LrSchedule::plateau:
      if (val_loss < plateau_best_) {
        plateau_best_ = val_loss;
        plateau_wait_ = 0;
      } else if (++plateau_wait_ >= config_.lr_patience) {
        lr_ = std::max(config_.min_learning_rate, lr_ * config_.lr_factor);
        plateau_wait_ = 0;
      }
      break;
    case LrSchedule::cosine: {
      const double progress = std::min(1.0, static_cast<double>(epoch_) / static_cast<double>(config_.epochs));
      lr_ = config_.min_learning_rate +
            0.5 * (config_.learning_rate - config_.min_learning_rate) * (1.0 + std::cos(std::numbers::pi * progress));
      break;
    }
  }
}

void Trainer::train_epochs(std::size_t epochs) {
  for (std::size_t e = 0; e < epochs; ++e) {
    const double train_loss = run_epoch();
    ++epoch_;
    const double val_loss = validation_loss();
    if (!std::isfinite(train_loss) || !std::isfinite(val_loss) || !model_.all_finite()) {
      throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch_) + " (loss " +
                                 format_double(train_loss) + ")",
                             epoch_);
    }
    history_.train.push_back(train_loss);
    history_.validation.push_back(val_loss);
    history_.best_epoch = epoch_;
    update_learning_rate(val_loss);
  }
}

void Trainer::run_to_completion() {
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> best_params(model_.parameters().begin(), model_.parameters().end());
  std::size_t best_epoch = epoch_;
  std::size_t since_best = 0;
  while (epoch_ < config_.epochs) {
    train_epochs(1);
    const double val = history_.validation.back();
    if (val < best) {
      best = val;
      best_epoch = epoch_;
      since_best = 0;
      std::copy(model_.parameters().begin(), model_.parameters().end(), best_params.begin());
    } else if (config_.patience > 0 && ++since_best >= config_.patience) {
      break;
    }
  }
  std::copy(best_params.begin(), best_params.end(), model_.parameters().begin());
  history_.best_epoch = best_epoch;
}

MlpModel Trainer::take_model() { return std::move(model_); }

RegressionMetrics metrics_from_predictions(std::span<const double> predicted, std::span<const double> actual) {
  if (predicted.empty()) throw ArgumentError("evaluate: empty split");
  if (predicted.size() != actual.size()) throw ArgumentError("evaluate: prediction/target size mismatch");
  RegressionMetrics m;
  double se = 0.0;
  double ae = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double r = predicted[i] - actual[i];
    se += r * r;
    ae += std::abs(r);
    m.parity.emplace_back(predicted[i], actual[i]);
  }
  const double n = static_cast<double>(predicted.size());
  m.mse = se / n;
  m.mae = ae / n;
  return m;
}

RegressionMetrics evaluate(const MlpModel& model, const RegressionData& data, std::span<const std::size_t> split) {
  if (split.empty()) throw ArgumentError("evaluate: empty split");
  const Matrix x = data.rows_x(split);
  std::vector<double> pred(split.size());
  model.predict_normalized(x, pred);
  return metrics_from_predictions(pred, data.rows_y(split));
}

FitResult fit(const Dataset& dataset, const std::string& target, std::vector<std::size_t> widths,
              const TrainConfig& config) {
  FitResult r;
  r.data = prepare_regression(dataset, target, config);
  Trainer trainer(r.data, std::move(widths), config);
  trainer.run_to_completion();
  r.history = trainer.history();
  r.model = trainer.take_model();
  r.test = evaluate(r.model, r.data, r.data.splits.test);
  return r;
}

// ---------------------------------------------------------------------------
// Persistence

json to_json(const MlpModel& model, const std::string& target) {
  json weights = json::array();
  json biases = json::array();
  for (std::size_t k = 0; k < model.n_layers(); ++k) {
    const auto w = model.weights(k);
    const auto b = model.biases(k);
    weights.push_back(std::vector<double>(w.begin(), w.end()));
    biases.push_back(std::vector<double>(b.begin(), b.end()));
  }
  json inputs = json::array();
  for (const auto& mm : model.normalization().inputs) inputs.push_back({mm.lo, mm.hi});
  const auto& norm = model.normalization();
  return json{{"format", "certopt.model"},
              {"format_version", 1},
              {"target", target},
              {"layer_widths", model.widths()},
              {"activation", to_string(model.activation())},
              {"weights", weights},
              {"biases", biases},
              {"normalization",
               {{"fitted", norm.fitted}, {"inputs", inputs}, {"output", {norm.output.lo, norm.output.hi}}}},
              {"training_seed", model.training_seed()}};
}

MlpModel model_from_json(const json& j) {
  try {
    if (j.at("format_version").get<int>() != 1) throw IoError("unsupported model format_version");
    MlpModel m(j.at("layer_widths").get<std::vector<std::size_t>>(), parse_activation(j.at("activation")));
    const auto& weights = j.at("weights");
    const auto& biases = j.at("biases");
    if (weights.size() != m.n_layers() || biases.size() != m.n_layers()) throw IoError("model: layer count mismatch");
    for (std::size_t k = 0; k < m.n_layers(); ++k) {
      const auto w = weights[k].get<std::vector<double>>();
      const auto b = biases[k].get<std::vector<double>>();
      if (w.size() != m.weights(k).size() || b.size() != m.biases(k).size()) {
        throw IoError("model: parameter shape mismatch in layer " + std::to_string(k + 1));
      }
      std::copy(w.begin(), w.end(), m.weights(k).begin());
      std::copy(b.begin(), b.end(), m.biases(k).begin());
    }
    const auto& norm = j.at("normalization");
    Normalization& n = m.normalization();
    n.fitted = norm.at("fitted").get<bool>();
    for (const auto& in : norm.at("inputs")) n.inputs.push_back({in.at(0).get<double>(), in.at(1).get<double>()});
    n.output = {norm.at("output").at(0).get<double>(), norm.at("output").at(1).get<double>()};
    if (n.fitted && n.inputs.size() != m.input_width()) throw IoError("model: normalization arity mismatch");
    m.set_training_seed(j.value("training_seed", std::uint64_t{0}));
    if (!m.all_finite()) throw IoError("model: non-finite parameters");
    return m;
  } catch (const json::exception& e) {
    throw IoError(std::string("model: malformed JSON: ") + e.what());
  }
}

void save_model(const MlpModel& model, const std::filesystem::path& path, const std::string& target) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << to_json(model, target).dump() << '\n';
}

MlpModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("cannot parse model '" + path.string() + "': " + e.what());
  }
  return model_from_json(j);
}

}  // namespace certopt::surrogate
