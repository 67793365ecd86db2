#pragma once

// Single-output feedforward regressors: h(x) = W_L d(... d(W_1 x + b_1) ...) + b_L
// with a nonpolynomial hidden activation d and a linear output layer. One model is
// trained per objective and per constraint.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "certopt/dataset.hpp"
#include "certopt/matrix.hpp"
#include "certopt/problems.hpp"
#include "certopt/rng.hpp"

namespace certopt::surrogate {

enum class Activation { tanh, relu };
enum class LrSchedule { constant, plateau, cosine };

std::string to_string(Activation a);
Activation parse_activation(const std::string& text);
std::string to_string(LrSchedule s);
LrSchedule parse_lr_schedule(const std::string& text);

struct ParamCount {
  std::vector<std::size_t> per_layer;
  std::size_t total = 0;
};

// Trainable scalars of a dense network: width[k]*width[k+1] + width[k+1] per layer.
ParamCount param_count(std::span<const std::size_t> widths);

struct MinMax {
  double lo = 0.0;
  double hi = 1.0;
  double normalize(double v) const { return (v - lo) / (hi - lo); }
  double denormalize(double u) const { return lo + u * (hi - lo); }
};

struct Normalization {
  std::vector<MinMax> inputs;
  MinMax output;
  bool fitted = false;

  static Normalization identity(std::size_t n_inputs);
};

class MlpModel {
 public:
  MlpModel() = default;
  // All weights and biases zero. Throws ArgumentError unless widths has >= 2 entries,
  // all positive, and ends in 1.
  MlpModel(std::vector<std::size_t> widths, Activation activation = Activation::tanh);

  // Uniform(-sqrt(3/fan_in), sqrt(3/fan_in)) weights, zero biases.
  static MlpModel initialized(std::vector<std::size_t> widths, Activation activation, std::uint64_t seed);

  const std::vector<std::size_t>& widths() const { return widths_; }
  std::size_t n_layers() const { return widths_.size() - 1; }
  std::size_t input_width() const { return widths_.front(); }
  Activation activation() const { return activation_; }

  // Flat parameter vector: for each layer, its width[k+1] x width[k] weights (row-major) then its biases.
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  std::span<double> weights(std::size_t layer);
  std::span<const double> weights(std::size_t layer) const;
  std::span<double> biases(std::size_t layer);
  std::span<const double> biases(std::size_t layer) const;

  Normalization& normalization() { return norm_; }
  const Normalization& normalization() const { return norm_; }

  std::uint64_t training_seed() const { return training_seed_; }
  void set_training_seed(std::uint64_t s) { training_seed_ = s; }

  // Problem units in and out. Throws StateError if normalization is unfitted.
  double forward(std::span<const double> x) const;
  // One prediction per row of `x` (problem units).
  std::vector<double> predict(const Matrix& x) const;

  // Normalized units in and out; no normalization state needed.
  double forward_normalized(std::span<const double> xn) const;
  void predict_normalized(const Matrix& xn, std::span<double> out) const;

  bool all_finite() const;

 private:
  void check_input(std::size_t n) const;

  std::vector<std::size_t> widths_;
  std::vector<std::size_t> offsets_;  // start of each layer's weights in params_
  std::vector<double> params_;
  Activation activation_ = Activation::tanh;
  Normalization norm_;
  std::uint64_t training_seed_ = 0;
};

// Mean squared error over a batch (normalized units) and its gradient with
// respect to the flat parameter vector. `grad` is overwritten.
double loss_and_gradient(const MlpModel& model, const Matrix& xn, std::span<const double> yn, std::span<double> grad);
double batch_loss(const MlpModel& model, const Matrix& xn, std::span<const double> yn);

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 1000;
  std::uint64_t seed = 0;
  double validation_fraction = 0.15;
  double test_fraction = 0.15;
  // Early stopping on validation loss; 0 disables it. The best-validation weights are
  // restored at the end either way.
  std::size_t patience = 0;
  Activation activation = Activation::tanh;
  // Learning-rate schedule; `learning_rate` is the initial rate.
  LrSchedule schedule = LrSchedule::cosine;
  // plateau: multiply the rate by lr_factor after lr_patience epochs without validation improvement.
  double lr_factor = 0.5;
  std::size_t lr_patience = 10;
  double min_learning_rate = 1e-6;

  void validate() const;
};

// One target column of a dataset, normalized and split.
struct RegressionData {
  std::string target;
  Matrix x;               // normalized inputs, all rows
  std::vector<double> y;  // normalized targets, all rows
  SplitIndices splits;
  Normalization norm;

  Matrix rows_x(std::span<const std::size_t> idx) const;
  std::vector<double> rows_y(std::span<const std::size_t> idx) const;
};

// Inputs are normalized by the dataset's input bounds; the target by its min/max on the training split.
RegressionData prepare_regression(const Dataset& data, const std::string& target, const TrainConfig& config);

struct LossHistory {
  double initial_train = 0.0;
  std::vector<double> train;       // mean mini-batch loss per epoch
  std::vector<double> validation;  // full validation loss after each epoch
  std::size_t best_epoch = 0;      // 1-based epoch whose weights were kept
};

// Resumable Adam training state over one RegressionData, which must outlive the trainer.
class Trainer {
 public:
  Trainer(const RegressionData& data, std::vector<std::size_t> widths, const TrainConfig& config);

  // Trains `epochs` more epochs. Throws TrainingDiverged on a non-finite loss.
  void train_epochs(std::size_t epochs);

  // Runs up to config.epochs with early stopping, restoring the best-validation weights.
  void run_to_completion();

  std::size_t epochs_trained() const { return epoch_; }
  double learning_rate() const { return lr_; }
  double validation_loss() const;
  const LossHistory& history() const { return history_; }
  const MlpModel& model() const { return model_; }
  MlpModel take_model();

 private:
  double run_epoch();
  void update_learning_rate(double val_loss);

  const RegressionData* data_;
  TrainConfig config_;
  MlpModel model_;
  std::vector<double> adam_m_;
  std::vector<double> adam_v_;
  std::vector<double> grad_;
  std::size_t step_ = 0;
  std::size_t epoch_ = 0;
  double lr_;
  double plateau_best_;
  std::size_t plateau_wait_ = 0;
  Rng rng_;
  Matrix val_x_;
  std::vector<double> val_y_;
  LossHistory history_;
};

struct RegressionMetrics {
  double mse = 0.0;
  double mae = 0.0;
  // (predicted, actual) in normalized units, in split order.
  std::vector<std::pair<double, double>> parity;
};

RegressionMetrics evaluate(const MlpModel& model, const RegressionData& data, std::span<const std::size_t> split);
RegressionMetrics metrics_from_predictions(std::span<const double> predicted, std::span<const double> actual);

struct FitResult {
  MlpModel model;
  LossHistory history;
  RegressionData data;
  RegressionMetrics test;
};

FitResult fit(const Dataset& dataset, const std::string& target, std::vector<std::size_t> widths,
              const TrainConfig& config);

nlohmann::json to_json(const MlpModel& model, const std::string& target = {});
MlpModel model_from_json(const nlohmann::json& j);
void save_model(const MlpModel& model, const std::filesystem::path& path, const std::string& target = {});
MlpModel load_model(const std::filesystem::path& path);

}  // namespace certopt::surrogate
