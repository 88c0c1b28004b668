#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace clcs::nnet {

/// Row-major dense matrix of samples.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * cols, cols};
  }
  double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  void append_row(std::span<const double> r);
  Matrix slice_rows(std::size_t begin, std::size_t end) const;
};

/// Per-feature affine standardisation.
struct Normalizer {
  static constexpr double kStdFloor = 1e-12;

  std::vector<double> mean;
  std::vector<double> std;

  static Normalizer fit(const Matrix& m);
  static Normalizer identity(std::size_t n);

  std::size_t size() const { return mean.size(); }
  void normalize(std::span<const double> x, std::span<double> out) const;
  void denormalize(std::span<const double> z, std::span<double> out) const;
  Matrix normalize(const Matrix& m) const;
};

struct SupervisedDataset {
  Matrix inputs;
  Matrix targets;
  Normalizer input_norm;
  Normalizer target_norm;

  std::size_t size() const { return inputs.rows; }
  /// Recomputes both normalisers from this set (std floor applied).
  void fit_normalization();
};

/// Intermediate activations of one forward pass; activations[0] is the input,
/// activations.back() the (identity) output.
struct ForwardCache {
  std::vector<std::vector<double>> activations;
};

/// Dense feedforward network: tanh hidden layers, identity output.
/// Parameters live in one flat vector, per layer: weights (out x in,
/// row-major) followed by biases.
class Mlp {
 public:
  Mlp() = default;
  /// All-zero parameters.
  explicit Mlp(std::vector<std::size_t> sizes);
  /// Uniform +-sqrt(6/(n_in+n_out)) weights, zero biases.
  static Mlp random(std::vector<std::size_t> sizes, std::uint64_t seed);

  const std::vector<std::size_t>& sizes() const { return sizes_; }
  std::size_t layer_count() const { return sizes_.empty() ? 0 : sizes_.size() - 1; }
  std::size_t input_size() const { return sizes_.empty() ? 0 : sizes_.front(); }
  std::size_t output_size() const { return sizes_.empty() ? 0 : sizes_.back(); }
  std::size_t parameter_count() const { return params_.size(); }

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  std::span<double> weights(std::size_t layer);
  std::span<const double> weights(std::size_t layer) const;
  std::span<double> biases(std::size_t layer);
  std::span<const double> biases(std::size_t layer) const;

  std::vector<double> forward(std::span<const double> x) const;
  void forward(std::span<const double> x, ForwardCache& cache) const;

  /// Reverse pass for one sample. Accumulates dL/dparams into `param_grad`
  /// (skipped when empty) and writes dL/dx into `input_grad` (skipped when
  /// empty). `extra_last_hidden` adds a gradient contribution arriving at the
  /// last hidden activation from a head attached outside the network.
  void backward(const ForwardCache& cache, std::span<const double> output_grad,
                std::span<double> param_grad, std::span<double> input_grad,
                std::span<const double> extra_last_hidden = {}) const;

  bool operator==(const Mlp& other) const = default;

 private:
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;  ///< weight offset per layer
  std::vector<double> params_;
};

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Mean squared error over all samples and outputs, with reverse-mode
/// gradient w.r.t. every parameter. Inputs and targets are used as given.
LossAndGrad mse_grad(const Mlp& net, const Matrix& inputs, const Matrix& targets);
double mse(const Mlp& net, const Matrix& inputs, const Matrix& targets);

/// Adaptive-moment optimiser over a flat parameter vector.
class Adam {
 public:
  Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  void step(std::span<double> params, std::span<const double> grad);
  void set_learning_rate(double lr) { lr_ = lr; }
  double learning_rate() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  std::uint64_t t_ = 0;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 200;
  std::size_t patience = 50;  ///< 0 disables early stopping
  std::uint64_t seed = 0;
  /// Learning rate reached at the last epoch by geometric decay; 0 keeps
  /// the rate constant.
  double final_learning_rate = 0.0;

  void validate() const;
  /// Rate for a 1-based epoch.
  double rate_at(std::size_t epoch) const;
};

struct TrainHistory {
  std::vector<double> train_loss;  ///< full-set MSE (normalised) per epoch
  std::vector<double> val_loss;
  std::size_t best_epoch = 0;      ///< 0 = initialisation
};

struct TrainResult {
  Mlp net;
  TrainHistory history;
};

/// Mini-batch Adam regression with seeded shuffling. The network operates in
/// the normalised space of `data` (its stats are applied to `val` too). The
/// best-validation snapshot is returned.
TrainResult train(const Mlp& init, const SupervisedDataset& data,
                  const SupervisedDataset& val, const TrainConfig& cfg);

/// Text weight format, version 1:
///   clcs-mlp 1
///   layers <n0> <n1> ... <nL>
///   then per layer one line of row-major weights and one line of biases,
///   every value in shortest round-trip decimal form.
void write_mlp(std::ostream& os, const Mlp& net);
Mlp read_mlp(std::istream& is);
void save_mlp(const std::string& path, const Mlp& net);
Mlp load_mlp(const std::string& path);

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);

}  // namespace clcs::nnet
