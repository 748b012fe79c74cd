#pragma once

// Minimal dense feedforward network with reverse-mode gradients:
//   x = sigma_L(... sigma_2(sigma_1(a W_1 + b_1) W_2 + b_2) ... W_L + b_L)
// with the final activation fixed to identity, followed by softmax.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace hypflow {

/// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
};

enum class Activation { relu, tanh, identity };

std::string to_string(Activation a);
Activation parse_activation(const std::string& s);

struct Layer {
  Matrix weight;  // fan_in x fan_out
  std::vector<double> bias;
  Activation activation = Activation::identity;
};

struct DenseNet {
  std::vector<Layer> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().weight.rows; }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().weight.cols; }
  /// Throws PreconditionError on incompatible shapes or a non-identity
  /// final activation.
  void validate() const;
};

/// Cached pre-activations and activations of one batch.
struct ForwardTrace {
  Matrix input;
  std::vector<Matrix> pre;   // a W + b per layer
  std::vector<Matrix> post;  // sigma(pre) per layer
};

struct GradientSet {
  std::vector<Matrix> weight;
  std::vector<std::vector<double>> bias;

  static GradientSet zeros_like(const DenseNet& net);
  void add_scaled(const GradientSet& other, double s);
};

/// Xavier-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
/// dims = {in, hidden..., out}; hidden layers use `hidden`, the last identity.
DenseNet init_xavier(const std::vector<std::size_t>& dims, std::uint64_t seed,
                     Activation hidden = Activation::relu);

/// Outputs for a batch (one sample per row). Fills `trace` when given.
Matrix forward(const DenseNet& net, const Matrix& batch, ForwardTrace* trace = nullptr);

/// Exact vector-Jacobian product of the network for the cotangent
/// `output_grad` (same shape as the outputs), summed over the batch. When
/// `input_grad` is given it receives the cotangent of the inputs.
GradientSet backward(const DenseNet& net, const ForwardTrace& trace, const Matrix& output_grad,
                     Matrix* input_grad = nullptr);

/// Max-subtracted softmax of one vector.
std::vector<double> softmax(std::span<const double> x);

/// Row-wise softmax.
Matrix softmax_rows(const Matrix& x);

/// y * (gy - <y, gy>) for y = softmax(x): cotangent of x given that of y.
std::vector<double> softmax_vjp(std::span<const double> y, std::span<const double> gy);

/// Batch mean of ||y - onehot(label)||^2. `grad` (optional) receives the
/// cotangent with respect to y, already divided by the batch size.
double squared_error_loss(const Matrix& probs, std::span<const int> labels,
                          Matrix* grad = nullptr);

/// theta <- theta - lr * (grad + weight_decay * theta); biases skip decay.
void sgd_step(DenseNet& net, const GradientSet& grads, double lr, double weight_decay);

/// lr0 * (1 + cos(pi * epoch / total)) / 2.
double cosine_lr(std::size_t epoch, std::size_t total, double lr0);

struct TensorCheck {
  std::string name;  // "W1", "b1", ...
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<TensorCheck> tensors;
  double max_rel_error = 0.0;
};

/// Compares `analytic` with central differences of `loss` in every
/// parameter. Per tensor error is ||a - fd||_inf / max(||fd||_inf, 1e-12).
GradCheckReport check_gradients(const DenseNet& net,
                                const std::function<double(const DenseNet&)>& loss,
                                const GradientSet& analytic, double step = 1e-5);

/// Same error measure for two flat tensors.
double max_relative_error(std::span<const double> analytic, std::span<const double> reference);

// Checkpoint format ("hypflow-net 1"): layer count, then per layer
// "layer <in> <out> <activation>" followed by the row-major weights and the
// bias as hex floats. Round-trips exactly.
void write_checkpoint(std::ostream& os, const DenseNet& net);
DenseNet read_checkpoint(std::istream& is);

}  // namespace hypflow
