#include "hypflow/nn.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "hypflow/error.hpp"
#include "hypflow/kernels.hpp"
#include "hypflow/random.hpp"
#include "text_io.hpp"

namespace hypflow {
namespace {

double activate(Activation a, double v) {
  switch (a) {
    case Activation::relu: return v > 0.0 ? v : 0.0;
    case Activation::tanh: return std::tanh(v);
    case Activation::identity: return v;
  }
  return v;
}

/// d sigma / d pre, expressed through pre and post.
double activation_slope(Activation a, double pre, double post) {
  switch (a) {
    case Activation::relu: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: return 1.0 - post * post;
    case Activation::identity: return 1.0;
  }
  return 1.0;
}

double inf_norm(std::span<const double> x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "identity";
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "identity") return Activation::identity;
  throw PreconditionError("unknown activation '" + s + "'");
}

void DenseNet::validate() const {
  if (layers.empty()) throw PreconditionError("network has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Layer& L = layers[l];
    if (L.weight.rows == 0 || L.weight.cols == 0 ||
        L.weight.data.size() != L.weight.rows * L.weight.cols)
      throw PreconditionError("layer " + std::to_string(l) + " has a malformed weight matrix");
    if (L.bias.size() != L.weight.cols)
      throw PreconditionError("layer " + std::to_string(l) + " bias length mismatch");
    if (l > 0 && layers[l - 1].weight.cols != L.weight.rows)
      throw PreconditionError("layer " + std::to_string(l) + " input width mismatch");
  }
  if (layers.back().activation != Activation::identity)
    throw PreconditionError("final activation must be identity");
}

GradientSet GradientSet::zeros_like(const DenseNet& net) {
  GradientSet g;
  for (const Layer& L : net.layers) {
    g.weight.emplace_back(L.weight.rows, L.weight.cols);
    g.bias.emplace_back(L.bias.size(), 0.0);
  }
  return g;
}

void GradientSet::add_scaled(const GradientSet& other, double s) {
  const auto& k = kernels::active();
  for (std::size_t l = 0; l < weight.size(); ++l) {
    k.axpy(s, other.weight[l].data.data(), weight[l].data.data(), weight[l].data.size());
    k.axpy(s, other.bias[l].data(), bias[l].data(), bias[l].size());
  }
}

DenseNet init_xavier(const std::vector<std::size_t>& dims, std::uint64_t seed,
                     Activation hidden) {
  if (dims.size() < 2) throw PreconditionError("need at least input and output widths");
  Rng rng(seed);
  DenseNet net;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t in = dims[l], out = dims[l + 1];
    if (in == 0 || out == 0) throw PreconditionError("layer widths must be positive");
    Layer L;
    L.weight = Matrix(in, out);
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    for (double& w : L.weight.data) w = rng.uniform(-a, a);
    L.bias.assign(out, 0.0);
    L.activation = l + 2 == dims.size() ? Activation::identity : hidden;
    net.layers.push_back(std::move(L));
  }
  return net;
}

Matrix forward(const DenseNet& net, const Matrix& batch, ForwardTrace* trace) {
  net.validate();
  if (batch.cols != net.input_dim())
    throw PreconditionError("batch width " + std::to_string(batch.cols) +
                            " does not match network input " + std::to_string(net.input_dim()));
  const auto& k = kernels::active();
  if (trace) {
    trace->input = batch;
    trace->pre.clear();
    trace->post.clear();
  }
  Matrix cur = batch;
  for (const Layer& L : net.layers) {
    Matrix pre(batch.rows, L.weight.cols);
    k.gemm_nn(batch.rows, L.weight.cols, L.weight.rows, cur.data.data(), L.weight.data.data(), 0.0,
              pre.data.data());
    for (std::size_t i = 0; i < pre.rows; ++i)
      for (std::size_t j = 0; j < pre.cols; ++j) pre(i, j) += L.bias[j];
    Matrix post = pre;
    for (double& v : post.data) v = activate(L.activation, v);
    if (trace) trace->pre.push_back(pre);
    cur = std::move(post);
    if (trace) trace->post.push_back(cur);
  }
  return cur;
}

GradientSet backward(const DenseNet& net, const ForwardTrace& trace, const Matrix& output_grad,
                     Matrix* input_grad) {
  const std::size_t L = net.layers.size();
  if (trace.pre.size() != L || trace.post.size() != L)
    throw PreconditionError("trace does not match network depth");
  const std::size_t m = trace.input.rows;
  if (output_grad.rows != m || output_grad.cols != net.output_dim())
    throw PreconditionError("output cotangent shape mismatch");
  const auto& k = kernels::active();
  GradientSet g = GradientSet::zeros_like(net);
  Matrix delta = output_grad;
  for (std::size_t l = L; l-- > 0;) {
    const Layer& layer = net.layers[l];
    const Matrix& pre = trace.pre[l];
    const Matrix& post = trace.post[l];
    for (std::size_t idx = 0; idx < delta.data.size(); ++idx)
      delta.data[idx] *= activation_slope(layer.activation, pre.data[idx], post.data[idx]);
    const Matrix& in = l == 0 ? trace.input : trace.post[l - 1];
    // dW = in^T delta, db = column sums of delta.
    k.gemm_tn(layer.weight.rows, layer.weight.cols, m, in.data.data(), delta.data.data(), 0.0,
              g.weight[l].data.data());
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < delta.cols; ++j) g.bias[l][j] += delta(i, j);
    if (l == 0 && !input_grad) break;
    Matrix prev(m, layer.weight.rows);
    k.gemm_nt(m, layer.weight.rows, layer.weight.cols, delta.data.data(),
              layer.weight.data.data(), 0.0, prev.data.data());
    delta = std::move(prev);
  }
  if (input_grad) *input_grad = std::move(delta);
  return g;
}

std::vector<double> softmax(std::span<const double> x) {
  std::vector<double> y(x.size());
  if (x.empty()) return y;
  const double mx = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = std::exp(x[i] - mx);
    s += y[i];
  }
  for (double& v : y) v /= s;
  return y;
}

Matrix softmax_rows(const Matrix& x) {
  Matrix y(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const std::vector<double> r = softmax(x.row(i));
    std::copy(r.begin(), r.end(), y.row(i).begin());
  }
  return y;
}

std::vector<double> softmax_vjp(std::span<const double> y, std::span<const double> gy) {
  double inner = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) inner += y[i] * gy[i];
  std::vector<double> gx(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) gx[i] = y[i] * (gy[i] - inner);
  return gx;
}

double squared_error_loss(const Matrix& probs, std::span<const int> labels, Matrix* grad) {
  if (labels.size() != probs.rows) throw PreconditionError("label count mismatch");
  if (probs.rows == 0) throw PreconditionError("empty batch");
  const double inv_m = 1.0 / static_cast<double>(probs.rows);
  if (grad) *grad = Matrix(probs.rows, probs.cols);
  double total = 0.0;
  for (std::size_t i = 0; i < probs.rows; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= probs.cols)
      throw PreconditionError("label " + std::to_string(y) + " out of range");
    for (std::size_t j = 0; j < probs.cols; ++j) {
      const double d = probs(i, j) - (static_cast<std::size_t>(y) == j ? 1.0 : 0.0);
      total += d * d;
      if (grad) (*grad)(i, j) = 2.0 * d * inv_m;
    }
  }
  return total * inv_m;
}

void sgd_step(DenseNet& net, const GradientSet& grads, double lr, double weight_decay) {
  if (grads.weight.size() != net.layers.size()) throw PreconditionError("gradient depth mismatch");
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    Layer& L = net.layers[l];
    for (std::size_t i = 0; i < L.weight.data.size(); ++i)
      L.weight.data[i] -= lr * (grads.weight[l].data[i] + weight_decay * L.weight.data[i]);
    for (std::size_t j = 0; j < L.bias.size(); ++j) L.bias[j] -= lr * grads.bias[l][j];
  }
}

double cosine_lr(std::size_t epoch, std::size_t total, double lr0) {
  if (total == 0) return lr0;
  const double frac = static_cast<double>(epoch) / static_cast<double>(total);
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

double max_relative_error(std::span<const double> analytic, std::span<const double> reference) {
  if (analytic.size() != reference.size()) throw PreconditionError("tensor size mismatch");
  double diff = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i)
    diff = std::max(diff, std::abs(analytic[i] - reference[i]));
  return diff / std::max(inf_norm(reference), 1e-12);
}

GradCheckReport check_gradients(const DenseNet& net,
                                const std::function<double(const DenseNet&)>& loss,
                                const GradientSet& analytic, double step) {
  GradCheckReport rep;
  DenseNet probe = net;
  auto central = [&](double& param) {
    const double saved = param;
    param = saved + step;
    const double up = loss(probe);
    param = saved - step;
    const double dn = loss(probe);
    param = saved;
    return (up - dn) / (2.0 * step);
  };
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    Layer& L = probe.layers[l];
    std::vector<double> fd(L.weight.data.size());
    for (std::size_t i = 0; i < fd.size(); ++i) fd[i] = central(L.weight.data[i]);
    rep.tensors.push_back({"W" + std::to_string(l + 1),
                           max_relative_error(analytic.weight[l].data, fd)});
    std::vector<double> fb(L.bias.size());
    for (std::size_t j = 0; j < fb.size(); ++j) fb[j] = central(L.bias[j]);
    rep.tensors.push_back({"b" + std::to_string(l + 1), max_relative_error(analytic.bias[l], fb)});
  }
  for (const TensorCheck& t : rep.tensors) rep.max_rel_error = std::max(rep.max_rel_error, t.max_rel_error);
  return rep;
}

void write_checkpoint(std::ostream& os, const DenseNet& net) {
  net.validate();
  os << "hypflow-net 1\nlayers " << net.layers.size() << '\n';
  for (const Layer& L : net.layers) {
    os << "layer " << L.weight.rows << ' ' << L.weight.cols << ' ' << to_string(L.activation)
       << '\n';
    for (std::size_t i = 0; i < L.weight.rows; ++i) {
      for (std::size_t j = 0; j < L.weight.cols; ++j)
        os << (j ? " " : "") << detail::hex(L.weight(i, j));
      os << '\n';
    }
    for (std::size_t j = 0; j < L.bias.size(); ++j) os << (j ? " " : "") << detail::hex(L.bias[j]);
    os << '\n';
  }
}

DenseNet read_checkpoint(std::istream& is) {
  std::size_t line = 0;
  std::string text;
  auto next_line = [&]() -> std::istringstream {
    if (!std::getline(is, text)) throw ParseError("unexpected end of checkpoint", line);
    ++line;
    return std::istringstream(text);
  };
  if (next_line().str() != "hypflow-net 1") throw ParseError("unsupported checkpoint header", line);
  std::size_t count = 0;
  {
    auto ls = next_line();
    std::string key;
    if (!(ls >> key >> count) || key != "layers") throw ParseError("expected 'layers <n>'", line);
  }
  auto read_values = [&](std::span<double> dst) {
    auto ls = next_line();
    for (double& v : dst) {
      std::string tok;
      if (!(ls >> tok)) throw ParseError("too few values", line);
      v = detail::parse_double(tok, line);
    }
    std::string extra;
    if (ls >> extra) throw ParseError("too many values", line);
  };
  DenseNet net;
  for (std::size_t l = 0; l < count; ++l) {
    auto ls = next_line();
    std::string key, act;
    std::size_t in = 0, out = 0;
    if (!(ls >> key >> in >> out >> act) || key != "layer")
      throw ParseError("expected 'layer <in> <out> <activation>'", line);
    Layer L;
    L.weight = Matrix(in, out);
    try {
      L.activation = parse_activation(act);
    } catch (const PreconditionError&) {
      throw ParseError("unknown activation '" + act + "'", line);
    }
    for (std::size_t i = 0; i < in; ++i) read_values(L.weight.row(i));
    L.bias.assign(out, 0.0);
    read_values(L.bias);
    net.layers.push_back(std::move(L));
  }
  try {
    net.validate();
  } catch (const PreconditionError& e) {
    throw ParseError(e.what(), line);
  }
  return net;
}

}  // namespace hypflow
