#include "segzsl/mlp.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "segzsl/error.hpp"

namespace segzsl {

double Activation::apply(double x) const {
  switch (kind) {
    case ActivationKind::identity:
      return x;
    case ActivationKind::relu:
      return x > 0.0 ? x : 0.0;
    case ActivationKind::leaky_relu:
      return x > 0.0 ? x : slope * x;
  }
  return x;
}

double Activation::derivative(double x) const {
  switch (kind) {
    case ActivationKind::identity:
      return 1.0;
    case ActivationKind::relu:
      return x > 0.0 ? 1.0 : 0.0;
    case ActivationKind::leaky_relu:
      return x > 0.0 ? 1.0 : slope;
  }
  return 1.0;
}

std::string Activation::to_string() const {
  switch (kind) {
    case ActivationKind::identity:
      return "identity";
    case ActivationKind::relu:
      return "relu";
    case ActivationKind::leaky_relu: {
      char buf[64];
      std::snprintf(buf, sizeof buf, "leaky_relu:%.17g", slope);
      return buf;
    }
  }
  return "identity";
}

Activation Activation::parse(const std::string& text) {
  if (text == "identity") return identity();
  if (text == "relu") return relu();
  const std::string prefix = "leaky_relu:";
  if (text.rfind(prefix, 0) == 0) {
    const double slope = std::strtod(text.c_str() + prefix.size(), nullptr);
    if (!(slope > 0.0)) throw InvalidArgument("activation: LeakyReLU slope must be > 0, got '" + text + "'");
    return leaky_relu(slope);
  }
  throw InvalidArgument("activation: unknown tag '" + text + "'");
}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.bias.rows() != 1 || layer.bias.cols() != layer.out_dim())
      throw DimensionError("Mlp: layer " + std::to_string(l) + " bias does not match weight rows");
    if (l > 0 && layers_[l - 1].out_dim() != layer.in_dim())
      throw DimensionError("Mlp: layer " + std::to_string(l) + " input dim " + std::to_string(layer.in_dim()) +
                           " does not chain with previous output " + std::to_string(layers_[l - 1].out_dim()));
    if (layer.activation.kind == ActivationKind::leaky_relu && !(layer.activation.slope > 0.0))
      throw InvalidArgument("Mlp: LeakyReLU slope must be > 0");
  }
}

Mlp Mlp::create(const std::vector<std::size_t>& dims, Activation hidden, Activation output, Rng& rng) {
  if (dims.size() < 2) throw InvalidArgument("Mlp::create: need at least input and output dims");
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    DenseLayer layer;
    layer.weight = rng.uniform_matrix(dims[l + 1], dims[l], -bound, bound);
    layer.bias = rng.uniform_matrix(1, dims[l + 1], -bound, bound);
    layer.activation = (l + 2 == dims.size()) ? output : hidden;
    layers.push_back(std::move(layer));
  }
  return Mlp(std::move(layers));
}

std::size_t Mlp::input_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
std::size_t Mlp::output_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }

bool Mlp::operator==(const Mlp& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& a = layers_[l];
    const auto& b = other.layers_[l];
    if (!(a.weight == b.weight) || !(a.bias == b.bias) || !(a.activation == b.activation)) return false;
  }
  return true;
}

MlpGrads MlpGrads::zeros_like(const Mlp& model) {
  MlpGrads g;
  for (const auto& layer : model.layers()) {
    g.weight.emplace_back(layer.weight.rows(), layer.weight.cols());
    g.bias.emplace_back(1, layer.out_dim());
  }
  return g;
}

void MlpGrads::add(const MlpGrads& other, double scale) {
  if (weight.empty()) {
    weight = other.weight;
    bias = other.bias;
    for (auto& w : weight) scale_inplace(w, scale);
    for (auto& b : bias) scale_inplace(b, scale);
    return;
  }
  for (std::size_t l = 0; l < weight.size(); ++l) {
    add_inplace(weight[l], other.weight[l], scale);
    add_inplace(bias[l], other.bias[l], scale);
  }
}

MlpTrace mlp_forward(const Mlp& model, const Matrix& batch) {
  if (model.depth() == 0) throw InvalidArgument("mlp_forward: empty model");
  MlpTrace trace;
  Matrix current = batch;
  for (std::size_t l = 0; l < model.depth(); ++l) {
    const auto& layer = model.layers()[l];
    if (current.cols() != layer.in_dim()) {
      throw DimensionError("mlp_forward: layer " + std::to_string(l) + " expects input dim " +
                           std::to_string(layer.in_dim()) + ", got " + std::to_string(current.cols()));
    }
    Matrix pre = matmul_nt(current, layer.weight);
    add_row_broadcast(pre, layer.bias);
    Matrix out = pre;
    for (double& v : out.values()) v = layer.activation.apply(v);
    trace.inputs.push_back(std::move(current));
    trace.preactivations.push_back(std::move(pre));
    current = std::move(out);
  }
  trace.output = std::move(current);
  return trace;
}

Matrix mlp_predict(const Mlp& model, const Matrix& batch) { return mlp_forward(model, batch).output; }

MlpBackward mlp_backward(const Mlp& model, const MlpTrace& trace, const Matrix& upstream) {
  if (upstream.rows() != trace.output.rows() || upstream.cols() != trace.output.cols()) {
    throw DimensionError("mlp_backward: upstream gradient shape does not match network output");
  }
  MlpBackward result;
  result.params.weight.resize(model.depth());
  result.params.bias.resize(model.depth());
  Matrix grad = upstream;
  for (std::size_t l = model.depth(); l-- > 0;) {
    const auto& layer = model.layers()[l];
    const Matrix& pre = trace.preactivations[l];
    if (layer.activation.kind != ActivationKind::identity) {
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= layer.activation.derivative(pre[i]);
    }
    result.params.weight[l] = matmul_tn(grad, trace.inputs[l]);
    result.params.bias[l] = column_sums(grad);
    grad = matmul(grad, layer.weight);
  }
  result.input = std::move(grad);
  return result;
}

void validate_critic_architecture(const Mlp& critic) {
  if (critic.depth() != 2) {
    throw InvalidArgument("critic must have exactly one hidden layer, got " + std::to_string(critic.depth()) +
                          " layers");
  }
  if (!critic.layers()[0].activation.piecewise_linear())
    throw InvalidArgument("critic hidden activation must be piecewise linear");
  if (critic.layers()[1].activation.kind != ActivationKind::identity || critic.output_dim() != 1)
    throw InvalidArgument("critic output layer must be a scalar identity unit");
}

CriticInputGradient critic_input_gradient(const Mlp& critic, const Matrix& x_hat, const Matrix& attrs) {
  validate_critic_architecture(critic);
  const auto& hidden = critic.layers()[0];
  const auto& out = critic.layers()[1];
  const std::size_t dx = x_hat.cols();
  if (dx + attrs.cols() != hidden.in_dim() || x_hat.rows() != attrs.rows())
    throw DimensionError("critic_input_gradient: [x; a] does not match critic input");

  Matrix pre = matmul_nt(hconcat(x_hat, attrs), hidden.weight);
  add_row_broadcast(pre, hidden.bias);

  CriticInputGradient result;
  result.gates = Matrix(pre.rows(), pre.cols());
  Matrix weighted(pre.rows(), pre.cols());  // σ′ ⊙ w2
  for (std::size_t i = 0; i < pre.rows(); ++i) {
    for (std::size_t h = 0; h < pre.cols(); ++h) {
      const double s = hidden.activation.derivative(pre(i, h));
      result.gates(i, h) = s;
      weighted(i, h) = s * out.weight[h];
    }
  }
  result.grad = matmul(weighted, slice_cols(hidden.weight, 0, dx));
  return result;
}

GradientPenalty gradient_penalty(const Mlp& critic, const Matrix& x_hat, const Matrix& attrs) {
  const CriticInputGradient cg = critic_input_gradient(critic, x_hat, attrs);
  const auto& hidden = critic.layers()[0];
  const auto& out = critic.layers()[1];
  const std::size_t batch = x_hat.rows();
  const std::size_t dx = x_hat.cols();
  const std::size_t width = hidden.out_dim();

  GradientPenalty result;
  result.grads = MlpGrads::zeros_like(critic);
  if (batch == 0) return result;

  // dP/dg_i = (2/B)(‖g_i‖ − 1) g_i / ‖g_i‖; zero direction at g_i = 0.
  Matrix upstream(batch, dx);
  for (std::size_t i = 0; i < batch; ++i) {
    const double n = norm2(cg.grad.row(i));
    result.value += (n - 1.0) * (n - 1.0);
    if (n > 0.0) {
      const double coef = 2.0 * (n - 1.0) / (static_cast<double>(batch) * n);
      for (std::size_t k = 0; k < dx; ++k) upstream(i, k) = coef * cg.grad(i, k);
    }
  }
  result.value /= static_cast<double>(batch);

  Matrix weighted(batch, width);
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t h = 0; h < width; ++h) weighted(i, h) = cg.gates(i, h) * out.weight[h];

  const Matrix w1_x = slice_cols(hidden.weight, 0, dx);
  const Matrix dw1_x = matmul_tn(weighted, upstream);  // width × dx
  for (std::size_t h = 0; h < width; ++h)
    for (std::size_t k = 0; k < dx; ++k) result.grads.weight[0](h, k) = dw1_x(h, k);

  const Matrix projected = matmul_nt(upstream, w1_x);  // batch × width
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t h = 0; h < width; ++h) result.grads.weight[1][h] += cg.gates(i, h) * projected(i, h);
  return result;
}

}  // namespace segzsl
