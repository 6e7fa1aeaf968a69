#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "segzsl/matrix.hpp"
#include "segzsl/rng.hpp"

namespace segzsl {

inline constexpr double kLeakySlope = 0.02;

enum class ActivationKind { identity, relu, leaky_relu };

struct Activation {
  ActivationKind kind = ActivationKind::identity;
  double slope = kLeakySlope;  // negative-side slope, leaky_relu only

  static Activation identity() { return {ActivationKind::identity, 0.0}; }
  static Activation relu() { return {ActivationKind::relu, 0.0}; }
  static Activation leaky_relu(double slope = kLeakySlope) { return {ActivationKind::leaky_relu, slope}; }

  double apply(double x) const;
  /// Derivative; at the kink x == 0 this is the negative-side value
  /// (slope for LeakyReLU, 0 for ReLU).
  double derivative(double x) const;
  bool piecewise_linear() const { return true; }

  std::string to_string() const;
  static Activation parse(const std::string& text);

  bool operator==(const Activation&) const = default;
};

struct DenseLayer {
  Matrix weight;  // out × in
  Matrix bias;    // 1 × out
  Activation activation;

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }
};

/// Fully connected network; plain value type.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<DenseLayer> layers);

  /// dims = {in, hidden..., out}. Weights and biases ~ U(-1/sqrt(in), 1/sqrt(in)).
  static Mlp create(const std::vector<std::size_t>& dims, Activation hidden, Activation output, Rng& rng);

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t depth() const { return layers_.size(); }

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  bool operator==(const Mlp& other) const;

 private:
  std::vector<DenseLayer> layers_;
};

/// Everything a backward pass needs: per-layer inputs and pre-activations.
struct MlpTrace {
  std::vector<Matrix> inputs;
  std::vector<Matrix> preactivations;
  Matrix output;
};

struct MlpGrads {
  std::vector<Matrix> weight;
  std::vector<Matrix> bias;

  static MlpGrads zeros_like(const Mlp& model);
  void add(const MlpGrads& other, double scale = 1.0);
};

struct MlpBackward {
  MlpGrads params;
  Matrix input;
};

MlpTrace mlp_forward(const Mlp& model, const Matrix& batch);
/// Forward pass without retaining intermediates.
Matrix mlp_predict(const Mlp& model, const Matrix& batch);
MlpBackward mlp_backward(const Mlp& model, const MlpTrace& trace, const Matrix& upstream);

/// Per-sample gradient of a one-hidden-layer scalar critic
/// D(x, a) = w2ᵀ·σ(W1·[x; a] + b1) + b2 with respect to x.
struct CriticInputGradient {
  Matrix grad;   // B × dim(x)
  Matrix gates;  // B × hidden, σ′ at each hidden pre-activation
};

/// Throws InvalidArgument unless the critic has exactly one hidden layer
/// with piecewise-linear activation and an identity scalar output.
void validate_critic_architecture(const Mlp& critic);

CriticInputGradient critic_input_gradient(const Mlp& critic, const Matrix& x_hat, const Matrix& attrs);

/// mean_i (‖∇x D(x̂_i, a_i)‖₂ − 1)² and its parameter gradient, holding σ′
/// locally constant (second derivative of a piecewise-linear σ is zero a.e.).
struct GradientPenalty {
  double value = 0.0;
  MlpGrads grads;
};

GradientPenalty gradient_penalty(const Mlp& critic, const Matrix& x_hat, const Matrix& attrs);

}  // namespace segzsl
