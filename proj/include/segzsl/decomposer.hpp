#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "segzsl/data.hpp"
#include "segzsl/matrix.hpp"
#include "segzsl/mi.hpp"
#include "segzsl/mlp.hpp"
#include "segzsl/optim.hpp"

namespace segzsl {

/// Image-feature decomposition network: semantic encoder E_s, optional
/// residual encoder E_r, decoder over [z_s; z_r], plus the InfoNCE scorer and
/// the CLUB variational encoder attached to the latents.
struct DecomposerModel {
  Mlp semantic_encoder;
  std::optional<Mlp> residual_encoder;
  Mlp decoder;
  InfoNceScorer scorer;
  ClubVariationalEncoder venc;

  std::size_t feature_dim() const { return semantic_encoder.input_dim(); }
  std::size_t semantic_dim() const { return semantic_encoder.output_dim(); }
  std::size_t residual_dim() const { return residual_encoder ? residual_encoder->output_dim() : 0; }
  bool has_residual() const { return residual_encoder.has_value(); }
};

struct DecompLossWeights {
  double lambda_s = 20.0;
  double lambda_r = 50.0;
  double lambda_sim = 1.0;
};

struct DecompTrainConfig {
  DecompLossWeights weights;
  std::size_t semantic_dim = 64;
  std::size_t residual_dim = 64;  // 0 drops the residual encoder
  std::size_t hidden = 64;
  std::size_t venc_hidden = 64;
  std::size_t batch_size = 64;
  std::size_t samples_per_class = 4;  // per class within a stratified batch
  std::size_t epochs = 50;
  std::size_t venc_steps = 5;
  AdamConfig adam{1e-4, 0.9, 0.999, 1e-8};
  AdamConfig venc_adam{1e-4, 0.9, 0.999, 1e-8};
  std::uint64_t seed = 1;

  void validate() const;
};

DecomposerModel make_decomposer(std::size_t feature_dim, std::size_t attr_dim, const DecompTrainConfig& config,
                                Rng& rng);

struct Latents {
  Matrix semantic;
  Matrix residual;  // B × 0 without a residual encoder
};

Latents decompose(const DecomposerModel& model, const Matrix& x);

/// Scalar loss with its gradient with respect to one input matrix.
struct LossWithGrad {
  double value = 0.0;
  Matrix grad;
};

/// (1/N) Σ ‖x_i − x̂_i‖₂, gradient with respect to x̂ (zero where x̂_i = x_i).
LossWithGrad reconstruction_loss(const Matrix& x, const Matrix& x_hat);

/// Within-batch supervised similarity loss over cosine similarities:
///   −(1/N) Σ_i log[ Σ_{j: y_j = y_i} e^{sim(z_i, z_j)} / Σ_j e^{sim(z_i, z_j)} ]
/// with j = i included in both sums. A zero row has similarity 0 to
/// everything and receives zero gradient.
LossWithGrad similarity_loss(const Matrix& z, std::span<const int> labels);

/// Same form against a fixed bank: numerator over bank rows of the sample's
/// class, denominator over the whole bank. Gradient with respect to z only.
LossWithGrad bank_similarity_loss(const Matrix& z, std::span<const int> labels, const Matrix& bank,
                                  std::span<const int> bank_labels);

struct DecomposerGrads {
  MlpGrads semantic;
  MlpGrads residual;
  MlpGrads decoder;
  Matrix scorer;
};

struct DecompLossParts {
  double recon = 0.0;
  double mi = 0.0;
  double sim = 0.0;
  double total = 0.0;
};

struct DecompLoss {
  DecompLossParts parts;
  DecomposerGrads grads;
};

/// Reconstruction term alone, with gradients for the encoders and decoder.
DecompLoss reconstruction_objective(const DecomposerModel& model, const Matrix& x);

/// λ_s·infonce_loss(z_s) + λ_r·club_estimate(z_r); gradients reach E_s, E_r
/// and the scorer. The variational encoder is held fixed.
DecompLoss decomposition_mi_loss(const DecomposerModel& model, const Matrix& x, std::span<const int> labels,
                                 const AttributeTable& attrs, std::span<const int> class_set,
                                 const DecompLossWeights& weights);

/// L_recon + L_MI + λ_sim·L_sim over one batch.
DecompLoss decomposer_loss(const DecomposerModel& model, const Matrix& x, std::span<const int> labels,
                           const AttributeTable& attrs, std::span<const int> class_set,
                           const DecompLossWeights& weights);

/// Trainable parameters excluding the variational encoder.
std::vector<Param> decomposer_params(DecomposerModel& model, const DecomposerGrads& grads);

/// Batches of positions into `labels` such that each batch holds several
/// classes with `samples_per_class` members each (fewer if a class is smaller).
std::vector<std::vector<std::size_t>> class_stratified_batches(std::span<const int> labels, std::size_t batch_size,
                                                               std::size_t samples_per_class, Rng& rng);

struct TrainedDecomposer {
  DecomposerModel model;
  std::vector<DecompLossParts> history;  // one row per epoch, batch means
};

/// Minibatch training over the seen-class training samples. Throws
/// TrainingError on a non-finite loss.
TrainedDecomposer train_decomposer(const Dataset& dataset, const DecompTrainConfig& config);

}  // namespace segzsl
