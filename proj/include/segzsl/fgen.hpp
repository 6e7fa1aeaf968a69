#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "segzsl/data.hpp"
#include "segzsl/decomposer.hpp"
#include "segzsl/mi.hpp"
#include "segzsl/mlp.hpp"
#include "segzsl/optim.hpp"

namespace segzsl {

/// x̃ = G([ε; a]); ReLU output keeps features nonnegative.
struct GeneratorModel {
  Mlp net;
  std::size_t noise_dim = 0;
  std::size_t attr_dim = 0;

  std::size_t feature_dim() const { return net.output_dim(); }
};

/// One-hidden-layer LeakyReLU critic D([x; a]) → scalar.
struct CriticModel {
  Mlp net;
  std::size_t feature_dim = 0;
};

struct GanLossWeights {
  double lambda_gp = 10.0;
  double lambda_g_mi = 1.0;
  double lambda_g_sim = 0.025;
};

struct GanTrainConfig {
  GanLossWeights weights;
  std::size_t critic_steps = 5;
  std::size_t noise_dim = 0;  // 0 = attribute dim
  std::size_t hidden = 64;
  std::size_t batch_size = 64;
  std::size_t epochs = 40;
  AdamConfig generator_adam{1e-4, 0.5, 0.999, 1e-8};
  AdamConfig critic_adam{1e-4, 0.5, 0.999, 1e-8};
  std::uint64_t seed = 2;
  double divergence_limit = 1e6;

  void validate() const;
};

GeneratorModel make_generator(std::size_t noise_dim, std::size_t attr_dim, std::size_t feature_dim,
                              std::size_t hidden, Rng& rng);
CriticModel make_critic(std::size_t feature_dim, std::size_t attr_dim, std::size_t hidden, Rng& rng);

Matrix generate(const GeneratorModel& generator, const Matrix& noise, const Matrix& attr_rows);

struct CriticLoss {
  double value = 0.0;        // E[D(x̃)] − E[D(x)] + λ_gp·penalty, minimized by the critic
  double wasserstein = 0.0;  // E[D(x)] − E[D(x̃)]
  double penalty = 0.0;      // E[(‖∇x̂ D‖₂ − 1)²]
  MlpGrads grads;
};

/// x̂_i = α_i·x_i + (1 − α_i)·x̃_i.
CriticLoss critic_loss(const CriticModel& critic, const Matrix& real, const Matrix& fake, const Matrix& attr_rows,
                       std::span<const double> alpha, double lambda_gp);

struct CriticDiagnostics {
  double wasserstein = 0.0;
  double penalty = 0.0;
};

/// One critic update; fresh noise and α are drawn from `rng`.
CriticDiagnostics critic_train_step(CriticModel& critic, Adam& adam, const GeneratorModel& generator,
                                    const Matrix& real, const Matrix& attr_rows, Rng& rng,
                                    const GanTrainConfig& config);

/// Real seen-class semantic features used by the generator's similarity term.
struct SemanticBank {
  Matrix z;
  std::vector<int> labels;
};

SemanticBank build_semantic_bank(const Mlp& semantic_encoder, const Dataset& dataset);

/// Frozen pieces of the trained decomposer that the generator loss reads.
struct FrozenSemantics {
  const Mlp& semantic_encoder;
  const InfoNceScorer& scorer;
  const SemanticBank& bank;
  const AttributeTable& attrs;
  std::span<const int> class_set;
};

struct GeneratorLoss {
  double value = 0.0;
  double wgan = 0.0;  // −E[D(x̃, a)]
  double mi = 0.0;    // infonce_loss of z̃ = E_s(x̃), i.e. −InfoNCE
  double sim = 0.0;   // similarity of z̃ against the real bank
  MlpGrads grads;
};

/// L_G = −E[D(x̃)] + λ_G,MI·L_G,MI + λ_G,sim·L_G,sim for x̃ = G([noise; a_labels]).
GeneratorLoss generator_loss(const GeneratorModel& generator, const CriticModel& critic,
                             const FrozenSemantics& frozen, const Matrix& noise, std::span<const int> labels,
                             const GanLossWeights& weights);

GeneratorLoss generator_train_step(GeneratorModel& generator, Adam& adam, const CriticModel& critic,
                                   const FrozenSemantics& frozen, std::span<const int> labels, Rng& rng,
                                   const GanTrainConfig& config);

struct GanHistoryRow {
  double wasserstein = 0.0;
  double penalty = 0.0;
  double generator_loss = 0.0;
};

struct TrainedGan {
  GeneratorModel generator;
  CriticModel critic;
  std::vector<GanHistoryRow> history;  // per-epoch means
};

/// Alternates `critic_steps` critic updates with one generator update over
/// seen-class training samples. The decomposer stays frozen.
TrainedGan train_wgan(const Dataset& dataset, const DecomposerModel& decomposer, const GanTrainConfig& config);

/// z̃ = E_s(G(ε, a_u)) for n_per_class noise draws per unseen class.
LabeledFeatures synthesize_unseen(const GeneratorModel& generator, const Mlp& semantic_encoder,
                                  const AttributeTable& attrs, std::span<const int> unseen_classes,
                                  std::size_t n_per_class, std::uint64_t seed);

}  // namespace segzsl
