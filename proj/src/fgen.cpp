#include "segzsl/fgen.hpp"

#include <cmath>
#include <string>

#include "segzsl/error.hpp"

namespace segzsl {

namespace {

Matrix critic_scores(const CriticModel& critic, const Matrix& x, const Matrix& attr_rows, MlpTrace* trace_out) {
  MlpTrace trace = mlp_forward(critic.net, hconcat(x, attr_rows));
  Matrix out = trace.output;
  if (trace_out) *trace_out = std::move(trace);
  return out;
}

double mean_of(const Matrix& m) {
  double s = 0.0;
  for (double v : m.values()) s += v;
  return m.size() ? s / static_cast<double>(m.size()) : 0.0;
}

std::vector<std::size_t> sample_indices(std::size_t pool, std::size_t count, Rng& rng) {
  std::vector<std::size_t> out(count);
  for (auto& i : out) i = rng.below(pool);
  return out;
}

}  // namespace

void GanTrainConfig::validate() const {
  if (weights.lambda_gp < 0.0) throw InvalidArgument("gan: lambda_gp must be >= 0");
  if (weights.lambda_g_mi < 0.0 || weights.lambda_g_sim < 0.0)
    throw InvalidArgument("gan: generator loss weights must be >= 0");
  if (critic_steps < 1) throw InvalidArgument("gan: critic_steps must be >= 1");
  if (hidden < 1 || batch_size < 1) throw InvalidArgument("gan: hidden and batch_size must be >= 1");
}

GeneratorModel make_generator(std::size_t noise_dim, std::size_t attr_dim, std::size_t feature_dim,
                              std::size_t hidden, Rng& rng) {
  return {Mlp::create({noise_dim + attr_dim, hidden, feature_dim}, Activation::leaky_relu(), Activation::relu(), rng),
          noise_dim, attr_dim};
}

CriticModel make_critic(std::size_t feature_dim, std::size_t attr_dim, std::size_t hidden, Rng& rng) {
  CriticModel critic{
      Mlp::create({feature_dim + attr_dim, hidden, 1}, Activation::leaky_relu(), Activation::identity(), rng),
      feature_dim};
  validate_critic_architecture(critic.net);
  return critic;
}

Matrix generate(const GeneratorModel& generator, const Matrix& noise, const Matrix& attr_rows) {
  if (noise.cols() != generator.noise_dim || attr_rows.cols() != generator.attr_dim)
    throw DimensionError("generate: noise dim " + std::to_string(noise.cols()) + " / attribute dim " +
                         std::to_string(attr_rows.cols()) + " do not match the generator");
  return mlp_predict(generator.net, hconcat(noise, attr_rows));
}

CriticLoss critic_loss(const CriticModel& critic, const Matrix& real, const Matrix& fake, const Matrix& attr_rows,
                       std::span<const double> alpha, double lambda_gp) {
  if (real.rows() != fake.rows() || real.cols() != fake.cols() || real.rows() != attr_rows.rows() ||
      alpha.size() != real.rows())
    throw DimensionError("critic_loss: real, fake, attribute and alpha batches must align");
  if (real.rows() == 0) throw InvalidArgument("critic_loss: empty batch");
  const double inv_b = 1.0 / static_cast<double>(real.rows());

  MlpTrace real_trace;
  MlpTrace fake_trace;
  const double d_real = mean_of(critic_scores(critic, real, attr_rows, &real_trace));
  const double d_fake = mean_of(critic_scores(critic, fake, attr_rows, &fake_trace));
  if (!std::isfinite(d_real) || !std::isfinite(d_fake)) throw NonFiniteError("critic_loss: non-finite critic output");

  CriticLoss out;
  out.wasserstein = d_real - d_fake;
  out.grads = mlp_backward(critic.net, fake_trace, Matrix(real.rows(), 1, inv_b)).params;
  out.grads.add(mlp_backward(critic.net, real_trace, Matrix(real.rows(), 1, -inv_b)).params);

  Matrix x_hat(real.rows(), real.cols());
  for (std::size_t i = 0; i < real.rows(); ++i)
    for (std::size_t k = 0; k < real.cols(); ++k) x_hat(i, k) = alpha[i] * real(i, k) + (1.0 - alpha[i]) * fake(i, k);
  if (lambda_gp != 0.0) {
    const GradientPenalty gp = gradient_penalty(critic.net, x_hat, attr_rows);
    out.penalty = gp.value;
    out.grads.add(gp.grads, lambda_gp);
  } else {
    out.penalty = gradient_penalty(critic.net, x_hat, attr_rows).value;
  }
  out.value = d_fake - d_real + lambda_gp * out.penalty;
  return out;
}

CriticDiagnostics critic_train_step(CriticModel& critic, Adam& adam, const GeneratorModel& generator,
                                    const Matrix& real, const Matrix& attr_rows, Rng& rng,
                                    const GanTrainConfig& config) {
  const Matrix noise = rng.normal_matrix(real.rows(), generator.noise_dim);
  const Matrix fake = generate(generator, noise, attr_rows);
  std::vector<double> alpha(real.rows());
  for (double& a : alpha) a = rng.uniform();
  const CriticLoss loss = critic_loss(critic, real, fake, attr_rows, alpha, config.weights.lambda_gp);
  std::vector<Param> params;
  append_params(params, "critic", critic.net, loss.grads);
  adam.step(params);
  return {loss.wasserstein, loss.penalty};
}

SemanticBank build_semantic_bank(const Mlp& semantic_encoder, const Dataset& dataset) {
  return {mlp_predict(semantic_encoder, dataset.features_at(dataset.split.train_idx)),
          dataset.labels_at(dataset.split.train_idx)};
}

GeneratorLoss generator_loss(const GeneratorModel& generator, const CriticModel& critic,
                             const FrozenSemantics& frozen, const Matrix& noise, std::span<const int> labels,
                             const GanLossWeights& weights) {
  if (noise.rows() != labels.size()) throw DimensionError("generator_loss: noise rows must match label count");
  if (labels.empty()) throw InvalidArgument("generator_loss: empty batch");
  const Matrix attr_rows = frozen.attrs.gather(labels);
  const MlpTrace gen = mlp_forward(generator.net, hconcat(noise, attr_rows));
  const Matrix& fake = gen.output;
  const std::size_t batch = labels.size();
  const std::size_t fdim = generator.feature_dim();

  GeneratorLoss out;
  MlpTrace critic_trace;
  out.wgan = -mean_of(critic_scores(critic, fake, attr_rows, &critic_trace));
  if (!std::isfinite(out.wgan)) throw NonFiniteError("generator_loss: non-finite critic output");
  const Matrix critic_input_grad =
      mlp_backward(critic.net, critic_trace, Matrix(batch, 1, -1.0 / static_cast<double>(batch))).input;
  Matrix d_fake = slice_cols(critic_input_grad, 0, fdim);

  if (weights.lambda_g_mi != 0.0 || weights.lambda_g_sim != 0.0) {
    const MlpTrace sem = mlp_forward(frozen.semantic_encoder, fake);
    Matrix d_z(batch, sem.output.cols());
    if (weights.lambda_g_mi != 0.0) {
      const InfoNceResult nce = infonce_loss(frozen.scorer, sem.output, labels, frozen.attrs, frozen.class_set);
      out.mi = nce.loss;
      add_inplace(d_z, nce.grad_z, weights.lambda_g_mi);
    }
    if (weights.lambda_g_sim != 0.0) {
      for (int y : labels) {
        bool found = false;
        for (int b : frozen.bank.labels) found = found || b == y;
        if (!found) throw InvalidArgument("generator_loss: semantic bank has no sample of class " + std::to_string(y));
      }
      const LossWithGrad sim = bank_similarity_loss(sem.output, labels, frozen.bank.z, frozen.bank.labels);
      out.sim = sim.value;
      add_inplace(d_z, sim.grad, weights.lambda_g_sim);
    }
    add_inplace(d_fake, mlp_backward(frozen.semantic_encoder, sem, d_z).input);
  }

  out.value = out.wgan + weights.lambda_g_mi * out.mi + weights.lambda_g_sim * out.sim;
  out.grads = mlp_backward(generator.net, gen, d_fake).params;
  return out;
}

GeneratorLoss generator_train_step(GeneratorModel& generator, Adam& adam, const CriticModel& critic,
                                   const FrozenSemantics& frozen, std::span<const int> labels, Rng& rng,
                                   const GanTrainConfig& config) {
  const Matrix noise = rng.normal_matrix(labels.size(), generator.noise_dim);
  GeneratorLoss loss = generator_loss(generator, critic, frozen, noise, labels, config.weights);
  std::vector<Param> params;
  append_params(params, "generator", generator.net, loss.grads);
  adam.step(params);
  return loss;
}

TrainedGan train_wgan(const Dataset& dataset, const DecomposerModel& decomposer, const GanTrainConfig& config) {
  config.validate();
  if (dataset.split.train_idx.empty()) throw InvalidArgument("train_wgan: no training samples");
  Rng rng(config.seed);
  const std::size_t attr_dim = dataset.attrs.dim();
  const std::size_t noise_dim = config.noise_dim == 0 ? attr_dim : config.noise_dim;
  TrainedGan out{make_generator(noise_dim, attr_dim, dataset.feature_dim(), config.hidden, rng),
                 make_critic(dataset.feature_dim(), attr_dim, config.hidden, rng),
                 {}};

  const Matrix train_x = dataset.features_at(dataset.split.train_idx);
  const std::vector<int> train_y = dataset.labels_at(dataset.split.train_idx);
  const SemanticBank bank = build_semantic_bank(decomposer.semantic_encoder, dataset);
  const FrozenSemantics frozen{decomposer.semantic_encoder, decomposer.scorer, bank, dataset.attrs,
                               dataset.split.seen};

  Adam critic_adam(config.critic_adam);
  Adam generator_adam(config.generator_adam);
  const std::size_t iterations = (train_y.size() + config.batch_size - 1) / config.batch_size;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    GanHistoryRow row;
    std::size_t critic_updates = 0;
    for (std::size_t it = 0; it < iterations; ++it) try {
      for (std::size_t s = 0; s < config.critic_steps; ++s) {
        const auto idx = sample_indices(train_y.size(), config.batch_size, rng);
        std::vector<int> y;
        for (std::size_t i : idx) y.push_back(train_y[i]);
        const CriticDiagnostics d =
            critic_train_step(out.critic, critic_adam, out.generator, gather_rows(train_x, idx),
                              dataset.attrs.gather(y), rng, config);
        if (!std::isfinite(d.wasserstein) || std::abs(d.wasserstein) > config.divergence_limit)
          throw TrainingError("train_wgan: diverged at epoch " + std::to_string(epoch) +
                              " (Wasserstein estimate " + std::to_string(d.wasserstein) + ")");
        row.wasserstein += d.wasserstein;
        row.penalty += d.penalty;
        ++critic_updates;
      }
      const auto idx = sample_indices(train_y.size(), config.batch_size, rng);
      std::vector<int> y;
      for (std::size_t i : idx) y.push_back(train_y[i]);
      const GeneratorLoss g = generator_train_step(out.generator, generator_adam, out.critic, frozen, y, rng, config);
      if (!std::isfinite(g.value))
        throw TrainingError("train_wgan: non-finite generator loss at epoch " + std::to_string(epoch));
      row.generator_loss += g.value;
    } catch (const NonFiniteError& e) {
      throw TrainingError("train_wgan: " + std::string(e.what()) + " at epoch " + std::to_string(epoch));
    }
    row.wasserstein /= static_cast<double>(critic_updates);
    row.penalty /= static_cast<double>(critic_updates);
    row.generator_loss /= static_cast<double>(iterations);
    out.history.push_back(row);
  }
  return out;
}

LabeledFeatures synthesize_unseen(const GeneratorModel& generator, const Mlp& semantic_encoder,
                                  const AttributeTable& attrs, std::span<const int> unseen_classes,
                                  std::size_t n_per_class, std::uint64_t seed) {
  if (n_per_class < 1) throw InvalidArgument("synthesize_unseen: n_per_class must be >= 1");
  for (int u : unseen_classes)
    if (!attrs.contains(u)) throw InvalidArgument("synthesize_unseen: unseen class " + std::to_string(u) +
                                                  " is missing from the attribute table");
  Rng rng(seed);
  LabeledFeatures out;
  for (int u : unseen_classes) {
    const std::vector<int> labels(n_per_class, u);
    const Matrix noise = rng.normal_matrix(n_per_class, generator.noise_dim);
    const Matrix z = mlp_predict(semantic_encoder, generate(generator, noise, attrs.gather(labels)));
    out.features = vconcat(out.features, z);
    out.labels.insert(out.labels.end(), labels.begin(), labels.end());
  }
  return out;
}

}  // namespace segzsl
