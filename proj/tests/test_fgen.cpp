#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "segzsl/decomposer.hpp"
#include "segzsl/error.hpp"
#include "segzsl/fgen.hpp"

using namespace segzsl;

namespace {

Dataset small_benchmark() {
  SyntheticBenchSpec spec;
  spec.num_seen = 3;
  spec.num_unseen = 2;
  spec.samples_per_class = 10;
  spec.feature_dim = 8;
  spec.attr_dim = 4;
  spec.semantic_latent_dim = 2;
  spec.nuisance_dim = 3;
  return make_synthetic_benchmark(spec, 11).dataset;
}

DecomposerModel small_decomposer(const Dataset& ds, Rng& rng) {
  DecompTrainConfig c;
  c.semantic_dim = 3;
  c.residual_dim = 2;
  c.hidden = 6;
  c.venc_hidden = 4;
  return make_decomposer(ds.feature_dim(), ds.attrs.dim(), c, rng);
}

GanTrainConfig small_gan_config() {
  GanTrainConfig c;
  c.hidden = 8;
  c.batch_size = 8;
  c.epochs = 3;
  c.critic_steps = 2;
  c.generator_adam.lr = 1e-3;
  c.critic_adam.lr = 1e-3;
  c.seed = 5;
  return c;
}

void zero_out(Mlp& net) {
  for (auto& layer : net.layers()) {
    for (double& v : layer.weight.values()) v = 0.0;
    for (double& v : layer.bias.values()) v = 0.0;
  }
}

}  // namespace

TEST_CASE("generator output shape and nonnegativity") {
  Rng rng(1);
  const GeneratorModel g = make_generator(4, 3, 6, 5, rng);
  const Matrix x = generate(g, rng.normal_matrix(7, 4), rng.normal_matrix(7, 3));
  CHECK(x.rows() == 7);
  CHECK(x.cols() == 6);
  for (double v : x.values()) CHECK(v >= 0.0);
  CHECK_THROWS_AS(generate(g, rng.normal_matrix(7, 3), rng.normal_matrix(7, 3)), DimensionError);
}

TEST_CASE("zero critic: no Wasserstein gap, unit penalty") {
  Rng rng(2);
  CriticModel critic = make_critic(5, 3, 4, rng);
  zero_out(critic.net);
  const std::vector<double> alpha{0.2, 0.5, 0.9};
  const CriticLoss l = critic_loss(critic, rng.normal_matrix(3, 5), rng.normal_matrix(3, 5), rng.normal_matrix(3, 3),
                                   alpha, 10.0);
  CHECK(l.wasserstein == 0.0);
  CHECK(l.penalty == 1.0);
  CHECK(l.value == 10.0);
}

TEST_CASE("critic loss: alpha = 1 interpolates onto the real batch") {
  Rng rng(3);
  const CriticModel critic = make_critic(5, 3, 4, rng);
  const Matrix real = rng.normal_matrix(4, 5);
  const Matrix attrs = rng.normal_matrix(4, 3);
  const std::vector<double> ones(4, 1.0);
  const CriticLoss l = critic_loss(critic, real, rng.normal_matrix(4, 5), attrs, ones, 10.0);
  CHECK(std::abs(l.penalty - gradient_penalty(critic.net, real, attrs).value) < 1e-12);

  const CriticLoss same = critic_loss(critic, real, real, attrs, ones, 0.0);
  CHECK(same.wasserstein == 0.0);
  CHECK(std::abs(same.value) < 1e-15);
}

TEST_CASE("critic loss gradient matches central differences") {
  Rng rng(4);
  CriticModel critic = make_critic(5, 3, 6, rng);
  const Matrix real = rng.normal_matrix(6, 5);
  const Matrix fake = rng.normal_matrix(6, 5);
  const Matrix attrs = rng.normal_matrix(6, 3);
  const std::vector<double> alpha{0.1, 0.3, 0.5, 0.7, 0.9, 0.4};
  const CriticLoss l = critic_loss(critic, real, fake, attrs, alpha, 10.0);
  std::vector<Param> params;
  append_params(params, "critic", critic.net, l.grads);
  const auto report =
      finite_diff_report([&] { return critic_loss(critic, real, fake, attrs, alpha, 10.0).value; }, params);
  INFO(report.worst_param, " ", report.analytic, " ", report.numeric);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("generator loss composition and gradient") {
  const Dataset ds = small_benchmark();
  Rng rng(5);
  const DecomposerModel dec = small_decomposer(ds, rng);
  GeneratorModel gen = make_generator(4, ds.attrs.dim(), ds.feature_dim(), 6, rng);
  const CriticModel critic = make_critic(ds.feature_dim(), ds.attrs.dim(), 6, rng);
  const SemanticBank bank = build_semantic_bank(dec.semantic_encoder, ds);
  const FrozenSemantics frozen{dec.semantic_encoder, dec.scorer, bank, ds.attrs, ds.split.seen};
  const std::vector<int> labels{0, 1, 2, 0, 1, 2};
  const Matrix noise = rng.normal_matrix(6, 4);

  const GanLossWeights w;
  const GeneratorLoss l = generator_loss(gen, critic, frozen, noise, labels, w);
  CHECK(std::abs(l.value - (l.wgan + 1.0 * l.mi + 0.025 * l.sim)) < 1e-12);

  const Matrix fake = generate(gen, noise, ds.attrs.gather(labels));
  const Matrix d = mlp_predict(critic.net, hconcat(fake, ds.attrs.gather(labels)));
  double mean_d = 0.0;
  for (double v : d.values()) mean_d += v / 6.0;
  CHECK(std::abs(l.wgan + mean_d) < 1e-12);
  const Matrix z = mlp_predict(dec.semantic_encoder, fake);
  CHECK(std::abs(l.mi - infonce_loss(dec.scorer, z, labels, ds.attrs, ds.split.seen).loss) < 1e-12);
  CHECK(std::abs(l.sim - bank_similarity_loss(z, labels, bank.z, bank.labels).value) < 1e-12);

  const GeneratorLoss plain = generator_loss(gen, critic, frozen, noise, labels, {10.0, 0.0, 0.0});
  CHECK(plain.value == plain.wgan);
  CHECK(plain.mi == 0.0);

  std::vector<Param> params;
  append_params(params, "generator", gen.net, l.grads);
  const auto report =
      finite_diff_report([&] { return generator_loss(gen, critic, frozen, noise, labels, w).value; }, params);
  INFO(report.worst_param, " ", report.analytic, " ", report.numeric);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("generator similarity needs bank samples of each class") {
  const Dataset ds = small_benchmark();
  Rng rng(6);
  const DecomposerModel dec = small_decomposer(ds, rng);
  const GeneratorModel gen = make_generator(4, ds.attrs.dim(), ds.feature_dim(), 6, rng);
  const CriticModel critic = make_critic(ds.feature_dim(), ds.attrs.dim(), 6, rng);
  const SemanticBank bank = build_semantic_bank(dec.semantic_encoder, ds);
  const std::vector<int> all = ds.all_classes();
  const FrozenSemantics frozen{dec.semantic_encoder, dec.scorer, bank, ds.attrs, all};
  const std::vector<int> unseen_label{ds.split.unseen[0]};
  CHECK_THROWS_AS(generator_loss(gen, critic, frozen, rng.normal_matrix(1, 4), unseen_label, {}), InvalidArgument);
}

TEST_CASE("wgan training history and determinism") {
  const Dataset ds = small_benchmark();
  Rng rng(7);
  const DecomposerModel dec = small_decomposer(ds, rng);
  const GanTrainConfig c = small_gan_config();
  const TrainedGan a = train_wgan(ds, dec, c);
  REQUIRE(a.history.size() == c.epochs);
  for (const auto& row : a.history) {
    CHECK(std::isfinite(row.wasserstein));
    CHECK(row.penalty >= 0.0);
  }
  const TrainedGan b = train_wgan(ds, dec, c);
  CHECK(a.generator.net.layers().back().weight == b.generator.net.layers().back().weight);
  CHECK(a.critic.net.layers().front().weight == b.critic.net.layers().front().weight);
  CHECK(a.generator.noise_dim == ds.attrs.dim());
}

TEST_CASE("wgan divergence guard") {
  const Dataset ds = small_benchmark();
  Rng rng(8);
  const DecomposerModel dec = small_decomposer(ds, rng);
  GanTrainConfig c = small_gan_config();
  c.divergence_limit = 1e-12;
  CHECK_THROWS_AS(train_wgan(ds, dec, c), TrainingError);
}

TEST_CASE("synthesize unseen features") {
  const Dataset ds = small_benchmark();
  Rng rng(9);
  const DecomposerModel dec = small_decomposer(ds, rng);
  const GeneratorModel gen = make_generator(ds.attrs.dim(), ds.attrs.dim(), ds.feature_dim(), 6, rng);
  const LabeledFeatures s = synthesize_unseen(gen, dec.semantic_encoder, ds.attrs, ds.split.unseen, 7, 3);
  CHECK(s.size() == 14);
  CHECK(s.features.cols() == dec.semantic_dim());
  CHECK(std::count(s.labels.begin(), s.labels.end(), ds.split.unseen[0]) == 7);
  CHECK(std::count(s.labels.begin(), s.labels.end(), ds.split.unseen[1]) == 7);

  CHECK(synthesize_unseen(gen, dec.semantic_encoder, ds.attrs, ds.split.unseen, 7, 3).features == s.features);
  CHECK_FALSE(synthesize_unseen(gen, dec.semantic_encoder, ds.attrs, ds.split.unseen, 7, 4).features == s.features);
  const std::vector<int> missing{99};
  CHECK_THROWS_AS(synthesize_unseen(gen, dec.semantic_encoder, ds.attrs, missing, 7, 3), InvalidArgument);
  CHECK_THROWS_AS(synthesize_unseen(gen, dec.semantic_encoder, ds.attrs, ds.split.unseen, 0, 3), InvalidArgument);
}
