#include "segzsl/decomposer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "segzsl/error.hpp"

namespace segzsl {

namespace {

struct Normalized {
  Matrix unit;                 // rows scaled to unit norm, zero rows stay zero
  std::vector<double> norms;
};

Normalized normalize_rows(const Matrix& z) {
  Normalized out{z, std::vector<double>(z.rows(), 0.0)};
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const double n = norm2(z.row(i));
    out.norms[i] = n;
    auto row = out.unit.row(i);
    if (n > 0.0)
      for (double& v : row) v /= n;
  }
  return out;
}

// Pulls a gradient on the unit rows back to the raw rows.
Matrix unnormalize_grad(const Normalized& nz, const Matrix& d_unit) {
  Matrix grad(d_unit.rows(), d_unit.cols());
  for (std::size_t i = 0; i < grad.rows(); ++i) {
    if (nz.norms[i] == 0.0) continue;
    const double proj = dot(nz.unit.row(i), d_unit.row(i));
    for (std::size_t k = 0; k < grad.cols(); ++k)
      grad(i, k) = (d_unit(i, k) - nz.unit(i, k) * proj) / nz.norms[i];
  }
  return grad;
}

double log_sum_exp(std::span<const double> v, const std::vector<char>* mask) {
  double mx = -INFINITY;
  for (std::size_t j = 0; j < v.size(); ++j)
    if (!mask || (*mask)[j]) mx = std::max(mx, v[j]);
  if (mx == -INFINITY) return mx;
  double s = 0.0;
  for (std::size_t j = 0; j < v.size(); ++j)
    if (!mask || (*mask)[j]) s += std::exp(v[j] - mx);
  return mx + std::log(s);
}

// Shared core: L = −(1/N) Σ_i [lse_{j∈same(i)} S_ij − lse_j S_ij], returns dL/dS.
double contrastive_from_similarity(const Matrix& sims, std::span<const int> row_labels,
                                   std::span<const int> col_labels, Matrix& d_sims) {
  const std::size_t n = sims.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  d_sims = Matrix(n, sims.cols());
  double loss = 0.0;
  std::vector<char> same(sims.cols());
  for (std::size_t i = 0; i < n; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < sims.cols(); ++j) {
      same[j] = col_labels[j] == row_labels[i];
      any = any || same[j];
    }
    if (!any) throw InvalidArgument("similarity loss: no reference sample for class " + std::to_string(row_labels[i]));
    const auto s = sims.row(i);
    const double lse_same = log_sum_exp(s, &same);
    const double lse_all = log_sum_exp(s, nullptr);
    loss -= lse_same - lse_all;
    for (std::size_t j = 0; j < sims.cols(); ++j) {
      const double p_all = std::exp(s[j] - lse_all);
      const double p_same = same[j] ? std::exp(s[j] - lse_same) : 0.0;
      d_sims(i, j) = -inv_n * (p_same - p_all);
    }
  }
  return loss * inv_n;
}

DecomposerGrads zero_grads(const DecomposerModel& model) {
  DecomposerGrads g;
  g.semantic = MlpGrads::zeros_like(model.semantic_encoder);
  if (model.residual_encoder) g.residual = MlpGrads::zeros_like(*model.residual_encoder);
  g.decoder = MlpGrads::zeros_like(model.decoder);
  g.scorer = Matrix(model.scorer.weight.rows(), model.scorer.weight.cols());
  return g;
}

struct Forward {
  MlpTrace semantic;
  std::optional<MlpTrace> residual;
};

Forward encode(const DecomposerModel& model, const Matrix& x) {
  if (x.cols() != model.feature_dim())
    throw DimensionError("decomposer: input has " + std::to_string(x.cols()) + " columns, expected " +
                         std::to_string(model.feature_dim()));
  Forward f{mlp_forward(model.semantic_encoder, x), std::nullopt};
  if (model.residual_encoder) f.residual = mlp_forward(*model.residual_encoder, x);
  return f;
}

// Adds reconstruction loss and its latent gradients; fills decoder grads.
double add_reconstruction(const DecomposerModel& model, const Matrix& x, const Forward& f, Matrix& d_zs,
                          Matrix& d_zr, DecomposerGrads& grads) {
  const Matrix& zs = f.semantic.output;
  const Matrix dec_in = f.residual ? hconcat(zs, f.residual->output) : zs;
  const MlpTrace dec = mlp_forward(model.decoder, dec_in);
  const LossWithGrad recon = reconstruction_loss(x, dec.output);
  const MlpBackward back = mlp_backward(model.decoder, dec, recon.grad);
  grads.decoder = back.params;
  add_inplace(d_zs, slice_cols(back.input, 0, zs.cols()));
  if (f.residual) add_inplace(d_zr, slice_cols(back.input, zs.cols(), f.residual->output.cols()));
  return recon.value;
}

double add_mi(const DecomposerModel& model, const Forward& f, std::span<const int> labels,
              const AttributeTable& attrs, std::span<const int> class_set, const DecompLossWeights& w, Matrix& d_zs,
              Matrix& d_zr, DecomposerGrads& grads) {
  double value = 0.0;
  if (w.lambda_s != 0.0) {
    const InfoNceResult nce = infonce_loss(model.scorer, f.semantic.output, labels, attrs, class_set);
    value += w.lambda_s * nce.loss;
    add_inplace(d_zs, nce.grad_z, w.lambda_s);
    add_inplace(grads.scorer, nce.grad_weight, w.lambda_s);
  }
  if (w.lambda_r != 0.0 && f.residual) {
    const ClubResult club = club_estimate(model.venc, f.residual->output, labels, attrs, class_set);
    value += w.lambda_r * club.estimate;
    add_inplace(d_zr, club.grad_z, w.lambda_r);
  }
  return value;
}

void backprop_encoders(const DecomposerModel& model, const Forward& f, const Matrix& d_zs, const Matrix& d_zr,
                       DecomposerGrads& grads) {
  grads.semantic = mlp_backward(model.semantic_encoder, f.semantic, d_zs).params;
  if (f.residual) grads.residual = mlp_backward(*model.residual_encoder, *f.residual, d_zr).params;
}

}  // namespace

void DecompTrainConfig::validate() const {
  if (weights.lambda_s < 0.0 || weights.lambda_r < 0.0 || weights.lambda_sim < 0.0)
    throw InvalidArgument("decomposer: loss weights must be >= 0");
  if (semantic_dim < 1 || hidden < 1 || venc_hidden < 1) throw InvalidArgument("decomposer: dims must be >= 1");
  if (batch_size < 1 || samples_per_class < 1) throw InvalidArgument("decomposer: batch sizes must be >= 1");
}

DecomposerModel make_decomposer(std::size_t feature_dim, std::size_t attr_dim, const DecompTrainConfig& config,
                                Rng& rng) {
  config.validate();
  const Activation leaky = Activation::leaky_relu();
  DecomposerModel model;
  model.semantic_encoder = Mlp::create({feature_dim, config.hidden, config.semantic_dim}, leaky, Activation::identity(), rng);
  if (config.residual_dim > 0)
    model.residual_encoder =
        Mlp::create({feature_dim, config.hidden, config.residual_dim}, leaky, Activation::identity(), rng);
  model.decoder = Mlp::create({config.semantic_dim + config.residual_dim, config.hidden, feature_dim}, leaky,
                              Activation::identity(), rng);
  model.scorer = InfoNceScorer::create(config.semantic_dim, attr_dim, rng);
  const std::size_t venc_in = config.residual_dim > 0 ? config.residual_dim : config.semantic_dim;
  model.venc = ClubVariationalEncoder::create(venc_in, attr_dim, config.venc_hidden, rng);
  return model;
}

Latents decompose(const DecomposerModel& model, const Matrix& x) {
  Forward f = encode(model, x);
  Latents out;
  out.semantic = std::move(f.semantic.output);
  out.residual = f.residual ? std::move(f.residual->output) : Matrix(x.rows(), 0);
  return out;
}

LossWithGrad reconstruction_loss(const Matrix& x, const Matrix& x_hat) {
  if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols())
    throw DimensionError("reconstruction_loss: x and x_hat shapes differ");
  if (x.rows() == 0) throw InvalidArgument("reconstruction_loss: empty batch");
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  LossWithGrad out{0.0, Matrix(x.rows(), x.cols())};
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double sq = 0.0;
    for (std::size_t k = 0; k < x.cols(); ++k) {
      const double d = x_hat(i, k) - x(i, k);
      sq += d * d;
    }
    const double n = std::sqrt(sq);
    out.value += n;
    if (n > 0.0)
      for (std::size_t k = 0; k < x.cols(); ++k) out.grad(i, k) = inv_n * (x_hat(i, k) - x(i, k)) / n;
  }
  out.value *= inv_n;
  return out;
}

LossWithGrad similarity_loss(const Matrix& z, std::span<const int> labels) {
  if (z.rows() == 0) throw InvalidArgument("similarity_loss: empty batch");
  if (labels.size() != z.rows()) throw DimensionError("similarity_loss: label count does not match batch");
  const Normalized nz = normalize_rows(z);
  const Matrix sims = matmul_nt(nz.unit, nz.unit);
  Matrix d_sims;
  LossWithGrad out;
  out.value = contrastive_from_similarity(sims, labels, labels, d_sims);
  // S = U·Uᵀ, so dU = (G + Gᵀ)·U.
  Matrix d_unit = matmul(d_sims, nz.unit);
  add_inplace(d_unit, matmul_tn(d_sims, nz.unit));
  out.grad = unnormalize_grad(nz, d_unit);
  return out;
}

LossWithGrad bank_similarity_loss(const Matrix& z, std::span<const int> labels, const Matrix& bank,
                                  std::span<const int> bank_labels) {
  if (z.rows() == 0) throw InvalidArgument("bank_similarity_loss: empty batch");
  if (labels.size() != z.rows() || bank_labels.size() != bank.rows())
    throw DimensionError("bank_similarity_loss: label count mismatch");
  if (bank.cols() != z.cols()) throw DimensionError("bank_similarity_loss: bank dim differs from z dim");
  const Normalized nz = normalize_rows(z);
  const Normalized nb = normalize_rows(bank);
  const Matrix sims = matmul_nt(nz.unit, nb.unit);
  Matrix d_sims;
  LossWithGrad out;
  out.value = contrastive_from_similarity(sims, labels, bank_labels, d_sims);
  out.grad = unnormalize_grad(nz, matmul(d_sims, nb.unit));
  return out;
}

DecompLoss reconstruction_objective(const DecomposerModel& model, const Matrix& x) {
  const Forward f = encode(model, x);
  DecompLoss out;
  out.grads = zero_grads(model);
  Matrix d_zs(x.rows(), model.semantic_dim());
  Matrix d_zr(x.rows(), model.residual_dim());
  out.parts.recon = add_reconstruction(model, x, f, d_zs, d_zr, out.grads);
  out.parts.total = out.parts.recon;
  backprop_encoders(model, f, d_zs, d_zr, out.grads);
  return out;
}

DecompLoss decomposition_mi_loss(const DecomposerModel& model, const Matrix& x, std::span<const int> labels,
                                 const AttributeTable& attrs, std::span<const int> class_set,
                                 const DecompLossWeights& weights) {
  const Forward f = encode(model, x);
  DecompLoss out;
  out.grads = zero_grads(model);
  Matrix d_zs(x.rows(), model.semantic_dim());
  Matrix d_zr(x.rows(), model.residual_dim());
  out.parts.mi = add_mi(model, f, labels, attrs, class_set, weights, d_zs, d_zr, out.grads);
  out.parts.total = out.parts.mi;
  backprop_encoders(model, f, d_zs, d_zr, out.grads);
  return out;
}

DecompLoss decomposer_loss(const DecomposerModel& model, const Matrix& x, std::span<const int> labels,
                           const AttributeTable& attrs, std::span<const int> class_set,
                           const DecompLossWeights& weights) {
  if (labels.size() != x.rows()) throw DimensionError("decomposer_loss: label count does not match batch");
  const Forward f = encode(model, x);
  DecompLoss out;
  out.grads = zero_grads(model);
  Matrix d_zs(x.rows(), model.semantic_dim());
  Matrix d_zr(x.rows(), model.residual_dim());

  out.parts.recon = add_reconstruction(model, x, f, d_zs, d_zr, out.grads);
  out.parts.mi = add_mi(model, f, labels, attrs, class_set, weights, d_zs, d_zr, out.grads);
  if (weights.lambda_sim != 0.0) {
    const LossWithGrad sim = similarity_loss(f.semantic.output, labels);
    out.parts.sim = sim.value;
    add_inplace(d_zs, sim.grad, weights.lambda_sim);
  }
  out.parts.total = out.parts.recon + out.parts.mi + weights.lambda_sim * out.parts.sim;
  backprop_encoders(model, f, d_zs, d_zr, out.grads);
  return out;
}

std::vector<Param> decomposer_params(DecomposerModel& model, const DecomposerGrads& grads) {
  std::vector<Param> params;
  append_params(params, "semantic", model.semantic_encoder, grads.semantic);
  if (model.residual_encoder) append_params(params, "residual", *model.residual_encoder, grads.residual);
  append_params(params, "decoder", model.decoder, grads.decoder);
  params.push_back({"scorer.weight", &model.scorer.weight, &grads.scorer});
  return params;
}

std::vector<std::vector<std::size_t>> class_stratified_batches(std::span<const int> labels, std::size_t batch_size,
                                                               std::size_t samples_per_class, Rng& rng) {
  if (labels.empty()) return {};
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

  struct Queue {
    std::vector<std::size_t> members;
    std::size_t cursor = 0;
  };
  std::vector<Queue> queues;
  for (auto& [cls, members] : by_class) {
    rng.shuffle(members);
    queues.push_back({members, 0});
  }

  const std::size_t group = std::max<std::size_t>(samples_per_class, 1);
  const std::size_t classes_per_batch =
      std::min(queues.size(), std::max<std::size_t>(2, batch_size / group));
  const std::size_t per_batch = classes_per_batch * group;
  const std::size_t num_batches = (labels.size() + per_batch - 1) / per_batch;

  std::vector<std::size_t> class_order(queues.size());
  for (std::size_t c = 0; c < class_order.size(); ++c) class_order[c] = c;
  rng.shuffle(class_order);
  std::size_t class_cursor = 0;

  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t b = 0; b < num_batches; ++b) {
    std::vector<std::size_t> batch;
    std::vector<char> used(queues.size(), 0);
    for (std::size_t picked = 0; picked < classes_per_batch;) {
      if (class_cursor == class_order.size()) {
        rng.shuffle(class_order);
        class_cursor = 0;
      }
      const std::size_t c = class_order[class_cursor++];
      if (used[c]) continue;
      used[c] = 1;
      ++picked;
      Queue& q = queues[c];
      const std::size_t take = std::min(group, q.members.size());
      for (std::size_t k = 0; k < take; ++k) {
        if (q.cursor == q.members.size()) {
          rng.shuffle(q.members);
          q.cursor = 0;
        }
        batch.push_back(q.members[q.cursor++]);
      }
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

TrainedDecomposer train_decomposer(const Dataset& dataset, const DecompTrainConfig& config) {
  config.validate();
  if (dataset.split.train_idx.empty()) throw InvalidArgument("train_decomposer: no training samples");
  Rng rng(config.seed);
  TrainedDecomposer out{make_decomposer(dataset.feature_dim(), dataset.attrs.dim(), config, rng), {}};
  DecomposerModel& model = out.model;

  const Matrix train_x = dataset.features_at(dataset.split.train_idx);
  const std::vector<int> train_y = dataset.labels_at(dataset.split.train_idx);
  const std::vector<int>& class_set = dataset.split.seen;

  Adam adam(config.adam);
  Adam venc_adam(config.venc_adam);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    DecompLossParts mean;
    const auto batches = class_stratified_batches(train_y, config.batch_size, config.samples_per_class, rng);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const Matrix x = gather_rows(train_x, batches[b]);
      std::vector<int> y;
      y.reserve(batches[b].size());
      for (std::size_t i : batches[b]) y.push_back(train_y[i]);

      const std::string where = " at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b);
      DecompLoss loss;
      try {
        if (model.residual_encoder && config.weights.lambda_r != 0.0) {
          const Matrix z_r = mlp_predict(*model.residual_encoder, x);
          for (std::size_t s = 0; s < config.venc_steps; ++s)
            fit_variational_encoder_step(model.venc, z_r, y, dataset.attrs, venc_adam);
        }
        loss = decomposer_loss(model, x, y, dataset.attrs, class_set, config.weights);
        if (!std::isfinite(loss.parts.total)) throw TrainingError("train_decomposer: non-finite loss" + where);
        adam.step(decomposer_params(model, loss.grads));
      } catch (const NonFiniteError& e) {
        throw TrainingError("train_decomposer: " + std::string(e.what()) + where);
      }

      mean.recon += loss.parts.recon;
      mean.mi += loss.parts.mi;
      mean.sim += loss.parts.sim;
      mean.total += loss.parts.total;
    }
    const double inv = 1.0 / static_cast<double>(std::max<std::size_t>(batches.size(), 1));
    mean.recon *= inv;
    mean.mi *= inv;
    mean.sim *= inv;
    mean.total *= inv;
    out.history.push_back(mean);
  }
  return out;
}

}  // namespace segzsl
