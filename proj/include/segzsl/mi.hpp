#pragma once

#include <cstddef>
#include <span>
#include <unordered_map>
#include <vector>

#include "segzsl/matrix.hpp"
#include "segzsl/mlp.hpp"
#include "segzsl/optim.hpp"
#include "segzsl/rng.hpp"

namespace segzsl {

/// Per-class attribute vectors, one row per class id.
class AttributeTable {
 public:
  AttributeTable() = default;
  AttributeTable(std::vector<int> class_ids, Matrix values);

  std::size_t dim() const { return values_.cols(); }
  std::size_t num_classes() const { return class_ids_.size(); }
  const std::vector<int>& class_ids() const { return class_ids_; }
  const Matrix& values() const { return values_; }

  bool contains(int class_id) const { return index_.contains(class_id); }
  std::size_t row_of(int class_id) const;
  std::span<const double> row(int class_id) const { return values_.row(row_of(class_id)); }

  /// Stacks a_{labels[i]} into a labels.size() × dim matrix.
  Matrix gather(std::span<const int> labels) const;

  /// Scales every row to unit L2 norm (zero rows left as is).
  void normalize_rows();

  bool operator==(const AttributeTable& other) const {
    return class_ids_ == other.class_ids_ && values_ == other.values_;
  }

 private:
  std::vector<int> class_ids_;
  Matrix values_;
  std::unordered_map<int, std::size_t> index_;
};

/// Bilinear score f(z, a) = zᵀ W a.
struct InfoNceScorer {
  Matrix weight;  // dim(z) × dim(a)

  static InfoNceScorer create(std::size_t z_dim, std::size_t attr_dim, Rng& rng);
};

struct InfoNceResult {
  double loss = 0.0;
  Matrix grad_z;
  Matrix grad_weight;
};

/// Empirical InfoNCE loss with every class in `class_set` as a candidate:
///   −(1/N) Σ_i log[ exp f(z_i, a_{y_i}) / ((1/K) Σ_c exp f(z_i, a_c)) ]
/// This is the negated InfoNCE bound. Throws on empty batch, empty class set
/// or a label outside the class set.
InfoNceResult infonce_loss(const InfoNceScorer& scorer, const Matrix& z, std::span<const int> labels,
                           const AttributeTable& attrs, std::span<const int> class_set);

inline constexpr double kLogVarClamp = 10.0;

/// Diagonal Gaussian q(a | z) = N(μ(z), diag σ²(z)); net output is [μ, log σ²].
struct ClubVariationalEncoder {
  Mlp net;
  std::size_t attr_dim = 0;

  /// Two hidden LeakyReLU layers of `hidden` units.
  static ClubVariationalEncoder create(std::size_t z_dim, std::size_t attr_dim, std::size_t hidden, Rng& rng);
};

/// log q(a_c | z_i) for each sample i and each c in class_set (B × K).
Matrix club_loglik(const ClubVariationalEncoder& venc, const Matrix& z, const AttributeTable& attrs,
                   std::span<const int> class_set);

struct ClubResult {
  double estimate = 0.0;
  Matrix grad_z;
};

/// (1/N) Σ_i [log q(a_{y_i}|z_i) − (1/K) Σ_c log q(a_c|z_i)] and its gradient
/// with respect to z. The variational encoder is treated as frozen.
ClubResult club_estimate(const ClubVariationalEncoder& venc, const Matrix& z, std::span<const int> labels,
                         const AttributeTable& attrs, std::span<const int> class_set);

/// Mean positive-pair log-likelihood (1/N) Σ_i log q(a_{y_i}|z_i).
double club_mean_loglik(const ClubVariationalEncoder& venc, const Matrix& z, std::span<const int> labels,
                        const AttributeTable& attrs);

/// One maximum-likelihood Adam step on Σ_i log q(a_{y_i} | z_i); z is a constant
/// input. Returns the mean log-likelihood before the step.
double fit_variational_encoder_step(ClubVariationalEncoder& venc, const Matrix& z, std::span<const int> labels,
                                    const AttributeTable& attrs, Adam& adam);

/// MI of a bivariate standard Gaussian with correlation rho, in nats.
double gaussian_mi(double rho);

struct MiBenchConfig {
  std::size_t batch_size = 128;
  std::size_t train_steps = 1500;
  std::size_t eval_batches = 40;
  std::size_t venc_hidden = 32;
  AdamConfig scorer_adam{1e-2, 0.9, 0.999, 1e-8};
  AdamConfig venc_adam{3e-3, 0.9, 0.999, 1e-8};
};

struct MiBenchResult {
  double rho = 0.0;
  double true_mi = 0.0;
  double infonce = 0.0;  // −infonce_loss, a lower-bound estimate
  double club = 0.0;
};

/// Trains a scalar scorer and a variational encoder on (z, a) pairs with
/// corr(z, a) = rho, then averages both estimators over fresh batches. Each
/// sample in a batch acts as its own class, so the batch supplies negatives.
MiBenchResult mi_bench(double rho, const MiBenchConfig& config, std::uint64_t seed);

}  // namespace segzsl
