#include "segzsl/mi.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "segzsl/error.hpp"

namespace segzsl {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

// Maps each label to its column in class_set, validating membership.
std::vector<std::size_t> label_columns(std::span<const int> labels, std::span<const int> class_set) {
  std::unordered_map<int, std::size_t> column;
  for (std::size_t k = 0; k < class_set.size(); ++k) column.emplace(class_set[k], k);
  std::vector<std::size_t> out;
  out.reserve(labels.size());
  for (int y : labels) {
    auto it = column.find(y);
    if (it == column.end()) throw InvalidArgument("label " + std::to_string(y) + " is not in the class set");
    out.push_back(it->second);
  }
  return out;
}

Matrix class_rows(const AttributeTable& attrs, std::span<const int> class_set) {
  return attrs.gather(class_set);
}

struct GaussianHead {
  MlpTrace trace;
  Matrix mean;
  Matrix logvar;      // clamped
  Matrix logvar_raw;  // network output before clamping
};

GaussianHead gaussian_forward(const ClubVariationalEncoder& venc, const Matrix& z) {
  GaussianHead head;
  head.trace = mlp_forward(venc.net, z);
  const std::size_t d = venc.attr_dim;
  if (head.trace.output.cols() != 2 * d)
    throw DimensionError("variational encoder output dim must be 2 x attribute dim");
  head.mean = slice_cols(head.trace.output, 0, d);
  head.logvar_raw = slice_cols(head.trace.output, d, d);
  head.logvar = head.logvar_raw;
  for (double& v : head.logvar.values()) v = std::clamp(v, -kLogVarClamp, kLogVarClamp);
  return head;
}

// d/d(net output) of Σ_{i,c} w_ic log q(a_c | z_i).
Matrix gaussian_backward(const GaussianHead& head, const Matrix& class_attrs, const Matrix& weights) {
  const std::size_t batch = head.mean.rows();
  const std::size_t d = head.mean.cols();
  Matrix upstream(batch, 2 * d);
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double mu = head.mean(i, j);
      const double inv_var = std::exp(-head.logvar(i, j));
      double d_mu = 0.0;
      double d_lv = 0.0;
      for (std::size_t c = 0; c < class_attrs.rows(); ++c) {
        const double w = weights(i, c);
        if (w == 0.0) continue;
        const double diff = class_attrs(c, j) - mu;
        d_mu += w * diff * inv_var;
        d_lv += w * 0.5 * (diff * diff * inv_var - 1.0);
      }
      const double raw = head.logvar_raw(i, j);
      const bool clamped = raw < -kLogVarClamp || raw > kLogVarClamp;
      upstream(i, j) = d_mu;
      upstream(i, d + j) = clamped ? 0.0 : d_lv;
    }
  }
  return upstream;
}

Matrix gaussian_loglik(const GaussianHead& head, const Matrix& class_attrs) {
  const std::size_t batch = head.mean.rows();
  const std::size_t d = head.mean.cols();
  Matrix out(batch, class_attrs.rows());
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t c = 0; c < class_attrs.rows(); ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = class_attrs(c, j) - head.mean(i, j);
        s += diff * diff * std::exp(-head.logvar(i, j)) + head.logvar(i, j) + kLog2Pi;
      }
      out(i, c) = -0.5 * s;
    }
  }
  return out;
}

void require_club_inputs(const ClubVariationalEncoder& venc, const Matrix& z, const AttributeTable& attrs) {
  if (venc.attr_dim != attrs.dim())
    throw DimensionError("variational encoder attribute dim " + std::to_string(venc.attr_dim) +
                         " does not match attribute table dim " + std::to_string(attrs.dim()));
  if (z.cols() != venc.net.input_dim()) throw DimensionError("variational encoder input dim mismatch");
}

}  // namespace

AttributeTable::AttributeTable(std::vector<int> class_ids, Matrix values)
    : class_ids_(std::move(class_ids)), values_(std::move(values)) {
  if (class_ids_.size() != values_.rows())
    throw DimensionError("AttributeTable: " + std::to_string(class_ids_.size()) + " class ids for " +
                         std::to_string(values_.rows()) + " rows");
  for (std::size_t r = 0; r < class_ids_.size(); ++r) {
    if (!index_.emplace(class_ids_[r], r).second)
      throw InvalidArgument("AttributeTable: duplicate class id " + std::to_string(class_ids_[r]));
  }
  if (!values_.all_finite()) throw NonFiniteError("AttributeTable: non-finite attribute value");
}

std::size_t AttributeTable::row_of(int class_id) const {
  auto it = index_.find(class_id);
  if (it == index_.end()) throw InvalidArgument("no attribute row for class " + std::to_string(class_id));
  return it->second;
}

Matrix AttributeTable::gather(std::span<const int> labels) const {
  Matrix out(labels.size(), dim());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto src = row(labels[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

void AttributeTable::normalize_rows() {
  for (std::size_t r = 0; r < values_.rows(); ++r) {
    auto row = values_.row(r);
    const double n = norm2(row);
    if (n > 0.0)
      for (double& v : row) v /= n;
  }
}

InfoNceScorer InfoNceScorer::create(std::size_t z_dim, std::size_t attr_dim, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(z_dim));
  return {rng.uniform_matrix(z_dim, attr_dim, -bound, bound)};
}

InfoNceResult infonce_loss(const InfoNceScorer& scorer, const Matrix& z, std::span<const int> labels,
                           const AttributeTable& attrs, std::span<const int> class_set) {
  if (z.rows() == 0) throw InvalidArgument("infonce_loss: empty batch");
  if (class_set.empty()) throw InvalidArgument("infonce_loss: empty class set");
  if (labels.size() != z.rows()) throw DimensionError("infonce_loss: label count does not match batch");
  if (scorer.weight.rows() != z.cols() || scorer.weight.cols() != attrs.dim())
    throw DimensionError("infonce_loss: scorer weight shape does not match dim(z) x dim(a)");

  const auto columns = label_columns(labels, class_set);
  const Matrix class_attrs = class_rows(attrs, class_set);  // K × da
  const Matrix projected = matmul(z, scorer.weight);          // N × da
  const Matrix scores = matmul_nt(projected, class_attrs);    // N × K

  const std::size_t n = z.rows();
  const std::size_t k = class_set.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double log_k = std::log(static_cast<double>(k));

  InfoNceResult result;
  Matrix d_scores(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    auto s = scores.row(i);
    const double mx = *std::max_element(s.begin(), s.end());
    double sum = 0.0;
    for (double v : s) sum += std::exp(v - mx);
    const double lse = mx + std::log(sum);
    result.loss -= s[columns[i]] - lse + log_k;
    for (std::size_t c = 0; c < k; ++c) {
      const double p = std::exp(s[c] - lse);
      d_scores(i, c) = inv_n * (p - (c == columns[i] ? 1.0 : 0.0));
    }
  }
  result.loss *= inv_n;

  const Matrix d_projected = matmul(d_scores, class_attrs);  // N × da
  result.grad_z = matmul_nt(d_projected, scorer.weight);
  result.grad_weight = matmul_tn(z, d_projected);
  return result;
}

ClubVariationalEncoder ClubVariationalEncoder::create(std::size_t z_dim, std::size_t attr_dim, std::size_t hidden,
                                                      Rng& rng) {
  ClubVariationalEncoder venc;
  venc.net = Mlp::create({z_dim, hidden, hidden, 2 * attr_dim}, Activation::leaky_relu(), Activation::identity(), rng);
  venc.attr_dim = attr_dim;
  return venc;
}

Matrix club_loglik(const ClubVariationalEncoder& venc, const Matrix& z, const AttributeTable& attrs,
                   std::span<const int> class_set) {
  require_club_inputs(venc, z, attrs);
  return gaussian_loglik(gaussian_forward(venc, z), class_rows(attrs, class_set));
}

ClubResult club_estimate(const ClubVariationalEncoder& venc, const Matrix& z, std::span<const int> labels,
                         const AttributeTable& attrs, std::span<const int> class_set) {
  require_club_inputs(venc, z, attrs);
  if (z.rows() == 0) throw InvalidArgument("club_estimate: empty batch");
  if (class_set.empty()) throw InvalidArgument("club_estimate: empty class set");
  if (labels.size() != z.rows()) throw DimensionError("club_estimate: label count does not match batch");

  const auto columns = label_columns(labels, class_set);
  const Matrix class_attrs = class_rows(attrs, class_set);
  const GaussianHead head = gaussian_forward(venc, z);
  const Matrix ll = gaussian_loglik(head, class_attrs);

  const std::size_t n = z.rows();
  const std::size_t k = class_set.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double inv_k = 1.0 / static_cast<double>(k);

  ClubResult result;
  Matrix weights(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (std::size_t c = 0; c < k; ++c) mean += ll(i, c);
    result.estimate += ll(i, columns[i]) - mean * inv_k;
    for (std::size_t c = 0; c < k; ++c) weights(i, c) = inv_n * ((c == columns[i] ? 1.0 : 0.0) - inv_k);
  }
  result.estimate *= inv_n;

  const Matrix upstream = gaussian_backward(head, class_attrs, weights);
  result.grad_z = mlp_backward(venc.net, head.trace, upstream).input;
  return result;
}

double club_mean_loglik(const ClubVariationalEncoder& venc, const Matrix& z, std::span<const int> labels,
                        const AttributeTable& attrs) {
  require_club_inputs(venc, z, attrs);
  const GaussianHead head = gaussian_forward(venc, z);
  const Matrix targets = attrs.gather(labels);
  double total = 0.0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    for (std::size_t j = 0; j < venc.attr_dim; ++j) {
      const double diff = targets(i, j) - head.mean(i, j);
      total += -0.5 * (diff * diff * std::exp(-head.logvar(i, j)) + head.logvar(i, j) + kLog2Pi);
    }
  }
  return total / static_cast<double>(z.rows());
}

double fit_variational_encoder_step(ClubVariationalEncoder& venc, const Matrix& z, std::span<const int> labels,
                                    const AttributeTable& attrs, Adam& adam) {
  require_club_inputs(venc, z, attrs);
  if (z.rows() == 0) throw InvalidArgument("fit_variational_encoder_step: empty batch");
  if (labels.size() != z.rows()) throw DimensionError("fit_variational_encoder_step: label count mismatch");

  const GaussianHead head = gaussian_forward(venc, z);
  const Matrix targets = attrs.gather(labels);
  const std::size_t n = z.rows();
  const std::size_t d = venc.attr_dim;
  const double inv_n = 1.0 / static_cast<double>(n);

  // Descent on −(1/N) Σ log q(a_{y_i} | z_i).
  double loglik = 0.0;
  Matrix upstream(n, 2 * d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = targets(i, j) - head.mean(i, j);
      const double inv_var = std::exp(-head.logvar(i, j));
      loglik += -0.5 * (diff * diff * inv_var + head.logvar(i, j) + kLog2Pi);
      upstream(i, j) = -inv_n * diff * inv_var;
      const double raw = head.logvar_raw(i, j);
      const bool clamped = raw < -kLogVarClamp || raw > kLogVarClamp;
      upstream(i, d + j) = clamped ? 0.0 : -inv_n * 0.5 * (diff * diff * inv_var - 1.0);
    }
  }
  const MlpBackward back = mlp_backward(venc.net, head.trace, upstream);
  std::vector<Param> params;
  append_params(params, "venc", venc.net, back.params);
  adam.step(params);
  return loglik * inv_n;
}

double gaussian_mi(double rho) {
  if (!(rho > -1.0 && rho < 1.0)) throw InvalidArgument("gaussian_mi: rho must lie in (-1, 1)");
  return -0.5 * std::log1p(-rho * rho);
}

MiBenchResult mi_bench(double rho, const MiBenchConfig& config, std::uint64_t seed) {
  if (config.batch_size < 2) throw InvalidArgument("mi_bench: batch_size must be >= 2");
  MiBenchResult result;
  result.rho = rho;
  result.true_mi = gaussian_mi(rho);

  Rng rng(seed);
  InfoNceScorer scorer = InfoNceScorer::create(1, 1, rng);
  ClubVariationalEncoder venc = ClubVariationalEncoder::create(1, 1, config.venc_hidden, rng);
  Adam scorer_adam(config.scorer_adam);
  Adam venc_adam(config.venc_adam);

  const std::size_t n = config.batch_size;
  std::vector<int> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<int>(i);
  const double tail = std::sqrt(1.0 - rho * rho);
  auto draw = [&](Matrix& z, AttributeTable& attrs) {
    z = rng.normal_matrix(n, 1);
    Matrix a(n, 1);
    for (std::size_t i = 0; i < n; ++i) a[i] = rho * z[i] + tail * rng.normal();
    attrs = AttributeTable(ids, std::move(a));
  };

  Matrix z;
  AttributeTable attrs;
  for (std::size_t step = 0; step < config.train_steps; ++step) {
    draw(z, attrs);
    const InfoNceResult nce = infonce_loss(scorer, z, ids, attrs, ids);
    const Param params[] = {{"scorer.weight", &scorer.weight, &nce.grad_weight}};
    scorer_adam.step(params);
    fit_variational_encoder_step(venc, z, ids, attrs, venc_adam);
  }
  for (std::size_t b = 0; b < config.eval_batches; ++b) {
    draw(z, attrs);
    result.infonce -= infonce_loss(scorer, z, ids, attrs, ids).loss;
    result.club += club_estimate(venc, z, ids, attrs, ids).estimate;
  }
  result.infonce /= static_cast<double>(config.eval_batches);
  result.club /= static_cast<double>(config.eval_batches);
  return result;
}

}  // namespace segzsl
