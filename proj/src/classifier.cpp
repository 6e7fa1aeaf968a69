#include "segzsl/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "segzsl/error.hpp"
#include "segzsl/rng.hpp"

namespace segzsl {

SoftmaxClassifier::SoftmaxClassifier(std::vector<int> class_ids, std::size_t feature_dim)
    : SoftmaxClassifier(class_ids, Matrix(class_ids.size(), feature_dim), Matrix(1, class_ids.size())) {}

SoftmaxClassifier::SoftmaxClassifier(std::vector<int> class_ids, Matrix weight, Matrix bias)
    : class_ids_(std::move(class_ids)), weight_(std::move(weight)), bias_(std::move(bias)) {
  if (class_ids_.empty()) throw InvalidArgument("SoftmaxClassifier: no classes");
  if (weight_.rows() != class_ids_.size() || bias_.rows() != 1 || bias_.cols() != class_ids_.size())
    throw DimensionError("SoftmaxClassifier: parameter shapes do not match the class count");
  for (std::size_t k = 0; k < class_ids_.size(); ++k) {
    if (!index_.emplace(class_ids_[k], k).second)
      throw InvalidArgument("SoftmaxClassifier: duplicate class id " + std::to_string(class_ids_[k]));
  }
}

std::size_t SoftmaxClassifier::index_of(int class_id) const {
  auto it = index_.find(class_id);
  if (it == index_.end()) throw InvalidArgument("class " + std::to_string(class_id) + " is not in the classifier index");
  return it->second;
}

Matrix classifier_logits(const SoftmaxClassifier& clf, const Matrix& z) {
  if (z.cols() != clf.feature_dim())
    throw DimensionError("classifier: input dim " + std::to_string(z.cols()) + ", expected " +
                         std::to_string(clf.feature_dim()));
  Matrix logits = matmul_nt(z, clf.weight());
  add_row_broadcast(logits, clf.bias());
  return logits;
}

Matrix predict_proba(const SoftmaxClassifier& clf, const Matrix& z) {
  Matrix p = classifier_logits(clf, z);
  for (std::size_t i = 0; i < p.rows(); ++i) {
    auto row = p.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (double& v : row) v /= sum;
  }
  return p;
}

std::vector<int> predict(const SoftmaxClassifier& clf, const Matrix& z) {
  const Matrix logits = classifier_logits(clf, z);
  const auto& ids = clf.class_ids();
  std::vector<int> out(z.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < logits.cols(); ++k) {
      const double v = logits(i, k);
      if (v > logits(i, best) || (v == logits(i, best) && ids[k] < ids[best])) best = k;
    }
    out[i] = ids[best];
  }
  return out;
}

CrossEntropy cross_entropy(const SoftmaxClassifier& clf, const Matrix& z, std::span<const int> labels) {
  if (labels.size() != z.rows()) throw DimensionError("cross_entropy: label count does not match batch");
  const Matrix p = predict_proba(clf, z);
  Matrix d_logits = p;
  CrossEntropy out;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const std::size_t k = clf.index_of(labels[i]);
    out.value -= std::log(std::max(p(i, k), 1e-300));
    d_logits(i, k) -= 1.0;
  }
  out.grad_weight = matmul_tn(d_logits, z);
  out.grad_bias = column_sums(d_logits);
  return out;
}

SoftmaxClassifier train_classifier(const LabeledFeatures& real_seen, const LabeledFeatures& synthetic_unseen,
                                   std::span<const int> class_ids, const ClassifierConfig& config) {
  if (real_seen.size() == 0) throw InvalidArgument("train_classifier: real seen set is empty");
  if (synthetic_unseen.size() == 0) throw InvalidArgument("train_classifier: synthetic unseen set is empty");
  if (real_seen.features.cols() != synthetic_unseen.features.cols())
    throw DimensionError("train_classifier: real and synthetic feature dims differ");
  if (config.batch_size < 2) throw InvalidArgument("train_classifier: batch_size must be >= 2");

  SoftmaxClassifier clf(std::vector<int>(class_ids.begin(), class_ids.end()), real_seen.features.cols());
  for (const auto* set : {&real_seen, &synthetic_unseen}) {
    for (int y : set->labels)
      if (!clf.contains(y)) throw InvalidArgument("train_classifier: class " + std::to_string(y) +
                                                  " is present in labels but absent from the class index");
  }

  Rng rng(config.seed);
  struct Block {
    const LabeledFeatures* set;
    std::vector<std::size_t> order;
    std::size_t cursor = 0;
  };
  Block blocks[2] = {{&real_seen, {}, 0}, {&synthetic_unseen, {}, 0}};
  for (auto& b : blocks) {
    b.order.resize(b.set->size());
    for (std::size_t i = 0; i < b.order.size(); ++i) b.order[i] = i;
    rng.shuffle(b.order);
  }

  const std::size_t half = config.batch_size / 2;
  const std::size_t total = real_seen.size() + synthetic_unseen.size();
  const std::size_t iterations = (total + 2 * half - 1) / (2 * half);
  Adam adam(config.adam);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t it = 0; it < iterations; ++it) {
      Matrix grad_w(clf.weight().rows(), clf.weight().cols());
      Matrix grad_b(1, clf.num_classes());
      for (auto& b : blocks) {
        std::vector<std::size_t> idx(half);
        for (auto& i : idx) {
          if (b.cursor == b.order.size()) {
            rng.shuffle(b.order);
            b.cursor = 0;
          }
          i = b.order[b.cursor++];
        }
        std::vector<int> y;
        for (std::size_t i : idx) y.push_back(b.set->labels[i]);
        const CrossEntropy ce = cross_entropy(clf, gather_rows(b.set->features, idx), y);
        add_inplace(grad_w, ce.grad_weight, 1.0 / static_cast<double>(2 * half));
        add_inplace(grad_b, ce.grad_bias, 1.0 / static_cast<double>(2 * half));
      }
      if (config.weight_decay != 0.0) add_inplace(grad_w, clf.weight(), config.weight_decay);
      const Param params[] = {{"classifier.weight", &clf.weight(), &grad_w}, {"classifier.bias", &clf.bias(), &grad_b}};
      adam.step(params);
    }
  }
  return clf;
}

}  // namespace segzsl
