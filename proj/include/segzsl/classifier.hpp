#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "segzsl/data.hpp"
#include "segzsl/matrix.hpp"
#include "segzsl/optim.hpp"

namespace segzsl {

/// P(y | z) = softmax_y(w_yᵀ z + b_y) over seen ∪ unseen classes.
class SoftmaxClassifier {
 public:
  SoftmaxClassifier() = default;
  /// Zero-initialised weights for the given classes.
  SoftmaxClassifier(std::vector<int> class_ids, std::size_t feature_dim);
  SoftmaxClassifier(std::vector<int> class_ids, Matrix weight, Matrix bias);

  const std::vector<int>& class_ids() const { return class_ids_; }
  std::size_t num_classes() const { return class_ids_.size(); }
  std::size_t feature_dim() const { return weight_.cols(); }
  bool contains(int class_id) const { return index_.contains(class_id); }
  std::size_t index_of(int class_id) const;

  Matrix& weight() { return weight_; }  // num_classes × feature dim
  Matrix& bias() { return bias_; }      // 1 × num_classes
  const Matrix& weight() const { return weight_; }
  const Matrix& bias() const { return bias_; }

 private:
  std::vector<int> class_ids_;
  Matrix weight_;
  Matrix bias_;
  std::unordered_map<int, std::size_t> index_;
};

Matrix classifier_logits(const SoftmaxClassifier& clf, const Matrix& z);
/// Rows sum to one; computed with max-subtraction.
Matrix predict_proba(const SoftmaxClassifier& clf, const Matrix& z);
/// Argmax class id per row; ties go to the lowest class id.
std::vector<int> predict(const SoftmaxClassifier& clf, const Matrix& z);

struct CrossEntropy {
  double value = 0.0;  // summed over samples
  Matrix grad_weight;
  Matrix grad_bias;
};

/// −Σ_i log P(y_i | z_i) and its parameter gradient (sums, not means).
CrossEntropy cross_entropy(const SoftmaxClassifier& clf, const Matrix& z, std::span<const int> labels);

struct ClassifierConfig {
  std::size_t batch_size = 64;
  std::size_t epochs = 30;
  AdamConfig adam{1e-4, 0.9, 0.999, 1e-8};
  double weight_decay = 0.0;
  std::uint64_t seed = 3;
};

/// Minimizes the two-block cross entropy over real seen and synthetic unseen
/// semantic features. Each batch draws half its samples from each block.
SoftmaxClassifier train_classifier(const LabeledFeatures& real_seen, const LabeledFeatures& synthetic_unseen,
                                   std::span<const int> class_ids, const ClassifierConfig& config);

}  // namespace segzsl
