#include <doctest.h>

#include <cmath>

#include "segzsl/classifier.hpp"
#include "segzsl/error.hpp"

using namespace segzsl;

namespace {

// Reference softmax in long double, written out directly from the definition.
std::vector<long double> softmax_oracle(const SoftmaxClassifier& clf, std::span<const double> z) {
  std::vector<long double> logits(clf.num_classes());
  for (std::size_t k = 0; k < logits.size(); ++k) {
    long double s = clf.bias()(0, k);
    for (std::size_t j = 0; j < z.size(); ++j) s += static_cast<long double>(clf.weight()(k, j)) * z[j];
    logits[k] = s;
  }
  long double total = 0.0L;
  for (auto& v : logits) total += (v = std::exp(v));
  for (auto& v : logits) v /= total;
  return logits;
}

LabeledFeatures cluster(const std::vector<std::pair<int, std::vector<double>>>& centers, std::size_t per_class,
                        double spread, Rng& rng) {
  LabeledFeatures out;
  const std::size_t dim = centers.front().second.size();
  out.features = Matrix(centers.size() * per_class, dim);
  std::size_t r = 0;
  for (const auto& [cls, c] : centers)
    for (std::size_t n = 0; n < per_class; ++n, ++r) {
      for (std::size_t j = 0; j < dim; ++j) out.features(r, j) = c[j] + spread * rng.normal();
      out.labels.push_back(cls);
    }
  return out;
}

}  // namespace

TEST_CASE("zero parameters give exactly uniform probabilities") {
  const SoftmaxClassifier clf({4, 1, 7}, 5);
  Rng rng(1);
  const Matrix z = rng.normal_matrix(6, 5);
  const Matrix p = predict_proba(clf, z);
  for (double v : p.values()) CHECK(v == 1.0 / 3.0);
  const std::vector<int> labels{4, 1, 7, 7, 1, 4};
  CHECK(std::abs(cross_entropy(clf, z, labels).value - 6.0 * std::log(3.0)) < 1e-12);
}

TEST_CASE("ties resolve to the lowest class id") {
  const SoftmaxClassifier clf({9, 2, 5}, 3);
  const auto pred = predict(clf, Matrix{{1, 2, 3}, {0, 0, 0}});
  CHECK(pred == std::vector<int>{2, 2});

  SoftmaxClassifier tie({9, 2, 5}, Matrix(3, 1), Matrix{{1.0, 0.0, 1.0}});
  CHECK(predict(tie, Matrix{{0.5}}) == std::vector<int>{5});
}

TEST_CASE("probabilities match a direct softmax and stay finite for large logits") {
  Rng rng(2);
  SoftmaxClassifier clf({0, 1, 2, 3}, rng.normal_matrix(4, 3), rng.normal_matrix(1, 4));
  const Matrix z = rng.normal_matrix(5, 3);
  const Matrix p = predict_proba(clf, z);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto ref = softmax_oracle(clf, z.row(i));
    double sum = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(std::abs(p(i, k) - static_cast<double>(ref[k])) < 1e-12);
      sum += p(i, k);
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
  scale_inplace(clf.weight(), 1e3);
  const Matrix large = predict_proba(clf, z);
  for (double v : large.values()) CHECK(std::isfinite(v));
}

TEST_CASE("cross entropy is a sum over samples") {
  Rng rng(3);
  const SoftmaxClassifier clf({0, 1, 2}, rng.normal_matrix(3, 4), rng.normal_matrix(1, 3));
  const Matrix z = rng.normal_matrix(4, 4);
  const std::vector<int> labels{0, 2, 1, 1};
  const double once = cross_entropy(clf, z, labels).value;
  std::vector<int> twice_labels = labels;
  twice_labels.insert(twice_labels.end(), labels.begin(), labels.end());
  CHECK(std::abs(cross_entropy(clf, vconcat(z, z), twice_labels).value - 2.0 * once) < 1e-12);
}

TEST_CASE("cross entropy gradient matches central differences") {
  Rng rng(4);
  SoftmaxClassifier clf({3, 1, 2}, rng.normal_matrix(3, 4), rng.normal_matrix(1, 3));
  const Matrix z = rng.normal_matrix(6, 4);
  const std::vector<int> labels{3, 1, 2, 2, 3, 1};
  const CrossEntropy ce = cross_entropy(clf, z, labels);
  const Param params[] = {{"weight", &clf.weight(), &ce.grad_weight}, {"bias", &clf.bias(), &ce.grad_bias}};
  CHECK(finite_diff_check([&] { return cross_entropy(clf, z, labels).value; }, params) < 1e-4);
}

TEST_CASE("classifier input validation") {
  const SoftmaxClassifier clf({0, 1}, 3);
  const std::vector<int> unknown{0, 5};
  CHECK_THROWS_AS(cross_entropy(clf, Matrix(2, 3), unknown), InvalidArgument);
  CHECK_THROWS_AS(predict(clf, Matrix(2, 4)), DimensionError);
  CHECK_THROWS_AS(SoftmaxClassifier({1, 1}, 3), InvalidArgument);
  CHECK_THROWS_AS(SoftmaxClassifier({}, 3), InvalidArgument);
}

TEST_CASE("balanced batches learn a small synthetic block") {
  Rng rng(5);
  const LabeledFeatures seen = cluster({{0, {3, 0, 0}}, {1, {0, 3, 0}}}, 100, 0.5, rng);
  const LabeledFeatures unseen = cluster({{2, {0, 0, 3}}}, 5, 0.5, rng);
  ClassifierConfig c;
  c.batch_size = 16;
  c.epochs = 20;
  c.adam.lr = 1e-2;
  const std::vector<int> classes{0, 1, 2};
  const SoftmaxClassifier clf = train_classifier(seen, unseen, classes, c);

  const LabeledFeatures test = cluster({{0, {3, 0, 0}}, {1, {0, 3, 0}}, {2, {0, 0, 3}}}, 50, 0.5, rng);
  const auto pred = predict(clf, test.features);
  std::size_t correct_unseen = 0;
  for (std::size_t i = 100; i < 150; ++i) correct_unseen += pred[i] == 2;
  CHECK(correct_unseen >= 45);

  const SoftmaxClassifier again = train_classifier(seen, unseen, classes, c);
  CHECK(again.weight() == clf.weight());
  CHECK_THROWS_AS(train_classifier(seen, LabeledFeatures{Matrix(0, 3), {}}, classes, c), InvalidArgument);
}
