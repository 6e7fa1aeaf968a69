#include "segzsl/eval.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>

#include <json.hpp>

#include "segzsl/error.hpp"

namespace segzsl {

double per_class_accuracy(std::span<const int> predictions, std::span<const int> labels,
                          std::span<const int> class_set, std::map<int, double>* per_class) {
  if (predictions.size() != labels.size()) throw DimensionError("per_class_accuracy: prediction/label count mismatch");
  if (class_set.empty()) throw InvalidArgument("per_class_accuracy: empty class set");
  std::map<int, std::pair<std::size_t, std::size_t>> tally;  // correct, total
  for (int c : class_set) tally[c] = {0, 0};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = tally.find(labels[i]);
    if (it == tally.end())
      throw InvalidArgument("per_class_accuracy: label " + std::to_string(labels[i]) + " is not in the class set");
    ++it->second.second;
    if (predictions[i] == labels[i]) ++it->second.first;
  }
  double sum = 0.0;
  for (const auto& [cls, counts] : tally) {
    if (counts.second == 0) throw InvalidArgument("per_class_accuracy: class " + std::to_string(cls) + " has no samples");
    const double acc = static_cast<double>(counts.first) / static_cast<double>(counts.second);
    if (per_class) (*per_class)[cls] = acc;
    sum += acc;
  }
  return sum / static_cast<double>(tally.size());
}

double harmonic_mean(double acc_s, double acc_u) {
  if (!(acc_s >= 0.0 && acc_s <= 1.0) || !(acc_u >= 0.0 && acc_u <= 1.0))
    throw InvalidArgument("harmonic_mean: accuracies must lie in [0, 1]");
  const double sum = acc_s + acc_u;
  return sum > 0.0 ? 2.0 * acc_s * acc_u / sum : 0.0;
}

std::string GzslReport::to_json() const {
  nlohmann::ordered_json j;
  j["acc_s"] = acc_s;
  j["acc_u"] = acc_u;
  j["acc_h"] = acc_h;
  nlohmann::ordered_json classes = nlohmann::ordered_json::object();
  for (const auto& [cls, acc] : per_class) classes[std::to_string(cls)] = acc;
  j["per_class"] = classes;
  j["counts"] = {{"test_seen", test_seen_count}, {"test_unseen", test_unseen_count}};
  return j.dump(2) + "\n";
}

GzslReport GzslReport::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  GzslReport r;
  r.acc_s = j.at("acc_s").get<double>();
  r.acc_u = j.at("acc_u").get<double>();
  r.acc_h = j.at("acc_h").get<double>();
  for (const auto& [key, value] : j.at("per_class").items()) r.per_class[std::stoi(key)] = value.get<double>();
  r.test_seen_count = j.at("counts").at("test_seen").get<std::size_t>();
  r.test_unseen_count = j.at("counts").at("test_unseen").get<std::size_t>();
  return r;
}

GzslReport gzsl_evaluate(const SoftmaxClassifier& clf, const Mlp& semantic_encoder, const Dataset& dataset,
                         std::vector<PredictionRecord>* records, std::size_t top_k) {
  for (int c : dataset.all_classes())
    if (!clf.contains(c)) throw InvalidArgument("gzsl_evaluate: classifier does not cover class " + std::to_string(c));

  GzslReport report;
  auto run = [&](const std::vector<std::size_t>& idx, const std::vector<int>& class_set, bool unseen) {
    const Matrix z = mlp_predict(semantic_encoder, dataset.features_at(idx));
    const std::vector<int> preds = predict(clf, z);
    const std::vector<int> labels = dataset.labels_at(idx);
    if (records) {
      const Matrix proba = predict_proba(clf, z);
      const std::size_t k = std::min(top_k, clf.num_classes());
      for (std::size_t i = 0; i < idx.size(); ++i) {
        std::vector<std::size_t> order(clf.num_classes());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
          if (proba(i, a) != proba(i, b)) return proba(i, a) > proba(i, b);
          return clf.class_ids()[a] < clf.class_ids()[b];
        });
        PredictionRecord rec{idx[i], unseen, labels[i], preds[i], {}};
        for (std::size_t t = 0; t < k; ++t) rec.top.emplace_back(clf.class_ids()[order[t]], proba(i, order[t]));
        records->push_back(std::move(rec));
      }
    }
    return per_class_accuracy(preds, labels, class_set, &report.per_class);
  };
  report.acc_s = run(dataset.split.test_seen_idx, dataset.split.seen, false);
  report.acc_u = run(dataset.split.test_unseen_idx, dataset.split.unseen, true);
  report.acc_h = harmonic_mean(report.acc_s, report.acc_u);
  report.test_seen_count = dataset.split.test_seen_idx.size();
  report.test_unseen_count = dataset.split.test_unseen_idx.size();
  return report;
}

void write_predictions_csv(std::span<const PredictionRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  const std::size_t k = records.empty() ? 0 : records.front().top.size();
  out << "sample_id,split,true_class,predicted_class";
  for (std::size_t t = 1; t <= k; ++t) out << ",top" << t << "_class,top" << t << "_prob";
  out << '\n' << std::setprecision(17);
  for (const auto& r : records) {
    out << r.sample_index << ',' << (r.unseen ? "unseen" : "seen") << ',' << r.true_class << ',' << r.predicted_class;
    for (const auto& [cls, p] : r.top) out << ',' << cls << ',' << p;
    out << '\n';
  }
}

double linear_probe(const Matrix& z, const Matrix& targets, double ridge) {
  if (z.rows() != targets.rows()) throw DimensionError("linear_probe: z and targets row counts differ");
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  for (std::size_t i = 0; i < z.rows(); ++i) (i % 2 == 0 ? train : test).push_back(i);
  if (train.size() < z.cols() + 1 || test.empty())
    throw InvalidArgument("linear_probe: need at least dim + 1 training rows");

  const Matrix x_train = gather_rows(z, train);
  const Matrix y_train = gather_rows(targets, train);
  const Matrix x_mean = column_means(x_train);
  const Matrix y_mean = column_means(y_train);
  Matrix xc = x_train;
  Matrix yc = y_train;
  for (std::size_t i = 0; i < xc.rows(); ++i) {
    for (std::size_t j = 0; j < xc.cols(); ++j) xc(i, j) -= x_mean[j];
    for (std::size_t j = 0; j < yc.cols(); ++j) yc(i, j) -= y_mean[j];
  }
  Matrix gram = matmul_tn(xc, xc);
  for (std::size_t j = 0; j < gram.rows(); ++j) gram(j, j) += ridge;
  const Matrix coef = cholesky_solve(gram, matmul_tn(xc, yc));

  const Matrix x_test = gather_rows(z, test);
  const Matrix y_test = gather_rows(targets, test);
  const Matrix y_test_mean = column_means(y_test);
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < x_test.rows(); ++i) {
    for (std::size_t t = 0; t < y_test.cols(); ++t) {
      double pred = y_mean[t];
      for (std::size_t j = 0; j < x_test.cols(); ++j) pred += (x_test(i, j) - x_mean[j]) * coef(j, t);
      const double r = y_test(i, t) - pred;
      const double d = y_test(i, t) - y_test_mean[t];
      ss_res += r * r;
      ss_tot += d * d;
    }
  }
  if (ss_tot <= 1e-12 * static_cast<double>(y_test.size())) return 0.0;
  return 1.0 - ss_res / ss_tot;
}

void export_embeddings(const DecomposerModel& model, const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const Latents latents = decompose(model, dataset.features);
  auto write = [&](const Matrix& z, const char* name) {
    const auto path = dir / name;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "sample_index,class_id";
    for (std::size_t j = 0; j < z.cols(); ++j) out << ",z_" << j;
    out << '\n' << std::setprecision(17);
    for (std::size_t i = 0; i < z.rows(); ++i) {
      out << i << ',' << dataset.labels[i];
      for (double v : z.row(i)) out << ',' << v;
      out << '\n';
    }
  };
  write(latents.semantic, "z_s.csv");
  write(latents.residual, "z_r.csv");
}

}  // namespace segzsl
