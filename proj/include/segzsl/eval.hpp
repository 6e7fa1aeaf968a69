#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "segzsl/classifier.hpp"
#include "segzsl/data.hpp"
#include "segzsl/decomposer.hpp"
#include "segzsl/matrix.hpp"
#include "segzsl/mlp.hpp"

namespace segzsl {

/// Unweighted mean over `class_set` of within-class top-1 accuracy. Throws
/// if a label lies outside class_set or a class has no samples.
double per_class_accuracy(std::span<const int> predictions, std::span<const int> labels,
                          std::span<const int> class_set, std::map<int, double>* per_class = nullptr);

/// 2ab / (a + b), 0 when a + b == 0. Inputs must lie in [0, 1].
double harmonic_mean(double acc_s, double acc_u);

struct GzslReport {
  double acc_s = 0.0;
  double acc_u = 0.0;
  double acc_h = 0.0;
  std::map<int, double> per_class;
  std::size_t test_seen_count = 0;
  std::size_t test_unseen_count = 0;

  std::string to_json() const;
  static GzslReport from_json(const std::string& text);
};

struct PredictionRecord {
  std::size_t sample_index = 0;
  bool unseen = false;
  int true_class = 0;
  int predicted_class = 0;
  std::vector<std::pair<int, double>> top;  // highest probabilities first
};

/// Encodes test samples with E_s and predicts over the full seen ∪ unseen
/// label space.
GzslReport gzsl_evaluate(const SoftmaxClassifier& clf, const Mlp& semantic_encoder, const Dataset& dataset,
                         std::vector<PredictionRecord>* records = nullptr, std::size_t top_k = 3);

/// Columns: sample_id,split,true_class,predicted_class,top1_class,top1_prob,...
void write_predictions_csv(std::span<const PredictionRecord> records, const std::filesystem::path& path);

inline constexpr double kProbeRidge = 1e-3;

/// Ridge regression from z to targets fit on even-indexed rows, scored by R²
/// on odd-indexed rows. Returns 0 when the held-out targets have no variance.
double linear_probe(const Matrix& z, const Matrix& targets, double ridge = kProbeRidge);

/// Writes z_s.csv and z_r.csv (sample_index,class_id,z_0,...) for every sample.
void export_embeddings(const DecomposerModel& model, const Dataset& dataset, const std::filesystem::path& dir);

}  // namespace segzsl
