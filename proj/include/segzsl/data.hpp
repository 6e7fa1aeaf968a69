#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "segzsl/matrix.hpp"
#include "segzsl/mi.hpp"

namespace segzsl {

struct SplitSpec {
  std::vector<int> seen;
  std::vector<int> unseen;
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_seen_idx;
  std::vector<std::size_t> test_unseen_idx;
};

/// Feature rows with one class label each (real or synthetic).
struct LabeledFeatures {
  Matrix features;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

struct Dataset {
  Matrix features;  // N × feature dim
  std::vector<int> labels;
  AttributeTable attrs;
  SplitSpec split;

  std::size_t size() const { return labels.size(); }
  std::size_t feature_dim() const { return features.cols(); }

  /// Throws DatasetError naming the first violated invariant.
  void validate() const;

  Matrix features_at(std::span<const std::size_t> indices) const { return gather_rows(features, indices); }
  std::vector<int> labels_at(std::span<const std::size_t> indices) const;
  /// Seen ∪ unseen in that order.
  std::vector<int> all_classes() const;
};

// Feature matrix file: "SEGZ", u32 version = 1, u32 rows, u32 cols, then
// rows·cols little-endian IEEE-754 binary32 values, row-major.
inline constexpr std::uint32_t kFeatureFormatVersion = 1;

void write_feature_matrix(const Matrix& m, const std::filesystem::path& path);
/// Throws BadMagicError, UnsupportedVersionError, TruncatedError or
/// NonFiniteEntryError; IoError when the file cannot be opened.
Matrix load_feature_matrix(const std::filesystem::path& path);

struct LoadOptions {
  bool normalize_attributes = true;
};

/// Reads features.bin, labels.csv, attributes.csv and split.json from `dir`.
Dataset load_dataset(const std::filesystem::path& dir, LoadOptions options = {});
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

/// Labelled CSV helpers shared by the stage artifacts.
void write_labels_csv(std::span<const int> labels, const std::filesystem::path& path);
std::vector<int> read_labels_csv(const std::filesystem::path& path);

struct SyntheticBenchSpec {
  std::size_t num_seen = 20;
  std::size_t num_unseen = 5;
  std::size_t samples_per_class = 50;
  std::size_t attr_dim = 16;
  /// Intrinsic dimension of the class attributes: a_c = Q·s_c, s_c ∈ R^k.
  std::size_t semantic_latent_dim = 8;
  std::size_t nuisance_dim = 16;
  std::size_t feature_dim = 64;
  double nuisance_scale = 2.0;
  double noise_scale = 0.1;
  double train_fraction = 0.8;
  std::uint64_t mixing_seed = 7;
  bool normalize_attributes = true;

  void validate() const;
};

struct SyntheticBenchmark {
  Dataset dataset;
  Matrix sample_attributes;  // N × attr dim, a_{y_i}
  Matrix nuisance;           // N × nuisance dim
};

/// x = ReLU(A·a_c + B·n + σ·e) with fixed random maps A, B drawn from
/// mixing_seed and n, e ~ N(0, I). Unseen classes only appear in test-unseen.
/// Features are rounded to binary32 so the in-memory set equals its file form.
SyntheticBenchmark make_synthetic_benchmark(const SyntheticBenchSpec& spec, std::uint64_t seed);

}  // namespace segzsl
