#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "segzsl/classifier.hpp"
#include "segzsl/data.hpp"
#include "segzsl/decomposer.hpp"
#include "segzsl/fgen.hpp"

namespace segzsl {

struct EvalOptions {
  std::size_t top_k = 3;
  std::size_t synthetic_per_class = 200;  // z̃ drawn per unseen class for the classifier
};

/// Everything a run needs. Stage seeds are derived from `seed`, so the
/// per-stage `seed` fields of the nested configs are overwritten by resolve().
struct ExperimentConfig {
  std::string preset = "desk";
  std::string dataset;  // dataset directory; empty = generate the synthetic benchmark
  bool normalize_attributes = true;
  SyntheticBenchSpec synthetic;
  DecompTrainConfig decomposer;
  GanTrainConfig generator;
  ClassifierConfig classifier;
  EvalOptions eval;
  std::uint64_t seed = 1;

  /// Throws ConfigError describing the first violated constraint.
  void validate() const;
  /// Writes derived stage seeds into the nested configs.
  void resolve();
};

/// "paper" keeps full-size widths and learning rates; "desk" shrinks the
/// networks and raises learning rates so a run finishes in seconds.
ExperimentConfig preset_config(std::string_view name);

std::string config_to_json(const ExperimentConfig& config);

/// Overlays a JSON document on `base`. Every key at every depth must be
/// known; unknown keys and type mismatches throw ConfigError with the key path.
ExperimentConfig parse_config(const std::string& text, const ExperimentConfig& base);
ExperimentConfig load_config(const std::filesystem::path& path, const ExperimentConfig& base);

}  // namespace segzsl
