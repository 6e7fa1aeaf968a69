#pragma once

#include "segzsl/classifier.hpp"
#include "segzsl/config.hpp"
#include "segzsl/data.hpp"
#include "segzsl/decomposer.hpp"
#include "segzsl/eval.hpp"
#include "segzsl/fgen.hpp"

namespace segzsl {

/// Loads `config.dataset`, or generates the synthetic benchmark from the run seed.
Dataset prepare_dataset(const ExperimentConfig& config);

/// z_s = E_s(x) for the seen-class training samples, with their labels.
LabeledFeatures encode_training_semantics(const Mlp& semantic_encoder, const Dataset& dataset);

struct PipelineRun {
  TrainedDecomposer decomposer;
  TrainedGan gan;
  LabeledFeatures synthetic;  // E_s(G(ε, a_u)) per unseen class
  SoftmaxClassifier classifier;
  GzslReport report;
};

/// All stages in memory. `config` must already be resolved.
PipelineRun run_pipeline(const Dataset& dataset, const ExperimentConfig& config);

/// Classifier and report stages given a trained decomposer and generator.
SoftmaxClassifier fit_gzsl_classifier(const Dataset& dataset, const Mlp& semantic_encoder,
                                      const LabeledFeatures& synthetic, const ExperimentConfig& config);

}  // namespace segzsl
