#include "segzsl/pipeline.hpp"

#include "segzsl/rng.hpp"

namespace segzsl {

Dataset prepare_dataset(const ExperimentConfig& config) {
  if (!config.dataset.empty()) {
    LoadOptions opts;
    opts.normalize_attributes = config.normalize_attributes;
    return load_dataset(config.dataset, opts);
  }
  SyntheticBenchSpec spec = config.synthetic;
  spec.normalize_attributes = config.normalize_attributes;
  return make_synthetic_benchmark(spec, mix_seed(config.seed, 0)).dataset;
}

LabeledFeatures encode_training_semantics(const Mlp& semantic_encoder, const Dataset& dataset) {
  return {mlp_predict(semantic_encoder, dataset.features_at(dataset.split.train_idx)),
          dataset.labels_at(dataset.split.train_idx)};
}

SoftmaxClassifier fit_gzsl_classifier(const Dataset& dataset, const Mlp& semantic_encoder,
                                      const LabeledFeatures& synthetic, const ExperimentConfig& config) {
  return train_classifier(encode_training_semantics(semantic_encoder, dataset), synthetic, dataset.all_classes(),
                          config.classifier);
}

PipelineRun run_pipeline(const Dataset& dataset, const ExperimentConfig& config) {
  TrainedDecomposer decomposer = train_decomposer(dataset, config.decomposer);
  TrainedGan gan = train_wgan(dataset, decomposer.model, config.generator);
  LabeledFeatures synthetic =
      synthesize_unseen(gan.generator, decomposer.model.semantic_encoder, dataset.attrs, dataset.split.unseen,
                        config.eval.synthetic_per_class, mix_seed(config.seed, 4));
  // Same rounding as the on-disk handoff, so staged and in-memory runs agree.
  for (double& v : synthetic.features.values()) v = static_cast<double>(static_cast<float>(v));
  SoftmaxClassifier clf = fit_gzsl_classifier(dataset, decomposer.model.semantic_encoder, synthetic, config);
  GzslReport report = gzsl_evaluate(clf, decomposer.model.semantic_encoder, dataset);
  return {std::move(decomposer), std::move(gan), std::move(synthetic), std::move(clf), std::move(report)};
}

}  // namespace segzsl
