#include "segzsl/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "segzsl/checkpoint.hpp"
#include "segzsl/config.hpp"
#include "segzsl/error.hpp"
#include "segzsl/eval.hpp"
#include "segzsl/mi.hpp"
#include "segzsl/pipeline.hpp"
#include "segzsl/rng.hpp"

namespace segzsl {

namespace fs = std::filesystem;

namespace {

constexpr const char* kDecomposerCkpt = "decomposer.ckpt";
constexpr const char* kGeneratorCkpt = "generator.ckpt";
constexpr const char* kClassifierCkpt = "classifier.ckpt";
constexpr const char* kSyntheticFeatures = "synthetic_unseen.bin";
constexpr const char* kSyntheticLabels = "synthetic_unseen_labels.csv";
constexpr const char* kResolvedConfig = "resolved-config.json";

const std::vector<std::string> kCommands = {"gen-synthetic",    "train-decomposer", "train-generator", "synthesize",
                                            "train-classifier", "evaluate",         "pipeline",        "mi-bench",
                                            "export-embeddings", "ablate"};

struct Options {
  std::string config;
  std::string out;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::vector<double> rhos{0.3, 0.5, 0.8};
};

fs::path require_artifact(const fs::path& dir, const char* name, const char* producer) {
  const fs::path p = dir / name;
  if (!fs::exists(p))
    throw ConfigError("missing artifact " + p.string() + " (produced by `" + producer + "`)");
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

void check_thread_env() {
  const char* env = std::getenv("SEGZSL_THREADS");
  if (!env) return;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  // Every kernel runs on the calling thread, so any positive cap is honored.
  if (end == env || *end != '\0' || v < 1) throw ConfigError("SEGZSL_THREADS: expected a positive integer, got \"" + std::string(env) + "\"");
}

/// preset base, then --config or the run directory's resolved-config.json,
/// then --seed.
ExperimentConfig resolve_config(const Options& opts) {
  ExperimentConfig c = preset_config(opts.preset.empty() ? "desk" : opts.preset);
  const fs::path stored = fs::path(opts.out) / kResolvedConfig;
  if (!opts.config.empty())
    c = load_config(opts.config, c);
  else if (fs::exists(stored))
    c = load_config(stored, c);
  if (!opts.preset.empty() && c.preset != opts.preset)
    throw ConfigError("--preset " + opts.preset + " conflicts with config preset \"" + c.preset + "\"");
  if (opts.seed) c.seed = *opts.seed;
  c.validate();
  c.resolve();
  return c;
}

void persist_config(const ExperimentConfig& c, const fs::path& out) {
  fs::create_directories(out);
  write_text(out / kResolvedConfig, config_to_json(c));
}

void write_decomposer_history(const std::vector<DecompLossParts>& history, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,L_recon,L_MI,L_sim,L_total\n" << std::setprecision(17);
  for (std::size_t e = 0; e < history.size(); ++e)
    out << e << ',' << history[e].recon << ',' << history[e].mi << ',' << history[e].sim << ',' << history[e].total
        << '\n';
}

void write_gan_history(const std::vector<GanHistoryRow>& history, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,wasserstein,gradient_penalty,generator_loss\n" << std::setprecision(17);
  for (std::size_t e = 0; e < history.size(); ++e)
    out << e << ',' << history[e].wasserstein << ',' << history[e].penalty << ',' << history[e].generator_loss << '\n';
}

DecomposerModel read_decomposer(const fs::path& out) {
  return load_decomposer(Checkpoint::load(require_artifact(out, kDecomposerCkpt, "train-decomposer")));
}

void stage_train_decomposer(const ExperimentConfig& c, const Dataset& ds, const fs::path& out) {
  const TrainedDecomposer trained = train_decomposer(ds, c.decomposer);
  Checkpoint ckpt;
  store_decomposer(ckpt, trained.model);
  ckpt.save(out / kDecomposerCkpt);
  write_decomposer_history(trained.history, out / "decomposer_history.csv");
}

void stage_train_generator(const ExperimentConfig& c, const Dataset& ds, const fs::path& out) {
  const DecomposerModel decomposer = read_decomposer(out);
  const TrainedGan gan = train_wgan(ds, decomposer, c.generator);
  Checkpoint ckpt;
  store_gan(ckpt, gan.generator, gan.critic);
  ckpt.save(out / kGeneratorCkpt);
  write_gan_history(gan.history, out / "generator_history.csv");
}

void stage_synthesize(const ExperimentConfig& c, const Dataset& ds, const fs::path& out) {
  const DecomposerModel decomposer = read_decomposer(out);
  const GeneratorModel generator =
      load_generator(Checkpoint::load(require_artifact(out, kGeneratorCkpt, "train-generator")));
  const LabeledFeatures synthetic = synthesize_unseen(generator, decomposer.semantic_encoder, ds.attrs,
                                                      ds.split.unseen, c.eval.synthetic_per_class, mix_seed(c.seed, 4));
  write_feature_matrix(synthetic.features, out / kSyntheticFeatures);
  write_labels_csv(synthetic.labels, out / kSyntheticLabels);
}

void stage_train_classifier(const ExperimentConfig& c, const Dataset& ds, const fs::path& out) {
  const DecomposerModel decomposer = read_decomposer(out);
  LabeledFeatures synthetic{load_feature_matrix(require_artifact(out, kSyntheticFeatures, "synthesize")),
                            read_labels_csv(require_artifact(out, kSyntheticLabels, "synthesize"))};
  if (synthetic.labels.size() != synthetic.features.rows())
    throw DatasetError(std::string(kSyntheticLabels) + ": label count does not match " + kSyntheticFeatures);
  const SoftmaxClassifier clf = fit_gzsl_classifier(ds, decomposer.semantic_encoder, synthetic, c);
  Checkpoint ckpt;
  store_classifier(ckpt, clf);
  ckpt.save(out / kClassifierCkpt);
}

GzslReport stage_evaluate(const ExperimentConfig& c, const Dataset& ds, const fs::path& out) {
  const fs::path clf_path = require_artifact(out, kClassifierCkpt, "train-classifier");
  const DecomposerModel decomposer = read_decomposer(out);
  const SoftmaxClassifier clf = load_classifier(Checkpoint::load(clf_path));
  std::vector<PredictionRecord> records;
  const GzslReport report = gzsl_evaluate(clf, decomposer.semantic_encoder, ds, &records, c.eval.top_k);
  write_text(out / "report.json", report.to_json());
  write_predictions_csv(records, out / "predictions.csv");
  return report;
}

GzslReport stage_all(const ExperimentConfig& c, const Dataset& ds, const fs::path& out) {
  stage_train_decomposer(c, ds, out);
  stage_train_generator(c, ds, out);
  stage_synthesize(c, ds, out);
  stage_train_classifier(c, ds, out);
  return stage_evaluate(c, ds, out);
}

std::string summary_line(const GzslReport& r) {
  std::ostringstream s;
  s << std::setprecision(6) << "acc_s=" << r.acc_s << " acc_u=" << r.acc_u << " acc_h=" << r.acc_h;
  return s.str();
}

int run_ablate(const ExperimentConfig& base, const Dataset& ds, const fs::path& out, std::ostream& log) {
  struct Variant {
    const char* name;
    void (*apply)(ExperimentConfig&);
  };
  const Variant variants[] = {
      {"recon", [](ExperimentConfig& c) { c.decomposer.weights = {0.0, 0.0, 0.0}; }},
      {"recon_mi", [](ExperimentConfig& c) { c.decomposer.weights.lambda_sim = 0.0; }},
      {"full", [](ExperimentConfig&) {}},
      {"no_residual", [](ExperimentConfig& c) { c.decomposer.residual_dim = 0; }},
  };
  const Matrix targets = ds.attrs.gather(ds.labels);
  std::ostringstream table;
  table << "variant,acc_s,acc_u,acc_h,probe_zs,probe_zr\n" << std::setprecision(17);
  for (const auto& v : variants) {
    ExperimentConfig c = base;
    v.apply(c);
    const fs::path dir = out / v.name;
    persist_config(c, dir);
    const GzslReport report = stage_all(c, ds, dir);
    const Latents z = decompose(read_decomposer(dir), ds.features);
    table << v.name << ',' << report.acc_s << ',' << report.acc_u << ',' << report.acc_h << ','
          << linear_probe(z.semantic, targets) << ',';
    if (z.residual.cols() > 0) table << linear_probe(z.residual, targets);
    table << '\n';
    log << v.name << ": " << summary_line(report) << '\n';
  }
  write_text(out / "ablation.csv", table.str());
  return kExitOk;
}

int run_mi_bench(const Options& opts, const ExperimentConfig& c, const fs::path& out, std::ostream& log) {
  std::ostringstream csv;
  csv << "rho,true_mi,infonce,club\n" << std::setprecision(17);
  for (std::size_t i = 0; i < opts.rhos.size(); ++i) {
    const double rho = opts.rhos[i];
    if (!(rho > -1.0 && rho < 1.0)) throw ConfigError("--rho: values must lie in (-1, 1)");
    const MiBenchResult r = mi_bench(rho, MiBenchConfig{}, mix_seed(c.seed, 100 + i));
    csv << r.rho << ',' << r.true_mi << ',' << r.infonce << ',' << r.club << '\n';
    log << std::setprecision(4) << "rho=" << rho << " true_mi=" << r.true_mi << " infonce=" << r.infonce
        << " club=" << r.club << '\n';
  }
  write_text(out / "mi_bench.csv", csv.str());
  return kExitOk;
}

int dispatch(const std::string& cmd, const Options& opts, std::ostream& log) {
  check_thread_env();
  const ExperimentConfig c = resolve_config(opts);
  const fs::path out(opts.out);
  persist_config(c, out);
  if (cmd == "mi-bench") return run_mi_bench(opts, c, out, log);

  const Dataset ds = prepare_dataset(c);
  if (cmd == "gen-synthetic") {
    if (!c.dataset.empty()) throw ConfigError("gen-synthetic: config names a dataset directory; clear `dataset`");
    save_dataset(ds, out);
  } else if (cmd == "train-decomposer") {
    stage_train_decomposer(c, ds, out);
  } else if (cmd == "train-generator") {
    stage_train_generator(c, ds, out);
  } else if (cmd == "synthesize") {
    stage_synthesize(c, ds, out);
  } else if (cmd == "train-classifier") {
    stage_train_classifier(c, ds, out);
  } else if (cmd == "evaluate") {
    log << summary_line(stage_evaluate(c, ds, out)) << '\n';
  } else if (cmd == "pipeline") {
    log << summary_line(stage_all(c, ds, out)) << '\n';
  } else if (cmd == "export-embeddings") {
    export_embeddings(read_decomposer(out), ds, out);
  } else if (cmd == "ablate") {
    return run_ablate(c, ds, out, log);
  }
  return kExitOk;
}

int fail(std::ostream& err, int code, const char* kind, const std::string& message) {
  nlohmann::ordered_json j;
  j["error"] = kind;
  j["code"] = code;
  j["message"] = message;
  err << j.dump() << '\n';
  return code;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (args.empty()) return fail(err, kExitUsage, "usage", "missing subcommand");
  const std::string& cmd = args.front();
  if (std::find(kCommands.begin(), kCommands.end(), cmd) == kCommands.end())
    return fail(err, kExitUsage, "usage", "unknown subcommand \"" + cmd + "\"");

  Options opts;
  CLI::App app("segzsl " + cmd);
  app.add_option("--config", opts.config, "experiment config JSON");
  app.add_option("--out", opts.out, "output directory")->required();
  app.add_option("--preset", opts.preset, "hyperparameter bundle")->check(CLI::IsMember({"paper", "desk"}));
  app.add_option("--seed", opts.seed, "run seed (overrides config)");
  if (cmd == "mi-bench") app.add_option("--rho", opts.rhos, "correlations to benchmark");
  try {
    std::vector<std::string> rest(args.rbegin(), args.rend() - 1);
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    return fail(err, kExitUsage, "usage", e.what());
  }

  try {
    return dispatch(cmd, opts, out);
  } catch (const ConfigError& e) {
    return fail(err, kExitConfig, "config", e.what());
  } catch (const std::exception& e) {
    return fail(err, kExitRuntime, "runtime", e.what());
  }
}

}  // namespace segzsl
