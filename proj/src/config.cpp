#include "segzsl/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "segzsl/error.hpp"
#include "segzsl/rng.hpp"

namespace segzsl {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

/// Reads fields out of one JSON object and remembers which keys were used,
/// so leftovers can be reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  template <typename T>
  void read(const char* key, T& field) {
    used_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_unsigned() && !(it->is_number_integer() && it->template get<long long>() >= 0))
          throw ConfigError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw ConfigError("");
      } else {
        if (!it->is_string()) throw ConfigError("");
      }
      field = it->template get<T>();
    } catch (const std::exception&) {
      throw ConfigError(where(key) + ": wrong type (" + std::string(it->type_name()) + ")");
    }
  }

  /// Returns the sub-object under `key`, or null when absent.
  const json* child(const char* key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string where(const char* key = nullptr) const {
    std::string p = path_.empty() ? "config" : path_;
    if (key) p += std::string(".") + key;
    return p;
  }
  const std::string& path() const { return path_; }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!used_.contains(key)) throw ConfigError(where(key.c_str()) + ": unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

std::string join(const std::string& path, const char* key) { return path.empty() ? key : path + "." + key; }

void read_adam(const json* j, const std::string& path, AdamConfig& adam) {
  if (!j) return;
  ObjectReader r(*j, path);
  r.read("lr", adam.lr);
  r.read("beta1", adam.beta1);
  r.read("beta2", adam.beta2);
  r.read("eps", adam.epsilon);
  r.finish();
}

ordered_json adam_json(const AdamConfig& adam) {
  return {{"lr", adam.lr}, {"beta1", adam.beta1}, {"beta2", adam.beta2}, {"eps", adam.epsilon}};
}

void read_synthetic(const json* j, SyntheticBenchSpec& s) {
  if (!j) return;
  ObjectReader r(*j, "synthetic");
  r.read("num_seen", s.num_seen);
  r.read("num_unseen", s.num_unseen);
  r.read("samples_per_class", s.samples_per_class);
  r.read("attr_dim", s.attr_dim);
  r.read("semantic_latent_dim", s.semantic_latent_dim);
  r.read("nuisance_dim", s.nuisance_dim);
  r.read("feature_dim", s.feature_dim);
  r.read("nuisance_scale", s.nuisance_scale);
  r.read("noise_scale", s.noise_scale);
  r.read("train_fraction", s.train_fraction);
  r.read("mixing_seed", s.mixing_seed);
  r.finish();
}

void read_decomposer(const json* j, DecompTrainConfig& d) {
  if (!j) return;
  ObjectReader r(*j, "decomposer");
  r.read("lambda_s", d.weights.lambda_s);
  r.read("lambda_r", d.weights.lambda_r);
  r.read("lambda_sim", d.weights.lambda_sim);
  r.read("semantic_dim", d.semantic_dim);
  r.read("residual_dim", d.residual_dim);
  r.read("hidden", d.hidden);
  r.read("venc_hidden", d.venc_hidden);
  r.read("batch_size", d.batch_size);
  r.read("samples_per_class", d.samples_per_class);
  r.read("epochs", d.epochs);
  r.read("venc_steps", d.venc_steps);
  read_adam(r.child("adam"), join(r.path(), "adam"), d.adam);
  read_adam(r.child("venc_adam"), join(r.path(), "venc_adam"), d.venc_adam);
  r.finish();
}

void read_generator(const json* j, GanTrainConfig& g) {
  if (!j) return;
  ObjectReader r(*j, "generator");
  r.read("lambda_gp", g.weights.lambda_gp);
  r.read("lambda_mi", g.weights.lambda_g_mi);
  r.read("lambda_sim", g.weights.lambda_g_sim);
  r.read("critic_steps", g.critic_steps);
  r.read("noise_dim", g.noise_dim);
  r.read("hidden", g.hidden);
  r.read("batch_size", g.batch_size);
  r.read("epochs", g.epochs);
  r.read("divergence_limit", g.divergence_limit);
  read_adam(r.child("generator_adam"), join(r.path(), "generator_adam"), g.generator_adam);
  read_adam(r.child("critic_adam"), join(r.path(), "critic_adam"), g.critic_adam);
  r.finish();
}

void read_classifier(const json* j, ClassifierConfig& c) {
  if (!j) return;
  ObjectReader r(*j, "classifier");
  r.read("batch_size", c.batch_size);
  r.read("epochs", c.epochs);
  r.read("weight_decay", c.weight_decay);
  read_adam(r.child("adam"), join(r.path(), "adam"), c.adam);
  r.finish();
}

void read_eval(const json* j, EvalOptions& e) {
  if (!j) return;
  ObjectReader r(*j, "eval");
  r.read("top_k", e.top_k);
  r.read("synthetic_per_class", e.synthetic_per_class);
  r.finish();
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

void ExperimentConfig::validate() const {
  require(preset == "paper" || preset == "desk", "preset: must be \"paper\" or \"desk\", got \"" + preset + "\"");
  if (!dataset.empty()) {
    require(std::filesystem::is_directory(dataset), "dataset: directory not found: " + dataset);
  } else {
    try {
      synthetic.validate();
    } catch (const Error& e) {
      throw ConfigError(std::string("synthetic: ") + e.what());
    }
  }
  auto wrap = [](const char* section, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(std::string(section) + ": " + e.what());
    }
  };
  wrap("decomposer", [&] { decomposer.validate(); });
  wrap("generator", [&] { generator.validate(); });
  require(classifier.batch_size >= 2, "classifier.batch_size: must be >= 2");
  require(classifier.epochs >= 1, "classifier.epochs: must be >= 1");
  require(classifier.adam.lr > 0.0, "classifier.adam.lr: must be positive");
  require(classifier.weight_decay >= 0.0, "classifier.weight_decay: must be nonnegative");
  require(eval.top_k >= 1, "eval.top_k: must be >= 1");
  require(eval.synthetic_per_class >= 1, "eval.synthetic_per_class: must be >= 1");
}

void ExperimentConfig::resolve() {
  synthetic.normalize_attributes = normalize_attributes;
  decomposer.seed = mix_seed(seed, 1);
  generator.seed = mix_seed(seed, 2);
  classifier.seed = mix_seed(seed, 3);
}

ExperimentConfig preset_config(std::string_view name) {
  ExperimentConfig c;
  c.preset = std::string(name);
  if (name == "paper") {
    c.decomposer.hidden = 4096;
    c.decomposer.venc_hidden = 4096;
    c.generator.hidden = 4096;
    return c;
  }
  if (name != "desk") throw ConfigError("preset: must be \"paper\" or \"desk\", got \"" + std::string(name) + "\"");
  c.decomposer.hidden = 64;
  c.decomposer.venc_hidden = 64;
  c.decomposer.epochs = 40;
  c.decomposer.adam.lr = 1e-3;
  c.decomposer.venc_adam.lr = 1e-3;
  c.generator.hidden = 64;
  c.generator.epochs = 40;
  c.generator.generator_adam.lr = 1e-3;
  c.generator.critic_adam.lr = 1e-3;
  c.classifier.epochs = 30;
  c.classifier.adam.lr = 1e-3;
  return c;
}

std::string config_to_json(const ExperimentConfig& c) {
  ordered_json j;
  j["preset"] = c.preset;
  j["seed"] = c.seed;
  j["dataset"] = c.dataset;
  j["normalize_attributes"] = c.normalize_attributes;
  const auto& s = c.synthetic;
  j["synthetic"] = {{"num_seen", s.num_seen},
                    {"num_unseen", s.num_unseen},
                    {"samples_per_class", s.samples_per_class},
                    {"attr_dim", s.attr_dim},
                    {"semantic_latent_dim", s.semantic_latent_dim},
                    {"nuisance_dim", s.nuisance_dim},
                    {"feature_dim", s.feature_dim},
                    {"nuisance_scale", s.nuisance_scale},
                    {"noise_scale", s.noise_scale},
                    {"train_fraction", s.train_fraction},
                    {"mixing_seed", s.mixing_seed}};
  const auto& d = c.decomposer;
  j["decomposer"] = {{"lambda_s", d.weights.lambda_s},
                     {"lambda_r", d.weights.lambda_r},
                     {"lambda_sim", d.weights.lambda_sim},
                     {"semantic_dim", d.semantic_dim},
                     {"residual_dim", d.residual_dim},
                     {"hidden", d.hidden},
                     {"venc_hidden", d.venc_hidden},
                     {"batch_size", d.batch_size},
                     {"samples_per_class", d.samples_per_class},
                     {"epochs", d.epochs},
                     {"venc_steps", d.venc_steps},
                     {"adam", adam_json(d.adam)},
                     {"venc_adam", adam_json(d.venc_adam)}};
  const auto& g = c.generator;
  j["generator"] = {{"lambda_gp", g.weights.lambda_gp},
                    {"lambda_mi", g.weights.lambda_g_mi},
                    {"lambda_sim", g.weights.lambda_g_sim},
                    {"critic_steps", g.critic_steps},
                    {"noise_dim", g.noise_dim},
                    {"hidden", g.hidden},
                    {"batch_size", g.batch_size},
                    {"epochs", g.epochs},
                    {"divergence_limit", g.divergence_limit},
                    {"generator_adam", adam_json(g.generator_adam)},
                    {"critic_adam", adam_json(g.critic_adam)}};
  const auto& k = c.classifier;
  j["classifier"] = {
      {"batch_size", k.batch_size}, {"epochs", k.epochs}, {"weight_decay", k.weight_decay}, {"adam", adam_json(k.adam)}};
  j["eval"] = {{"top_k", c.eval.top_k}, {"synthetic_per_class", c.eval.synthetic_per_class}};
  return j.dump(2) + "\n";
}

ExperimentConfig parse_config(const std::string& text, const ExperimentConfig& base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  ExperimentConfig c = base;
  ObjectReader r(j, "");
  std::string preset = base.preset;
  r.read("preset", preset);
  if (preset != base.preset) c = preset_config(preset);
  r.read("seed", c.seed);
  r.read("dataset", c.dataset);
  r.read("normalize_attributes", c.normalize_attributes);
  read_synthetic(r.child("synthetic"), c.synthetic);
  read_decomposer(r.child("decomposer"), c.decomposer);
  read_generator(r.child("generator"), c.generator);
  read_classifier(r.child("classifier"), c.classifier);
  read_eval(r.child("eval"), c.eval);
  r.finish();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, const ExperimentConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), base);
}

}  // namespace segzsl
