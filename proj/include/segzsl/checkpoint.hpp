#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "segzsl/classifier.hpp"
#include "segzsl/decomposer.hpp"
#include "segzsl/fgen.hpp"
#include "segzsl/matrix.hpp"
#include "segzsl/mlp.hpp"

namespace segzsl {

/// Named-section binary container for model weights.
///
/// Layout (little-endian): magic "SEGC", u32 version = 1, u32 section count,
/// then per section: u8 kind (0 = matrix, 1 = text), u32 name length, name
/// bytes, and either u32 rows, u32 cols, rows·cols binary64 values, or u32
/// byte length and UTF-8 bytes. Matrix sections come first, then text
/// sections, each in name order.
class Checkpoint {
 public:
  static constexpr std::uint32_t kVersion = 1;

  void put(const std::string& name, const Matrix& m) { matrices_[name] = m; }
  void put_text(const std::string& name, const std::string& text) { texts_[name] = text; }

  bool has(const std::string& name) const { return matrices_.contains(name); }
  bool has_text(const std::string& name) const { return texts_.contains(name); }
  /// Throws FormatError naming the missing section.
  const Matrix& matrix(const std::string& name) const;
  const std::string& text(const std::string& name) const;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  std::map<std::string, Matrix> matrices_;
  std::map<std::string, std::string> texts_;
};

void store_mlp(Checkpoint& ckpt, const std::string& prefix, const Mlp& model);
Mlp load_mlp(const Checkpoint& ckpt, const std::string& prefix);

void store_decomposer(Checkpoint& ckpt, const DecomposerModel& model);
DecomposerModel load_decomposer(const Checkpoint& ckpt);

void store_gan(Checkpoint& ckpt, const GeneratorModel& generator, const CriticModel& critic);
GeneratorModel load_generator(const Checkpoint& ckpt);
CriticModel load_critic(const Checkpoint& ckpt);

void store_classifier(Checkpoint& ckpt, const SoftmaxClassifier& clf);
SoftmaxClassifier load_classifier(const Checkpoint& ckpt);

}  // namespace segzsl
