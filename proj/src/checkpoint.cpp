#include "segzsl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "segzsl/error.hpp"

namespace segzsl {

namespace {

constexpr char kMagic[4] = {'S', 'E', 'G', 'C'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  const unsigned char* take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw TruncatedError(source_ + ": truncated checkpoint");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data()) + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32() {
    const auto* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const auto* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
  }
  std::string str(std::size_t n) {
    const auto* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }

 private:
  const std::string& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

std::string join_activations(const Mlp& model) {
  std::string out;
  for (const auto& layer : model.layers()) {
    if (!out.empty()) out += ",";
    out += layer.activation.to_string();
  }
  return out;
}

}  // namespace

const Matrix& Checkpoint::matrix(const std::string& name) const {
  auto it = matrices_.find(name);
  if (it == matrices_.end()) throw FormatError("checkpoint: missing section '" + name + "'");
  return it->second;
}

const std::string& Checkpoint::text(const std::string& name) const {
  auto it = texts_.find(name);
  if (it == texts_.end()) throw FormatError("checkpoint: missing section '" + name + "'");
  return it->second;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::string out(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(matrices_.size() + texts_.size()));
  for (const auto& [name, m] : matrices_) {
    out.push_back(0);
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (double v : m.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  for (const auto& [name, text] : texts_) {
    out.push_back(1);
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out += text;
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot write " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("short write to " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw BadMagicError(path.string() + ": bad magic, expected \"SEGC\"");
  Reader in(bytes, path.string());
  in.take(4);
  const std::uint32_t version = in.u32();
  if (version != kVersion) throw UnsupportedVersionError(path.string() + ": unsupported version " + std::to_string(version));
  Checkpoint ckpt;
  const std::uint32_t count = in.u32();
  for (std::uint32_t s = 0; s < count; ++s) {
    const unsigned char kind = *in.take(1);
    const std::string name = in.str(in.u32());
    if (kind == 0) {
      const std::size_t rows = in.u32();
      const std::size_t cols = in.u32();
      Matrix m(rows, cols);
      for (double& v : m.values()) v = std::bit_cast<double>(in.u64());
      if (!m.all_finite()) throw NonFiniteEntryError(path.string() + ": non-finite value in section '" + name + "'");
      ckpt.matrices_[name] = std::move(m);
    } else if (kind == 1) {
      ckpt.texts_[name] = in.str(in.u32());
    } else {
      throw FormatError(path.string() + ": unknown section kind " + std::to_string(kind));
    }
  }
  return ckpt;
}

void store_mlp(Checkpoint& ckpt, const std::string& prefix, const Mlp& model) {
  ckpt.put_text(prefix + ".activations", join_activations(model));
  for (std::size_t l = 0; l < model.depth(); ++l) {
    ckpt.put(prefix + "." + std::to_string(l) + ".weight", model.layers()[l].weight);
    ckpt.put(prefix + "." + std::to_string(l) + ".bias", model.layers()[l].bias);
  }
}

Mlp load_mlp(const Checkpoint& ckpt, const std::string& prefix) {
  std::vector<DenseLayer> layers;
  std::stringstream tags(ckpt.text(prefix + ".activations"));
  std::string tag;
  for (std::size_t l = 0; std::getline(tags, tag, ','); ++l) {
    layers.push_back({ckpt.matrix(prefix + "." + std::to_string(l) + ".weight"),
                      ckpt.matrix(prefix + "." + std::to_string(l) + ".bias"), Activation::parse(tag)});
  }
  return Mlp(std::move(layers));
}

void store_decomposer(Checkpoint& ckpt, const DecomposerModel& model) {
  store_mlp(ckpt, "decomposer.semantic", model.semantic_encoder);
  if (model.residual_encoder) store_mlp(ckpt, "decomposer.residual", *model.residual_encoder);
  store_mlp(ckpt, "decomposer.decoder", model.decoder);
  ckpt.put("decomposer.scorer", model.scorer.weight);
  store_mlp(ckpt, "decomposer.venc", model.venc.net);
}

DecomposerModel load_decomposer(const Checkpoint& ckpt) {
  DecomposerModel model;
  model.semantic_encoder = load_mlp(ckpt, "decomposer.semantic");
  if (ckpt.has_text("decomposer.residual.activations")) model.residual_encoder = load_mlp(ckpt, "decomposer.residual");
  model.decoder = load_mlp(ckpt, "decomposer.decoder");
  model.scorer.weight = ckpt.matrix("decomposer.scorer");
  model.venc.net = load_mlp(ckpt, "decomposer.venc");
  model.venc.attr_dim = model.venc.net.output_dim() / 2;
  return model;
}

void store_gan(Checkpoint& ckpt, const GeneratorModel& generator, const CriticModel& critic) {
  store_mlp(ckpt, "generator", generator.net);
  ckpt.put("generator.dims", Matrix{{static_cast<double>(generator.noise_dim), static_cast<double>(generator.attr_dim)}});
  store_mlp(ckpt, "critic", critic.net);
  ckpt.put("critic.dims", Matrix{{static_cast<double>(critic.feature_dim)}});
}

GeneratorModel load_generator(const Checkpoint& ckpt) {
  const Matrix& dims = ckpt.matrix("generator.dims");
  return {load_mlp(ckpt, "generator"), static_cast<std::size_t>(dims[0]), static_cast<std::size_t>(dims[1])};
}

CriticModel load_critic(const Checkpoint& ckpt) {
  CriticModel critic{load_mlp(ckpt, "critic"), static_cast<std::size_t>(ckpt.matrix("critic.dims")[0])};
  validate_critic_architecture(critic.net);
  return critic;
}

void store_classifier(Checkpoint& ckpt, const SoftmaxClassifier& clf) {
  Matrix ids(1, clf.num_classes());
  for (std::size_t k = 0; k < clf.num_classes(); ++k) ids[k] = clf.class_ids()[k];
  ckpt.put("classifier.class_ids", ids);
  ckpt.put("classifier.weight", clf.weight());
  ckpt.put("classifier.bias", clf.bias());
}

SoftmaxClassifier load_classifier(const Checkpoint& ckpt) {
  const Matrix& ids = ckpt.matrix("classifier.class_ids");
  std::vector<int> class_ids;
  for (double v : ids.values()) class_ids.push_back(static_cast<int>(v));
  return SoftmaxClassifier(std::move(class_ids), ckpt.matrix("classifier.weight"), ckpt.matrix("classifier.bias"));
}

}  // namespace segzsl
