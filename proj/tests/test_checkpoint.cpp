#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "segzsl/checkpoint.hpp"
#include "segzsl/error.hpp"

using namespace segzsl;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("segzsl_ckpt_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

std::string le32(std::uint32_t v) {
  std::string s(4, '\0');
  for (int i = 0; i < 4; ++i) s[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  return s;
}

std::string le64(double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  std::string s(8, '\0');
  for (int i = 0; i < 8; ++i) s[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  return s;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
  const fs::path dir = scratch("roundtrip");
  Rng rng(1);
  Checkpoint c;
  const Matrix m = rng.normal_matrix(3, 4);
  c.put("b", m);
  c.put("a", Matrix{{std::numeric_limits<double>::denorm_min(), -0.0}});
  c.put_text("notes", "leaky_relu:0.2,identity");
  c.save(dir / "c.ckpt");
  const Checkpoint back = Checkpoint::load(dir / "c.ckpt");
  CHECK(back.matrix("b") == m);
  CHECK(back.matrix("a")(0, 0) == std::numeric_limits<double>::denorm_min());
  CHECK(std::signbit(back.matrix("a")(0, 1)));
  CHECK(back.text("notes") == "leaky_relu:0.2,identity");
  CHECK_FALSE(back.has("notes"));
  CHECK(back.has_text("notes"));
  CHECK_THROWS_AS(back.matrix("absent"), FormatError);

  back.save(dir / "again.ckpt");
  CHECK(slurp(dir / "c.ckpt") == slurp(dir / "again.ckpt"));
}

TEST_CASE("checkpoint byte layout") {
  const fs::path dir = scratch("layout");
  Checkpoint c;
  c.put("w", Matrix{{1.5, -2.0}});
  c.put_text("t", "hi");
  c.save(dir / "c.ckpt");
  const std::string expected = std::string("SEGC") + le32(1) + le32(2) + '\0' + le32(1) + "w" + le32(1) + le32(2) +
                               le64(1.5) + le64(-2.0) + '\1' + le32(1) + "t" + le32(2) + "hi";
  CHECK(slurp(dir / "c.ckpt") == expected);
}

TEST_CASE("checkpoint errors are distinct") {
  const fs::path dir = scratch("errors");
  spit(dir / "magic.ckpt", "SEGZ" + le32(1) + le32(0));
  CHECK_THROWS_AS(Checkpoint::load(dir / "magic.ckpt"), BadMagicError);
  spit(dir / "version.ckpt", "SEGC" + le32(7) + le32(0));
  CHECK_THROWS_AS(Checkpoint::load(dir / "version.ckpt"), UnsupportedVersionError);
  spit(dir / "short.ckpt", "SEGC" + le32(1) + le32(1) + '\0' + le32(1) + "w" + le32(1) + le32(2) + le64(1.0));
  CHECK_THROWS_AS(Checkpoint::load(dir / "short.ckpt"), TruncatedError);
  spit(dir / "nan.ckpt", "SEGC" + le32(1) + le32(1) + '\0' + le32(1) + "w" + le32(1) + le32(1) +
                             le64(std::numeric_limits<double>::infinity()));
  CHECK_THROWS_AS(Checkpoint::load(dir / "nan.ckpt"), NonFiniteEntryError);
  CHECK_THROWS_AS(Checkpoint::load(dir / "absent.ckpt"), IoError);
}

TEST_CASE("model checkpoints reload to identical models") {
  const fs::path dir = scratch("models");
  Rng rng(2);
  DecompTrainConfig dc;
  dc.semantic_dim = 3;
  dc.residual_dim = 2;
  dc.hidden = 5;
  dc.venc_hidden = 4;
  const DecomposerModel dec = make_decomposer(6, 4, dc, rng);
  const GeneratorModel gen = make_generator(4, 4, 6, 5, rng);
  const CriticModel critic = make_critic(6, 4, 5, rng);
  const SoftmaxClassifier clf({3, 0, 8}, rng.normal_matrix(3, 3), rng.normal_matrix(1, 3));

  Checkpoint c;
  store_decomposer(c, dec);
  store_gan(c, gen, critic);
  store_classifier(c, clf);
  c.save(dir / "all.ckpt");
  const Checkpoint back = Checkpoint::load(dir / "all.ckpt");

  const DecomposerModel d2 = load_decomposer(back);
  CHECK(d2.semantic_encoder == dec.semantic_encoder);
  REQUIRE(d2.residual_encoder.has_value());
  CHECK(*d2.residual_encoder == *dec.residual_encoder);
  CHECK(d2.decoder == dec.decoder);
  CHECK(d2.venc.net == dec.venc.net);
  CHECK(d2.venc.attr_dim == 4);
  CHECK(d2.scorer.weight == dec.scorer.weight);

  const GeneratorModel g2 = load_generator(back);
  CHECK(g2.net == gen.net);
  CHECK(g2.noise_dim == 4);
  CHECK(g2.attr_dim == 4);
  CHECK(load_critic(back).net == critic.net);

  const SoftmaxClassifier c2 = load_classifier(back);
  CHECK(c2.class_ids() == clf.class_ids());
  CHECK(c2.weight() == clf.weight());
  CHECK(c2.bias() == clf.bias());

  const Matrix x = rng.normal_matrix(4, 6);
  CHECK(decompose(d2, x).semantic == decompose(dec, x).semantic);
}

TEST_CASE("decomposer without residual encoder round trips") {
  Rng rng(3);
  DecompTrainConfig dc;
  dc.semantic_dim = 3;
  dc.residual_dim = 0;
  dc.hidden = 5;
  const DecomposerModel dec = make_decomposer(6, 4, dc, rng);
  Checkpoint c;
  store_decomposer(c, dec);
  const DecomposerModel back = load_decomposer(c);
  CHECK_FALSE(back.has_residual());
  CHECK(back.decoder == dec.decoder);
}

TEST_CASE("loading a model from the wrong checkpoint names the missing section") {
  Checkpoint c;
  c.put("unrelated", Matrix(1, 1));
  try {
    load_classifier(c);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("missing section") != std::string::npos);
  }
  CHECK_THROWS_AS(load_generator(c), FormatError);
  CHECK_THROWS_AS(load_decomposer(c), FormatError);
}
