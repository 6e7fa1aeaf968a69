#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "segzsl/decomposer.hpp"
#include "segzsl/error.hpp"
#include "segzsl/eval.hpp"

using namespace segzsl;
namespace fs = std::filesystem;

namespace {

Matrix eye(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

// Classes 0, 1 seen and 2 unseen; an identity encoder and classifier predict
// the argmax feature, so outcomes are fixed by construction.
Dataset hand_dataset() {
  Dataset ds;
  ds.features = Matrix{{1, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 0}, {0, 1, 0}};
  ds.labels = {0, 0, 0, 1, 2, 2, 1};
  ds.attrs = AttributeTable({0, 1, 2}, Matrix{{1, 0}, {0, 1}, {1, 1}});
  ds.split.seen = {0, 1};
  ds.split.unseen = {2};
  ds.split.train_idx = {0, 6};
  ds.split.test_seen_idx = {1, 2, 3};
  ds.split.test_unseen_idx = {4, 5};
  return ds;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

}  // namespace

TEST_CASE("per-class accuracy is an unweighted class mean") {
  const std::vector<int> labels{0, 0, 0, 0, 1};
  const std::vector<int> preds{0, 0, 0, 1, 0};
  const std::vector<int> classes{0, 1};
  std::map<int, double> per;
  CHECK(per_class_accuracy(preds, labels, classes, &per) == 0.375);
  CHECK(per.at(0) == 0.75);
  CHECK(per.at(1) == 0.0);

  const std::vector<int> wider{0, 1, 2};
  CHECK_THROWS_AS(per_class_accuracy(preds, labels, wider), InvalidArgument);
  const std::vector<int> narrow{0};
  CHECK_THROWS_AS(per_class_accuracy(preds, labels, narrow), InvalidArgument);
  CHECK_THROWS_AS(per_class_accuracy(std::vector<int>{0}, labels, classes), DimensionError);
}

TEST_CASE("harmonic mean reproduces the reference result rows") {
  struct Row {
    double s, u, h;
  };
  const Row rows[] = {{76.7, 61.3, 68.1}, {80.7, 59.9, 68.8}, {60.3, 53.1, 56.4}, {40.7, 45.8, 43.1}};
  for (const Row& r : rows) {
    const double h = 100.0 * harmonic_mean(r.s / 100.0, r.u / 100.0);
    INFO(r.s, " ", r.u, " -> ", h);
    CHECK(std::abs(h - r.h) <= 0.1);
  }
  CHECK(harmonic_mean(0.0, 0.0) == 0.0);
  CHECK(harmonic_mean(1.0, 0.0) == 0.0);
  CHECK(harmonic_mean(0.5, 0.5) == 0.5);
  CHECK_THROWS_AS(harmonic_mean(1.5, 0.5), InvalidArgument);
}

TEST_CASE("gzsl evaluation on a hand-built split") {
  const Dataset ds = hand_dataset();
  REQUIRE_NOTHROW(ds.validate());
  const Mlp encoder({{eye(3), Matrix(1, 3), Activation::identity()}});
  const SoftmaxClassifier clf({0, 1, 2}, eye(3), Matrix(1, 3));
  std::vector<PredictionRecord> records;
  const GzslReport r = gzsl_evaluate(clf, encoder, ds, &records, 2);
  CHECK(r.acc_s == 0.75);
  CHECK(r.acc_u == 0.5);
  CHECK(std::abs(r.acc_h - 0.6) < 1e-15);
  CHECK(r.per_class.at(0) == 0.5);
  CHECK(r.per_class.at(2) == 0.5);
  CHECK(r.test_seen_count == 3);
  CHECK(r.test_unseen_count == 2);

  REQUIRE(records.size() == 5);
  CHECK(records[4].sample_index == 5);
  CHECK(records[4].unseen);
  CHECK(records[4].predicted_class == 0);
  // Classes 1 and 2 tie behind class 0; the lower id ranks first.
  CHECK(records[0].top[1].first == 1);
  CHECK(std::abs(records[0].top[0].second - std::exp(1.0) / (std::exp(1.0) + 2.0)) < 1e-15);

  const SoftmaxClassifier seen_only({0, 1}, Matrix(2, 3), Matrix(1, 2));
  CHECK_THROWS_AS(gzsl_evaluate(seen_only, encoder, ds), InvalidArgument);
}

TEST_CASE("report json round trip") {
  GzslReport r;
  r.acc_s = 0.1 + 0.2;
  r.acc_u = 1.0 / 3.0;
  r.acc_h = harmonic_mean(r.acc_s, r.acc_u);
  r.per_class = {{0, 0.25}, {12, 2.0 / 3.0}};
  r.test_seen_count = 40;
  r.test_unseen_count = 50;
  const GzslReport back = GzslReport::from_json(r.to_json());
  CHECK(back.acc_s == r.acc_s);
  CHECK(back.acc_u == r.acc_u);
  CHECK(back.acc_h == r.acc_h);
  CHECK(back.per_class == r.per_class);
  CHECK(back.test_unseen_count == 50);
  CHECK(back.to_json() == r.to_json());
}

TEST_CASE("predictions csv layout") {
  const Dataset ds = hand_dataset();
  const Mlp encoder({{eye(3), Matrix(1, 3), Activation::identity()}});
  const SoftmaxClassifier clf({0, 1, 2}, eye(3), Matrix(1, 3));
  std::vector<PredictionRecord> records;
  gzsl_evaluate(clf, encoder, ds, &records, 2);
  const fs::path dir = fs::temp_directory_path() / "segzsl_eval_csv";
  fs::create_directories(dir);
  write_predictions_csv(records, dir / "p.csv");
  const auto lines = read_lines(dir / "p.csv");
  REQUIRE(lines.size() == 6);
  CHECK(lines[0] == "sample_id,split,true_class,predicted_class,top1_class,top1_prob,top2_class,top2_prob");
  CHECK(lines[1].rfind("1,seen,0,0,0,", 0) == 0);
  CHECK(lines[5].rfind("5,unseen,2,0,0,", 0) == 0);
}

TEST_CASE("linear probe") {
  Rng rng(1);
  const Matrix z = rng.normal_matrix(200, 4);
  const Matrix w = rng.normal_matrix(4, 2);
  const Matrix exact = matmul(z, w);
  CHECK(linear_probe(z, exact) > 0.9999);

  const Matrix unrelated = rng.normal_matrix(200, 2);
  CHECK(linear_probe(z, unrelated) < 0.1);
  CHECK(linear_probe(z, Matrix(200, 2, 3.0)) == 0.0);
  CHECK_THROWS_AS(linear_probe(z, Matrix(10, 2)), DimensionError);
}

TEST_CASE("linear probe matches a one-dimensional closed form") {
  // Scalar ridge: slope = Σ xc·yc / (Σ xc² + λ) on even rows, R² on odd rows.
  const Matrix z{{0}, {1}, {1}, {2}, {3}, {2}, {4}, {5}};
  const Matrix y{{1}, {2.5}, {2}, {3}, {6}, {5}, {9}, {11}};
  const double xs[] = {0, 1, 3, 4}, ys[] = {1, 2, 6, 9};
  const double mx = 2.0, my = 4.5;
  double sxy = 0.0, sxx = 0.0;
  for (int i = 0; i < 4; ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  const double slope = sxy / (sxx + 1e-3);
  const double xt[] = {1, 2, 2, 5}, yt[] = {2.5, 3, 5, 11};
  const double yt_mean = (2.5 + 3 + 5 + 11) / 4.0;
  double ss_res = 0.0, ss_tot = 0.0;
  for (int i = 0; i < 4; ++i) {
    const double pred = my + slope * (xt[i] - mx);
    ss_res += (yt[i] - pred) * (yt[i] - pred);
    ss_tot += (yt[i] - yt_mean) * (yt[i] - yt_mean);
  }
  CHECK(std::abs(linear_probe(z, y) - (1.0 - ss_res / ss_tot)) < 1e-12);
}

TEST_CASE("embedding export files") {
  Dataset ds = hand_dataset();
  DecompTrainConfig c;
  c.semantic_dim = 2;
  c.residual_dim = 3;
  c.hidden = 4;
  Rng rng(2);
  const DecomposerModel m = make_decomposer(3, 2, c, rng);
  const fs::path dir = fs::temp_directory_path() / "segzsl_eval_embed";
  fs::remove_all(dir);
  export_embeddings(m, ds, dir);
  const auto zs = read_lines(dir / "z_s.csv");
  const auto zr = read_lines(dir / "z_r.csv");
  CHECK(zs.size() == 8);
  CHECK(zs[0] == "sample_index,class_id,z_0,z_1");
  CHECK(zr[0] == "sample_index,class_id,z_0,z_1,z_2");
  CHECK(zs[7].rfind("6,1,", 0) == 0);

  std::stringstream row(zs[1]);
  std::string cell;
  std::vector<double> vals;
  while (std::getline(row, cell, ',')) vals.push_back(std::stod(cell));
  const Latents lat = decompose(m, ds.features);
  CHECK(vals[2] == lat.semantic(0, 0));
  CHECK(vals[3] == lat.semantic(0, 1));
}
