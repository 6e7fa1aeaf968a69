#include "segzsl/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "segzsl/error.hpp"
#include "segzsl/rng.hpp"

namespace segzsl {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'S', 'E', 'G', 'Z'};
constexpr std::size_t kHeaderBytes = 16;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    cells.push_back(cell);
  }
  return cells;
}

long long parse_int(const std::string& text, const fs::path& file, std::size_t line) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw DatasetError(file.string() + ":" + std::to_string(line) + ": expected integer, got '" + text + "'");
  }
}

double parse_double(const std::string& text, const fs::path& file, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw DatasetError(file.string() + ":" + std::to_string(line) + ": expected number, got '" + text + "'");
  }
}

std::ifstream open_required(const fs::path& path) {
  if (!fs::exists(path)) throw DatasetError("missing dataset file: " + path.string());
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open dataset file: " + path.string());
  return in;
}

std::vector<std::size_t> to_indices(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array()) throw DatasetError(std::string("split.json: missing array '") + key + "'");
  std::vector<std::size_t> out;
  for (const auto& v : j[key]) {
    if (!v.is_number_integer() || v.get<long long>() < 0)
      throw DatasetError(std::string("split.json: '") + key + "' must hold non-negative integers");
    out.push_back(v.get<std::size_t>());
  }
  return out;
}

std::vector<int> to_classes(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array()) throw DatasetError(std::string("split.json: missing array '") + key + "'");
  std::vector<int> out;
  for (const auto& v : j[key]) {
    if (!v.is_number_integer()) throw DatasetError(std::string("split.json: '") + key + "' must hold integers");
    out.push_back(v.get<int>());
  }
  return out;
}

}  // namespace

std::vector<int> Dataset::labels_at(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(labels.at(i));
  return out;
}

std::vector<int> Dataset::all_classes() const {
  std::vector<int> out = split.seen;
  out.insert(out.end(), split.unseen.begin(), split.unseen.end());
  return out;
}

void Dataset::validate() const {
  if (features.rows() != labels.size())
    throw DatasetError("feature rows (" + std::to_string(features.rows()) + ") do not match label count (" +
                       std::to_string(labels.size()) + ")");
  if (!features.all_finite()) throw DatasetError("features contain non-finite values");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!attrs.contains(labels[i]))
      throw DatasetError("sample " + std::to_string(i) + " has label " + std::to_string(labels[i]) +
                         " without an attribute row");
  }

  const std::set<int> seen(split.seen.begin(), split.seen.end());
  const std::set<int> unseen(split.unseen.begin(), split.unseen.end());
  if (seen.size() != split.seen.size() || unseen.size() != split.unseen.size())
    throw DatasetError("split lists a class more than once");
  for (int c : split.seen) {
    if (unseen.contains(c)) throw DatasetError("class " + std::to_string(c) + " is listed as both seen and unseen");
    if (!attrs.contains(c)) throw DatasetError("seen class " + std::to_string(c) + " has no attribute row");
  }
  for (int c : split.unseen)
    if (!attrs.contains(c)) throw DatasetError("unseen class " + std::to_string(c) + " has no attribute row");

  std::vector<int> owner(labels.size(), -1);
  auto check_set = [&](const std::vector<std::size_t>& idx, int tag, const char* name, const std::set<int>& allowed,
                       const char* allowed_name) {
    for (std::size_t i : idx) {
      if (i >= labels.size())
        throw DatasetError(std::string(name) + " index " + std::to_string(i) + " is out of range");
      if (owner[i] != -1)
        throw DatasetError("sample " + std::to_string(i) + " appears in more than one split index set");
      owner[i] = tag;
      if (!allowed.contains(labels[i]))
        throw DatasetError(std::string(name) + " sample " + std::to_string(i) + " has class " +
                           std::to_string(labels[i]) + " which is not a " + allowed_name + " class");
    }
  };
  check_set(split.train_idx, 0, "train", seen, "seen");
  check_set(split.test_seen_idx, 1, "test-seen", seen, "seen");
  check_set(split.test_unseen_idx, 2, "test-unseen", unseen, "unseen");
}

void write_feature_matrix(const Matrix& m, const fs::path& path) {
  std::string out;
  out.reserve(kHeaderBytes + 4 * m.size());
  out.append(kMagic, 4);
  put_u32(out, kFeatureFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (double v : m.values()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot write " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("short write to " + path.string());
}

Matrix load_feature_matrix(const fs::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());

  if (bytes.size() < 4 || std::memcmp(p, kMagic, 4) != 0)
    throw BadMagicError(path.string() + ": bad magic, expected \"SEGZ\"");
  if (bytes.size() < kHeaderBytes) throw TruncatedError(path.string() + ": truncated header");
  const std::uint32_t version = get_u32(p + 4);
  if (version != kFeatureFormatVersion)
    throw UnsupportedVersionError(path.string() + ": unsupported version " + std::to_string(version));
  const std::size_t rows = get_u32(p + 8);
  const std::size_t cols = get_u32(p + 12);
  const std::size_t expected = kHeaderBytes + 4 * rows * cols;
  if (bytes.size() < expected)
    throw TruncatedError(path.string() + ": header declares " + std::to_string(rows) + "x" + std::to_string(cols) +
                         " but payload holds " + std::to_string((bytes.size() - kHeaderBytes) / 4) + " values");

  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows * cols; ++i) {
    const float v = std::bit_cast<float>(get_u32(p + kHeaderBytes + 4 * i));
    if (!std::isfinite(v))
      throw NonFiniteEntryError(path.string() + ": non-finite entry at row " + std::to_string(i / cols) + ", col " +
                                std::to_string(i % cols));
    m[i] = v;
  }
  return m;
}

void write_labels_csv(std::span<const int> labels, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "sample_index,class_id\n";
  for (std::size_t i = 0; i < labels.size(); ++i) out << i << ',' << labels[i] << '\n';
}

std::vector<int> read_labels_csv(const fs::path& path) {
  std::ifstream in = open_required(path);
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != std::vector<std::string>{"sample_index", "class_id"})
    throw DatasetError(path.string() + ": expected header 'sample_index,class_id'");
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 2) throw DatasetError(path.string() + ":" + std::to_string(line_no) + ": expected 2 columns");
    const long long index = parse_int(cells[0], path, line_no);
    if (index != static_cast<long long>(labels.size()))
      throw DatasetError(path.string() + ":" + std::to_string(line_no) + ": sample_index out of sequence");
    labels.push_back(static_cast<int>(parse_int(cells[1], path, line_no)));
  }
  return labels;
}

Dataset load_dataset(const fs::path& dir, LoadOptions options) {
  for (const char* name : {"features.bin", "labels.csv", "attributes.csv", "split.json"}) {
    if (!fs::exists(dir / name)) throw DatasetError("missing dataset file: " + (dir / name).string());
  }
  Dataset ds;
  ds.features = load_feature_matrix(dir / "features.bin");
  ds.labels = read_labels_csv(dir / "labels.csv");

  {
    const fs::path path = dir / "attributes.csv";
    std::ifstream in = open_required(path);
    std::string line;
    if (!std::getline(in, line)) throw DatasetError(path.string() + ": empty file");
    const auto header = split_csv_line(line);
    if (header.size() < 2 || header[0] != "class_id")
      throw DatasetError(path.string() + ": expected header 'class_id,a_0,...'");
    for (std::size_t j = 1; j < header.size(); ++j) {
      if (header[j] != "a_" + std::to_string(j - 1))
        throw DatasetError(path.string() + ": unexpected column '" + header[j] + "'");
    }
    const std::size_t dim = header.size() - 1;
    std::vector<int> ids;
    std::vector<double> values;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty() || line == "\r") continue;
      const auto cells = split_csv_line(line);
      if (cells.size() != dim + 1)
        throw DatasetError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(dim + 1) +
                           " columns");
      ids.push_back(static_cast<int>(parse_int(cells[0], path, line_no)));
      for (std::size_t j = 1; j <= dim; ++j) {
        const double v = parse_double(cells[j], path, line_no);
        if (!std::isfinite(v))
          throw DatasetError(path.string() + ":" + std::to_string(line_no) + ": non-finite attribute");
        values.push_back(v);
      }
    }
    try {
      ds.attrs = AttributeTable(ids, Matrix(ids.size(), dim, std::move(values)));
    } catch (const Error& e) {
      throw DatasetError(path.string() + ": " + e.what());
    }
    if (options.normalize_attributes) ds.attrs.normalize_rows();
  }

  {
    const fs::path path = dir / "split.json";
    std::ifstream in = open_required(path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw DatasetError(path.string() + ": " + e.what());
    }
    ds.split.seen = to_classes(j, "seen");
    ds.split.unseen = to_classes(j, "unseen");
    ds.split.train_idx = to_indices(j, "train_idx");
    ds.split.test_seen_idx = to_indices(j, "test_seen_idx");
    ds.split.test_unseen_idx = to_indices(j, "test_unseen_idx");
  }

  ds.validate();
  return ds;
}

void save_dataset(const Dataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  write_feature_matrix(ds.features, dir / "features.bin");
  write_labels_csv(ds.labels, dir / "labels.csv");
  {
    std::ofstream out(dir / "attributes.csv");
    if (!out) throw IoError("cannot write " + (dir / "attributes.csv").string());
    out << "class_id";
    for (std::size_t j = 0; j < ds.attrs.dim(); ++j) out << ",a_" << j;
    out << '\n' << std::setprecision(17);
    for (std::size_t r = 0; r < ds.attrs.num_classes(); ++r) {
      out << ds.attrs.class_ids()[r];
      for (double v : ds.attrs.values().row(r)) out << ',' << v;
      out << '\n';
    }
  }
  nlohmann::json j;
  j["seen"] = ds.split.seen;
  j["unseen"] = ds.split.unseen;
  j["train_idx"] = ds.split.train_idx;
  j["test_seen_idx"] = ds.split.test_seen_idx;
  j["test_unseen_idx"] = ds.split.test_unseen_idx;
  std::ofstream out(dir / "split.json");
  if (!out) throw IoError("cannot write " + (dir / "split.json").string());
  out << j.dump(1) << '\n';
}

void SyntheticBenchSpec::validate() const {
  if (num_seen < 1 || num_unseen < 1 || samples_per_class < 1 || attr_dim < 1 || semantic_latent_dim < 1 ||
      feature_dim < 1)
    throw InvalidArgument("synthetic benchmark: class counts, samples per class and dims must be >= 1");
  if (!(noise_scale >= 0.0) || !(nuisance_scale >= 0.0))
    throw InvalidArgument("synthetic benchmark: noise and nuisance scales must be >= 0");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0))
    throw InvalidArgument("synthetic benchmark: train_fraction must be in (0, 1]");
}

SyntheticBenchmark make_synthetic_benchmark(const SyntheticBenchSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng mixing(spec.mixing_seed);
  const Matrix q = mixing.normal_matrix(spec.attr_dim, spec.semantic_latent_dim);
  const Matrix a_map = mixing.normal_matrix(spec.feature_dim, spec.attr_dim);
  const double b_std = spec.nuisance_dim > 0 ? spec.nuisance_scale / std::sqrt(static_cast<double>(spec.nuisance_dim)) : 0.0;
  const Matrix b_map = mixing.normal_matrix(spec.feature_dim, spec.nuisance_dim, b_std);

  Rng rng(seed);
  const std::size_t num_classes = spec.num_seen + spec.num_unseen;
  std::vector<int> class_ids(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) class_ids[c] = static_cast<int>(c);

  const Matrix latent = rng.normal_matrix(num_classes, spec.semantic_latent_dim);
  Matrix attr_values = matmul_nt(latent, q);
  AttributeTable attrs(class_ids, attr_values);
  if (spec.normalize_attributes) attrs.normalize_rows();

  const std::size_t n = num_classes * spec.samples_per_class;
  SyntheticBenchmark bench;
  Dataset& ds = bench.dataset;
  ds.attrs = attrs;
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = class_ids[i / spec.samples_per_class];
  bench.sample_attributes = attrs.gather(ds.labels);
  bench.nuisance = rng.normal_matrix(n, spec.nuisance_dim);
  const Matrix noise = rng.normal_matrix(n, spec.feature_dim, spec.noise_scale);

  Matrix x = matmul_nt(bench.sample_attributes, a_map);
  if (spec.nuisance_dim > 0) add_inplace(x, matmul_nt(bench.nuisance, b_map));
  add_inplace(x, noise);
  for (double& v : x.values()) v = static_cast<double>(static_cast<float>(std::max(v, 0.0)));
  ds.features = std::move(x);

  const auto per_train = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(spec.train_fraction * static_cast<double>(spec.samples_per_class))));
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::vector<std::size_t> members(spec.samples_per_class);
    for (std::size_t k = 0; k < members.size(); ++k) members[k] = c * spec.samples_per_class + k;
    if (c < spec.num_seen) {
      ds.split.seen.push_back(class_ids[c]);
      rng.shuffle(members);
      std::sort(members.begin(), members.begin() + static_cast<std::ptrdiff_t>(std::min(per_train, members.size())));
      std::sort(members.begin() + static_cast<std::ptrdiff_t>(std::min(per_train, members.size())), members.end());
      for (std::size_t k = 0; k < members.size(); ++k)
        (k < per_train ? ds.split.train_idx : ds.split.test_seen_idx).push_back(members[k]);
    } else {
      ds.split.unseen.push_back(class_ids[c]);
      ds.split.test_unseen_idx.insert(ds.split.test_unseen_idx.end(), members.begin(), members.end());
    }
  }
  ds.validate();
  return bench;
}

}  // namespace segzsl
