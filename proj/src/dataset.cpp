#include "compnet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <string_view>

#include "compnet/error.hpp"
#include "compnet/io_util.hpp"

namespace compnet::data {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

std::size_t image_size(const ImageShape& s) { return s[0] * s[1] * s[2]; }

template <typename T>
T manifest_get(const json& m, const char* key) {
  if (!m.contains(key)) throw FormatError(std::string("manifest missing key '") + key + "'");
  try {
    return m.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest key '") + key + "': " + e.what());
  }
}

std::vector<std::string> read_lines(const fs::path& path) {
  const std::string text = io::read_file(path);
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

}  // namespace

void Dataset::validate() const {
  if (n_classes < 2) throw DataError("dataset needs at least 2 classes");
  for (std::size_t d : image_shape) {
    if (d == 0) throw DataError("dataset image shape has a zero dimension");
  }
  const ad::Shape expected{image_shape[0], image_shape[1], image_shape[2]};
  for (const Sample& s : samples) {
    if (s.image.shape() != expected) {
      throw DataError("sample " + s.id + " has image shape " + ad::to_string(s.image.shape()));
    }
    if (s.features.size() != n_features) {
      throw DataError("sample " + s.id + " has " + std::to_string(s.features.size()) + " features");
    }
    if (s.label >= n_classes) {
      throw DataError("sample " + s.id + " has label " + std::to_string(s.label) +
                      " but dataset has " + std::to_string(n_classes) + " classes");
    }
    if (!s.image.all_finite() ||
        !std::all_of(s.features.begin(), s.features.end(), [](double v) { return std::isfinite(v); })) {
      throw DataError("sample " + s.id + " has non-finite values");
    }
  }
}

Tensor Dataset::images(std::span<const std::size_t> indices) const {
  const std::size_t per = image_size(image_shape);
  std::vector<double> out;
  out.reserve(indices.size() * per);
  for (std::size_t i : indices) {
    const auto d = samples.at(i).image.data();
    out.insert(out.end(), d.begin(), d.end());
  }
  return Tensor({indices.size(), image_shape[0], image_shape[1], image_shape[2]}, std::move(out));
}

Tensor Dataset::features(std::span<const std::size_t> indices) const {
  std::vector<double> out;
  out.reserve(indices.size() * n_features);
  for (std::size_t i : indices) {
    const auto& f = samples.at(i).features;
    out.insert(out.end(), f.begin(), f.end());
  }
  return Tensor({indices.size(), n_features}, std::move(out));
}

std::vector<std::size_t> Dataset::labels(std::span<const std::size_t> indices) const {
  std::vector<std::size_t> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(samples.at(i).label);
  return out;
}

std::vector<std::size_t> Dataset::all_indices() const {
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.name = name;
  out.image_shape = image_shape;
  out.n_features = n_features;
  out.n_classes = n_classes;
  out.provenance = provenance;
  out.samples.reserve(indices.size());
  for (std::size_t i : indices) out.samples.push_back(samples.at(i));
  return out;
}

fs::path save_dataset(const Dataset& ds, const fs::path& dir) {
  ds.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create dataset directory " + dir.string());
  }

  std::string images;
  images.reserve(ds.size() * image_size(ds.image_shape) * 8);
  for (const Sample& s : ds.samples) {
    for (double v : s.image.data()) io::append_le_f64(images, v);
  }

  std::string features = "id";
  for (std::size_t j = 0; j < ds.n_features; ++j) features += ",f" + std::to_string(j);
  features += '\n';
  std::string labels = "id,label\n";
  for (const Sample& s : ds.samples) {
    features += s.id;
    for (double v : s.features) {
      features += ',';
      features += io::format_double(v);
    }
    features += '\n';
    labels += s.id + ',' + std::to_string(s.label) + '\n';
  }

  const json manifest = {
      {"format_version", kFormatVersion},
      {"name", ds.name},
      {"n_samples", ds.size()},
      {"image_shape", ds.image_shape},
      {"n_features", ds.n_features},
      {"n_classes", ds.n_classes},
      {"files", {{"images", "images.bin"}, {"features", "features.csv"}, {"labels", "labels.csv"}}},
      {"provenance", ds.provenance},
  };

  io::write_file_atomic(dir / "images.bin", images);
  io::write_file_atomic(dir / "features.csv", features);
  io::write_file_atomic(dir / "labels.csv", labels);
  const fs::path manifest_path = dir / "manifest.json";
  io::write_file_atomic(manifest_path, manifest.dump(2) + "\n");
  return manifest_path;
}

Dataset load_dataset(const fs::path& manifest_arg) {
  const fs::path manifest_path =
      fs::is_directory(manifest_arg) ? manifest_arg / "manifest.json" : manifest_arg;
  if (!fs::exists(manifest_path)) throw IoError("missing manifest " + manifest_path.string());
  const fs::path dir = manifest_path.parent_path();

  json m;
  try {
    m = json::parse(io::read_file(manifest_path));
  } catch (const json::parse_error& e) {
    throw FormatError("manifest is not valid JSON: " + std::string(e.what()));
  }
  if (manifest_get<int>(m, "format_version") != kFormatVersion) {
    throw FormatError("unsupported dataset format_version");
  }

  Dataset ds;
  ds.name = m.value("name", std::string{});
  const auto n = manifest_get<std::size_t>(m, "n_samples");
  ds.image_shape = manifest_get<ImageShape>(m, "image_shape");
  ds.n_features = manifest_get<std::size_t>(m, "n_features");
  ds.n_classes = manifest_get<std::size_t>(m, "n_classes");
  ds.provenance = m.value("provenance", json::object());
  const json files = manifest_get<json>(m, "files");
  const auto file_of = [&](const char* key) { return dir / manifest_get<std::string>(files, key); };
  for (std::size_t d : ds.image_shape) {
    if (d == 0) throw FormatError("manifest image_shape has a zero dimension");
  }

  const fs::path images_path = file_of("images");
  const fs::path features_path = file_of("features");
  const fs::path labels_path = file_of("labels");
  for (const fs::path& p : {images_path, features_path, labels_path}) {
    if (!fs::exists(p)) throw IoError("missing dataset file " + p.string());
  }

  const std::string images = io::read_file(images_path);
  const std::size_t per = image_size(ds.image_shape);
  if (images.size() != n * per * 8) {
    throw FormatError("images.bin holds " + std::to_string(images.size()) + " bytes, manifest implies " +
                      std::to_string(n * per * 8));
  }

  const std::vector<std::string> feature_lines = read_lines(features_path);
  const std::vector<std::string> label_lines = read_lines(labels_path);
  if (feature_lines.empty() || label_lines.empty()) throw FormatError("csv file without header");
  if (feature_lines.size() - 1 != n || label_lines.size() - 1 != n) {
    throw FormatError("csv row count disagrees with manifest n_samples");
  }
  const auto header = io::split_csv_line(feature_lines[0]);
  if (header.size() != ds.n_features + 1 || header[0] != "id") {
    throw FormatError("features.csv header does not match n_features");
  }
  if (io::split_csv_line(label_lines[0]) != std::vector<std::string>{"id", "label"}) {
    throw FormatError("labels.csv header must be 'id,label'");
  }

  ds.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto frow = io::split_csv_line(feature_lines[i + 1]);
    const auto lrow = io::split_csv_line(label_lines[i + 1]);
    if (frow.size() != ds.n_features + 1) {
      throw FormatError("features.csv row " + std::to_string(i + 1) + " has wrong width");
    }
    if (lrow.size() != 2 || lrow[0] != frow[0]) {
      throw FormatError("labels.csv row " + std::to_string(i + 1) + " does not match features.csv");
    }
    Sample s;
    s.id = frow[0];
    s.features.reserve(ds.n_features);
    for (std::size_t j = 1; j < frow.size(); ++j) s.features.push_back(io::parse_double(frow[j]));
    long long label = -1;
    try {
      std::size_t used = 0;
      label = std::stoll(lrow[1], &used);
      if (used != lrow[1].size()) throw FormatError("");
    } catch (const std::exception&) {
      throw FormatError("labels.csv row " + std::to_string(i + 1) + " has a non-integer label");
    }
    if (label < 0 || static_cast<std::size_t>(label) >= ds.n_classes) {
      throw DataError("sample " + s.id + " has label " + lrow[1] + " outside [0, " +
                      std::to_string(ds.n_classes) + ")");
    }
    s.label = static_cast<std::size_t>(label);
    std::vector<double> pixels(per);
    for (std::size_t k = 0; k < per; ++k) pixels[k] = io::read_le_f64(images.data() + (i * per + k) * 8);
    s.image = Tensor({ds.image_shape[0], ds.image_shape[1], ds.image_shape[2]}, std::move(pixels));
    ds.samples.push_back(std::move(s));
  }
  ds.validate();
  return ds;
}

Normalizer::Normalizer(std::vector<double> mean, std::vector<double> stddev)
    : mean_(std::move(mean)), stddev_(std::move(stddev)) {
  if (mean_.size() != stddev_.size()) throw DataError("normalizer mean/std lengths differ");
  for (double s : stddev_) {
    if (!(s >= 0.0)) throw DataError("normalizer std must be non-negative");
  }
}

Normalizer Normalizer::fit(const Dataset& train) {
  if (train.empty()) throw DataError("cannot fit a normalizer on an empty dataset");
  const std::size_t n = train.n_features;
  const auto count = static_cast<double>(train.size());
  std::vector<double> mean(n, 0.0), var(n, 0.0);
  for (const Sample& s : train.samples) {
    for (std::size_t j = 0; j < n; ++j) mean[j] += s.features[j];
  }
  for (double& m : mean) m /= count;
  for (const Sample& s : train.samples) {
    for (std::size_t j = 0; j < n; ++j) {
      const double d = s.features[j] - mean[j];
      var[j] += d * d;
    }
  }
  std::vector<double> stddev(n);
  for (std::size_t j = 0; j < n; ++j) stddev[j] = std::sqrt(var[j] / count);
  return Normalizer(std::move(mean), std::move(stddev));
}

std::vector<double> Normalizer::apply(std::span<const double> features) const {
  if (features.size() != mean_.size()) {
    throw DataError("normalizer fitted on " + std::to_string(mean_.size()) + " features, got " +
                    std::to_string(features.size()));
  }
  std::vector<double> out(features.size());
  for (std::size_t j = 0; j < features.size(); ++j) {
    out[j] = is_constant(j) ? 0.0 : (features[j] - mean_[j]) / stddev_[j];
  }
  return out;
}

Dataset Normalizer::apply(const Dataset& ds) const {
  Dataset out = ds;
  for (Sample& s : out.samples) s.features = apply(s.features);
  return out;
}

json Normalizer::to_json() const { return {{"mean", mean_}, {"std", stddev_}}; }

Normalizer Normalizer::from_json(const json& j) {
  try {
    return Normalizer(j.at("mean").get<std::vector<double>>(), j.at("std").get<std::vector<double>>());
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad normalizer: ") + e.what());
  }
}

std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitOptions& options) {
  if (!(options.train_fraction > 0.0 && options.train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in (0, 1)");
  }
  if (ds.size() < 2) throw DataError("need at least 2 samples to split");
  std::mt19937_64 rng(options.seed);
  std::vector<char> in_train(ds.size(), 0);

  if (options.stratified) {
    std::vector<std::vector<std::size_t>> by_class(ds.n_classes);
    for (std::size_t i = 0; i < ds.size(); ++i) by_class.at(ds.samples[i].label).push_back(i);

    const auto target = static_cast<std::size_t>(
        std::llround(options.train_fraction * static_cast<double>(ds.size())));
    std::vector<std::size_t> take(ds.n_classes, 0);
    std::vector<double> remainder(ds.n_classes, -1.0);
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < ds.n_classes; ++c) {
      const std::size_t nc = by_class[c].size();
      if (nc == 0) continue;
      if (nc < 2) {
        throw DataError("class " + std::to_string(c) + " has fewer than 2 samples; cannot stratify");
      }
      const double exact = options.train_fraction * static_cast<double>(nc);
      take[c] = static_cast<std::size_t>(std::floor(exact));
      remainder[c] = exact - std::floor(exact);
      assigned += take[c];
    }
    std::vector<std::size_t> order(ds.n_classes);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t c : order) {
      if (assigned >= target) break;
      if (by_class[c].empty() || take[c] >= by_class[c].size()) continue;
      ++take[c];
      ++assigned;
    }
    for (std::size_t c = 0; c < ds.n_classes; ++c) {
      auto& members = by_class[c];
      if (members.empty()) continue;
      take[c] = std::clamp<std::size_t>(take[c], 1, members.size() - 1);
      std::shuffle(members.begin(), members.end(), rng);
      for (std::size_t k = 0; k < take[c]; ++k) in_train[members[k]] = 1;
    }
  } else {
    std::vector<std::size_t> order = ds.all_indices();
    std::shuffle(order.begin(), order.end(), rng);
    auto take = static_cast<std::size_t>(
        std::llround(options.train_fraction * static_cast<double>(ds.size())));
    take = std::clamp<std::size_t>(take, 1, ds.size() - 1);
    for (std::size_t k = 0; k < take; ++k) in_train[order[k]] = 1;
  }

  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t i = 0; i < ds.size(); ++i) (in_train[i] ? train_idx : test_idx).push_back(i);
  return {ds.subset(train_idx), ds.subset(test_idx)};
}

}  // namespace compnet::data
