#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "compnet/model.hpp"
#include "compnet/synthetic.hpp"

namespace fixtures {

// A scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("compnet-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// 1x8x8 images, two classes, four designed features.
inline compnet::data::SynthSpec tiny_spec(std::size_t n = 40, std::uint64_t seed = 1) {
  compnet::data::SynthSpec s;
  s.n_samples = n;
  s.image_shape = {1, 8, 8};
  s.n_features = 4;
  s.n_informative = 2;
  s.pixel_noise = 0.5;
  s.seed = seed;
  return s;
}

inline compnet::ModelConfig tiny_model(compnet::FusionKind kind = compnet::FusionKind::kCompNet,
                                       std::uint64_t seed = 1) {
  compnet::ModelConfig c;
  c.image_shape = {1, 8, 8};
  c.n_classes = 2;
  c.n_features = 4;
  c.conv_filters = {2};
  c.kernel_size = 3;
  c.dense_hidden = {5};
  c.fusion = kind;
  c.seed = seed;
  return c;
}

}  // namespace fixtures
