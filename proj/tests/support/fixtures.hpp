#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "ssnet/ssnet.hpp"

namespace fixture {

namespace fs = std::filesystem;

inline fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ssnet_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Small networks that keep the full topology but run in milliseconds.
inline ssnet::GeneratorSpec small_generator() {
  ssnet::GeneratorSpec s;
  s.encoder_channels = {4, 4, 8, 8, 8};
  return s;
}

inline ssnet::DiscriminatorSpec small_discriminator() {
  ssnet::DiscriminatorSpec s;
  s.base_channels = 4;
  s.n_layers = 2;
  return s;
}

// Cohort written to disk; returns the manifest path.
inline fs::path cohort(const fs::path& dir, int n_train, int n_test, std::uint64_t seed) {
  ssnet::write_cohort(ssnet::sample_cohort(n_train, n_test, {}, seed), dir);
  return dir / "manifest.json";
}

inline std::string bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Every regular file under a directory, relative path -> contents.
inline std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = bytes(e.path());
  return out;
}

// The axial slice through the middle of a phantom spleen, at the model grid.
template <typename T>
std::pair<ssnet::Tensor<T>, ssnet::Tensor<T>> spleen_slices(std::uint64_t seed, int count) {
  const ssnet::Manifest m = ssnet::sample_cohort(1, 1, {}, seed);
  const auto scan = ssnet::generate_phantom(m.entries[0].config);
  const auto img = ssnet::volume_slices<T>(ssnet::to_model_grid(scan.volume, 64), ssnet::ViewAxis::Axial);
  const auto tgt = ssnet::mask_slices<T>(ssnet::to_model_grid(scan.mask, 64), ssnet::ViewAxis::Axial);
  // Slices ordered by foreground area, largest first.
  std::vector<std::pair<double, int>> area;
  for (int k = 0; k < img.n(); ++k) {
    double a = 0;
    for (std::size_t i = 0; i < tgt.shape().plane(); ++i) a += tgt.channel(k, 1)[i];
    area.push_back({-a, k});
  }
  std::sort(area.begin(), area.end());
  std::vector<int> idx;
  for (int i = 0; i < count; ++i) idx.push_back(area[i].second);
  return {ssnet::gather(img, idx), ssnet::gather(tgt, idx)};
}

}  // namespace fixture
