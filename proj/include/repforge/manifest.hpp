#pragma once

#include <cstdint>
#include <string>

namespace repforge {

// FNV-1a over the file bytes; enough to pin inputs in a run manifest.
std::uint64_t fnv1a64_file(const std::string& path);
std::string hex_u64(std::uint64_t v);

// Everything needed to reproduce a training run; written before training
// starts.
struct RunManifest {
  std::string data_path;
  std::string data_digest;
  std::string layout;
  bool disjoint_conv1 = false;
  int depth = 2;
  std::size_t num_classes = 0;
  std::size_t epochs = 0;
  std::size_t batch_size = 0;
  double lr = 0.0;
  double test_fraction = 0.0;
  double dropout_keep = 0.5;
  bool dropout_on_conv = false;
  std::string standardize_mode;
  std::uint64_t seed = 0;  // drives split, shuffle and init
  std::size_t eval_every = 0;
};

std::string manifest_json(const RunManifest& m);
void write_manifest(const RunManifest& m, const std::string& path);

}  // namespace repforge
