#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "repforge/tensor.hpp"

namespace repforge {

inline constexpr std::size_t kNumFeatures = 9;
inline constexpr std::size_t kTargetLength = 784;

// One segmented repetition: T samples x 9 features, row-major by time.
// Feature order: local acc x/y/z, world acc x/y/z, Euler angle x/y/z.
struct RepRecord {
  std::vector<double> samples;  // length T * 9

  std::size_t length() const { return samples.size() / kNumFeatures; }
  double at(std::size_t t, std::size_t f) const {
    return samples[t * kNumFeatures + f];
  }
  double& at(std::size_t t, std::size_t f) {
    return samples[t * kNumFeatures + f];
  }
};

struct SetRecord {
  std::string set_id;
  std::size_t exercise_id = 0;
  std::vector<RepRecord> reps;  // non-empty, all with the set's single label
};

// Per-feature affine normalization fit on training data only.
struct Standardizer {
  std::array<double, kNumFeatures> mean{};
  std::array<double, kNumFeatures> std{};  // each >= 1e-8
};

enum class StandardizeMode { per_feature, global };

struct SplitDataset {
  std::vector<SetRecord> train_sets;
  std::vector<SetRecord> test_sets;
  Standardizer standardizer;  // fit on train_sets
};

// Reads the JSON-lines dataset format, one set per line:
//   {"set_id": "...", "exercise_id": 3, "reps": [{"samples": [[9 floats]...]}...]}
// Malformed lines raise with the 1-based line number.
std::vector<SetRecord> ingest(const std::string& path);

std::size_t valid_length(const RepRecord& rep,
                         std::size_t target_len = kTargetLength);

// Transposes to 9 x target_len; short reps are zero-filled at the tail,
// long reps keep their first target_len samples.
Tensor pad_or_crop(const RepRecord& rep, std::size_t target_len = kTargetLength);

// Population mean/std per feature over the samples that survive pad_or_crop
// (padding zeros excluded). Global mode pools all nine features into a single
// mean/std pair.
Standardizer fit_standardizer(const std::vector<SetRecord>& train_sets,
                              StandardizeMode mode = StandardizeMode::per_feature);

// (x - mean) / std on columns [0, valid_len); padding columns stay exactly 0.
Tensor apply_standardizer(const Standardizer& s, const Tensor& padded,
                          std::size_t valid_len);

std::size_t num_test_sets(std::size_t n_sets, double test_fraction);

// Seeded shuffle of sets; the first ceil(fraction * n) go to test. The
// standardizer is fit on the train partition only.
SplitDataset split_by_set(std::vector<SetRecord> sets, double test_fraction,
                          std::uint64_t seed,
                          StandardizeMode mode = StandardizeMode::per_feature);

}  // namespace repforge
