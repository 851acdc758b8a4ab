#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "repforge/dataset.hpp"

namespace repforge {

// Seeded synthetic stand-in for the private wearable dataset: every class is
// a fixed sum-of-two-sinusoids signature per feature, reps are the signature
// sampled at 200 Hz over a jittered duration plus white noise. Sets with few
// reps get noisier reps (heavier loads move less consistently), which is what
// the rep-count-stratified accuracy checks lean on.
struct SynthConfig {
  std::size_t num_classes = 10;
  std::size_t sets_per_class = 50;
  // weights for rep counts 1..20; default keeps ~9% of sets under 4 reps,
  // ~36% under 8 and ~94% under 20
  std::vector<double> rep_count_weights;
  std::size_t rep_length_min = 200;
  std::size_t rep_length_max = 784;
  double overlong_prob = 0.01;  // reps longer than rep_length_max (cropped later)
  double base_noise_sigma = 0.4;
  double few_rep_variance_boost = 2.4;  // noise multiplier for sets with < 4 reps
  std::uint64_t seed = 42;

  static std::vector<double> default_rep_count_weights();
};

struct Sinusoid {
  double amplitude = 0.0;
  double freq_hz = 0.0;
  double phase = 0.0;
};

struct ClassSignature {
  std::array<std::array<Sinusoid, 2>, kNumFeatures> waves;
  double mean_length = 0.0;  // samples
};

// Distinct frequency bands per class under any seed.
std::vector<ClassSignature> make_class_signatures(const SynthConfig& cfg);

// Noise-free signature value for feature f at sample t (200 Hz).
double signature_value(const ClassSignature& sig, std::size_t feature,
                       std::size_t t);

std::vector<SetRecord> generate_dataset(const SynthConfig& cfg);

// JSON-lines export in the ingest format; validates labels against
// num_classes before writing anything.
void export_jsonl(const std::vector<SetRecord>& sets, std::size_t num_classes,
                  const std::string& path);

}  // namespace repforge
