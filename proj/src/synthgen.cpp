#include "repforge/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "repforge/rng.hpp"

namespace repforge {

namespace {

constexpr std::uint64_t kSignatureStream = 0x516;
constexpr std::uint64_t kSetStream = 0x5e7;
constexpr double kFreqLoHz = 0.25;
constexpr double kFreqHiHz = 3.0;

void check_config(const SynthConfig& cfg) {
  if (cfg.num_classes < 2) {
    throw std::invalid_argument("synth: num_classes must be >= 2");
  }
  if (cfg.sets_per_class < 1) {
    throw std::invalid_argument("synth: sets_per_class must be >= 1");
  }
  if (cfg.rep_length_min < 1 || cfg.rep_length_max < cfg.rep_length_min) {
    throw std::invalid_argument("synth: bad rep length range");
  }
  if (cfg.base_noise_sigma < 0.0 || cfg.few_rep_variance_boost < 0.0) {
    throw std::invalid_argument("synth: noise parameters must be >= 0");
  }
}

std::size_t weighted_choice(const std::vector<double>& weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    u -= weights[i];
    if (u < 0.0) return i;
  }
  return weights.size() - 1;
}

}  // namespace

std::vector<double> SynthConfig::default_rep_count_weights() {
  std::vector<double> w(20, 0.0);
  for (int c = 1; c <= 3; ++c) w[c - 1] = 0.09 / 3.0;    // <4 reps: 9%
  for (int c = 4; c <= 7; ++c) w[c - 1] = 0.27 / 4.0;    // <8 reps: 36%
  for (int c = 8; c <= 19; ++c) w[c - 1] = 0.58 / 12.0;  // <20 reps: 94%
  w[19] = 0.06;
  return w;
}

std::vector<ClassSignature> make_class_signatures(const SynthConfig& cfg) {
  check_config(cfg);
  Rng rng(mix_seed(cfg.seed, kSignatureStream));
  const double k_classes = static_cast<double>(cfg.num_classes);
  const double slot = (kFreqHiHz - kFreqLoHz) / k_classes;
  const double len_span =
      static_cast<double>(cfg.rep_length_max - cfg.rep_length_min);

  std::vector<ClassSignature> sigs(cfg.num_classes);
  for (std::size_t k = 0; k < cfg.num_classes; ++k) {
    ClassSignature& sig = sigs[k];
    // Non-overlapping frequency bands keep classes distinct under any seed;
    // the second band runs in reverse class order.
    const double band1 = kFreqLoHz + slot * static_cast<double>(k);
    const double band2 =
        kFreqLoHz + slot * static_cast<double>(cfg.num_classes - 1 - k);
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      sig.waves[f][0].amplitude = rng.uniform(0.5, 1.5);
      sig.waves[f][0].freq_hz = band1 + slot * rng.uniform(0.0, 0.6);
      sig.waves[f][0].phase = rng.uniform(0.0, 2.0 * M_PI);
      sig.waves[f][1].amplitude = rng.uniform(0.5, 1.5);
      sig.waves[f][1].freq_hz = band2 + slot * rng.uniform(0.0, 0.6);
      sig.waves[f][1].phase = rng.uniform(0.0, 2.0 * M_PI);
    }
    const double frac =
        (static_cast<double>(k) + 0.5) / k_classes;  // 0..1 across classes
    sig.mean_length = static_cast<double>(cfg.rep_length_min) +
                      len_span * (0.25 + 0.5 * frac);
  }
  return sigs;
}

double signature_value(const ClassSignature& sig, std::size_t feature,
                       std::size_t t) {
  const double time_s = static_cast<double>(t) / 200.0;  // 200 Hz sampling
  double v = 0.0;
  for (const Sinusoid& w : sig.waves[feature]) {
    v += w.amplitude * std::sin(2.0 * M_PI * w.freq_hz * time_s + w.phase);
  }
  return v;
}

std::vector<SetRecord> generate_dataset(const SynthConfig& cfg) {
  check_config(cfg);
  const std::vector<double> weights = cfg.rep_count_weights.empty()
                                          ? SynthConfig::default_rep_count_weights()
                                          : cfg.rep_count_weights;
  const std::vector<ClassSignature> sigs = make_class_signatures(cfg);

  std::vector<SetRecord> sets;
  sets.reserve(cfg.num_classes * cfg.sets_per_class);
  for (std::size_t k = 0; k < cfg.num_classes; ++k) {
    for (std::size_t j = 0; j < cfg.sets_per_class; ++j) {
      const std::size_t set_index = k * cfg.sets_per_class + j;
      Rng rng(mix_seed(mix_seed(cfg.seed, kSetStream), set_index));

      SetRecord set;
      char id[32];
      std::snprintf(id, sizeof id, "synth-%06zu", set_index);
      set.set_id = id;
      set.exercise_id = k;

      const std::size_t rep_count = weighted_choice(weights, rng) + 1;
      const double sigma = cfg.base_noise_sigma *
                           (rep_count < 4 ? cfg.few_rep_variance_boost : 1.0);

      set.reps.resize(rep_count);
      for (RepRecord& rep : set.reps) {
        const double jitter = rng.uniform(0.85, 1.15);
        const double u_over = rng.uniform();
        std::size_t length = static_cast<std::size_t>(
            std::lround(sigs[k].mean_length * jitter));
        length = std::clamp(length, cfg.rep_length_min, cfg.rep_length_max);
        if (u_over < cfg.overlong_prob) {
          length = cfg.rep_length_max + 1 + rng.index(cfg.rep_length_max / 4 + 1);
        }
        rep.samples.resize(length * kNumFeatures);
        for (std::size_t t = 0; t < length; ++t) {
          for (std::size_t f = 0; f < kNumFeatures; ++f) {
            double v = signature_value(sigs[k], f, t);
            if (sigma > 0.0) v += rng.normal(0.0, sigma);
            rep.at(t, f) = v;
          }
        }
      }
      sets.push_back(std::move(set));
    }
  }
  return sets;
}

void export_jsonl(const std::vector<SetRecord>& sets, std::size_t num_classes,
                  const std::string& path) {
  for (const SetRecord& set : sets) {
    if (set.exercise_id >= num_classes) {
      throw std::invalid_argument("export: set " + set.set_id +
                                  " has exercise_id " +
                                  std::to_string(set.exercise_id) +
                                  " outside 0.." +
                                  std::to_string(num_classes - 1));
    }
    if (set.reps.empty()) {
      throw std::invalid_argument("export: set " + set.set_id + " has no reps");
    }
  }

  std::ofstream out(path, std::ios::binary);  // binary: byte-stable newlines
  if (!out) throw std::runtime_error("export: cannot write " + path);
  for (const SetRecord& set : sets) {
    nlohmann::ordered_json j;
    j["set_id"] = set.set_id;
    j["exercise_id"] = set.exercise_id;
    nlohmann::ordered_json reps = nlohmann::ordered_json::array();
    for (const RepRecord& rep : set.reps) {
      nlohmann::ordered_json samples = nlohmann::ordered_json::array();
      const std::size_t n = rep.length();
      for (std::size_t t = 0; t < n; ++t) {
        nlohmann::ordered_json row = nlohmann::ordered_json::array();
        for (std::size_t f = 0; f < kNumFeatures; ++f) row.push_back(rep.at(t, f));
        samples.push_back(std::move(row));
      }
      reps.push_back(nlohmann::ordered_json{{"samples", std::move(samples)}});
    }
    j["reps"] = std::move(reps);
    out << j.dump() << '\n';
  }
}

}  // namespace repforge
