#include "repforge/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "repforge/rng.hpp"

namespace repforge {

namespace {

constexpr double kStdFloor = 1e-8;

[[noreturn]] void line_error(std::size_t line_no, const std::string& why) {
  throw std::runtime_error("line " + std::to_string(line_no) + ": " + why);
}

SetRecord parse_set_line(const std::string& line, std::size_t line_no) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    line_error(line_no, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("set_id") || !j.contains("exercise_id") ||
      !j.contains("reps")) {
    line_error(line_no, "expected object with set_id, exercise_id, reps");
  }
  if (!j["set_id"].is_string()) line_error(line_no, "set_id must be a string");
  if (!j["exercise_id"].is_number_integer() ||
      j["exercise_id"].get<long long>() < 0) {
    line_error(line_no, "exercise_id must be a non-negative integer");
  }
  if (!j["reps"].is_array() || j["reps"].empty()) {
    line_error(line_no, "reps must be a non-empty array");
  }

  SetRecord set;
  set.set_id = j["set_id"].get<std::string>();
  set.exercise_id = j["exercise_id"].get<std::size_t>();
  set.reps.reserve(j["reps"].size());
  std::size_t rep_idx = 0;
  for (const auto& jrep : j["reps"]) {
    if (!jrep.is_object() || !jrep.contains("samples") ||
        !jrep["samples"].is_array() || jrep["samples"].empty()) {
      line_error(line_no, "rep " + std::to_string(rep_idx) +
                              ": samples must be a non-empty array");
    }
    RepRecord rep;
    rep.samples.reserve(jrep["samples"].size() * kNumFeatures);
    for (const auto& row : jrep["samples"]) {
      if (!row.is_array() || row.size() != kNumFeatures) {
        line_error(line_no, "rep " + std::to_string(rep_idx) +
                                ": expected 9 features, got " +
                                std::to_string(row.is_array() ? row.size() : 0));
      }
      for (const auto& v : row) {
        if (!v.is_number()) {
          line_error(line_no,
                     "rep " + std::to_string(rep_idx) + ": non-numeric sample");
        }
        const double x = v.get<double>();
        if (!std::isfinite(x)) {
          line_error(line_no,
                     "rep " + std::to_string(rep_idx) + ": non-finite sample");
        }
        rep.samples.push_back(x);
      }
    }
    set.reps.push_back(std::move(rep));
    ++rep_idx;
  }
  return set;
}

}  // namespace

std::vector<SetRecord> ingest(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("ingest: cannot open " + path);
  }
  std::vector<SetRecord> sets;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    sets.push_back(parse_set_line(line, line_no));
  }
  return sets;
}

std::size_t valid_length(const RepRecord& rep, std::size_t target_len) {
  return std::min(rep.length(), target_len);
}

Tensor pad_or_crop(const RepRecord& rep, std::size_t target_len) {
  Tensor out({kNumFeatures, target_len});
  const std::size_t n = valid_length(rep, target_len);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      out.at(f, t) = rep.at(t, f);
    }
  }
  return out;
}

Standardizer fit_standardizer(const std::vector<SetRecord>& train_sets,
                              StandardizeMode mode) {
  std::array<double, kNumFeatures> sum{};
  std::size_t count = 0;
  for (const auto& set : train_sets) {
    for (const auto& rep : set.reps) {
      const std::size_t n = valid_length(rep);
      for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t f = 0; f < kNumFeatures; ++f) sum[f] += rep.at(t, f);
      }
      count += n;
    }
  }
  if (count == 0) {
    throw std::invalid_argument("fit_standardizer: empty dataset");
  }

  Standardizer s;
  if (mode == StandardizeMode::global) {
    double total = 0.0;
    for (double v : sum) total += v;
    s.mean.fill(total / static_cast<double>(count * kNumFeatures));
  } else {
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      s.mean[f] = sum[f] / static_cast<double>(count);
    }
  }

  std::array<double, kNumFeatures> sq{};
  for (const auto& set : train_sets) {
    for (const auto& rep : set.reps) {
      const std::size_t n = valid_length(rep);
      for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t f = 0; f < kNumFeatures; ++f) {
          const double d = rep.at(t, f) - s.mean[f];
          sq[f] += d * d;
        }
      }
    }
  }
  if (mode == StandardizeMode::global) {
    double total = 0.0;
    for (double v : sq) total += v;
    const double var = total / static_cast<double>(count * kNumFeatures);
    s.std.fill(std::max(std::sqrt(var), kStdFloor));
  } else {
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      const double var = sq[f] / static_cast<double>(count);
      s.std[f] = std::max(std::sqrt(var), kStdFloor);
    }
  }
  return s;
}

Tensor apply_standardizer(const Standardizer& s, const Tensor& padded,
                          std::size_t valid_len) {
  if (padded.rank() != 2 || padded.extent(0) != kNumFeatures) {
    throw std::invalid_argument("apply_standardizer: expected 9 x T matrix, got " +
                                shape_str(padded.shape()));
  }
  const std::size_t width = padded.extent(1);
  if (valid_len > width) {
    throw std::invalid_argument("apply_standardizer: valid_len exceeds width");
  }
  Tensor out({kNumFeatures, width});
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    for (std::size_t t = 0; t < valid_len; ++t) {
      out.at(f, t) = (padded.at(f, t) - s.mean[f]) / s.std[f];
    }
    // columns beyond valid_len stay exactly 0
  }
  return out;
}

std::size_t num_test_sets(std::size_t n_sets, double test_fraction) {
  return static_cast<std::size_t>(
      std::ceil(test_fraction * static_cast<double>(n_sets)));
}

SplitDataset split_by_set(std::vector<SetRecord> sets, double test_fraction,
                          std::uint64_t seed, StandardizeMode mode) {
  if (!(test_fraction > 0.0) || !(test_fraction < 1.0)) {
    throw std::invalid_argument("split_by_set: test_fraction must be in (0, 1)");
  }
  if (sets.size() < 2) {
    throw std::invalid_argument("split_by_set: need at least 2 sets, got " +
                                std::to_string(sets.size()));
  }
  std::vector<std::size_t> order(sets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(mix_seed(seed, 0x5e75));
  rng.shuffle(order);

  const std::size_t n_test = num_test_sets(sets.size(), test_fraction);
  SplitDataset split;
  split.test_sets.reserve(n_test);
  split.train_sets.reserve(sets.size() - n_test);
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto& dst = (i < n_test) ? split.test_sets : split.train_sets;
    dst.push_back(std::move(sets[order[i]]));
  }
  split.standardizer = fit_standardizer(split.train_sets, mode);
  return split;
}

}  // namespace repforge
