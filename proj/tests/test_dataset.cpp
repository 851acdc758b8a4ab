#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

#include "repforge/dataset.hpp"
#include "repforge/rng.hpp"

using namespace repforge;

namespace {

RepRecord make_rep(std::size_t len, double base = 0.0) {
  RepRecord rep;
  rep.samples.resize(len * kNumFeatures);
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      rep.at(t, f) = base + static_cast<double>(t * kNumFeatures + f);
    }
  }
  return rep;
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/repforge_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("ingest reads valid lines in order") {
  TempFile tmp("ingest_ok.jsonl");
  {
    std::ofstream out(tmp.path);
    out << R"({"set_id": "a", "exercise_id": 0, "reps": [{"samples": [[1,2,3,4,5,6,7,8,9]]}]})"
        << "\n";
    out << R"({"set_id": "b", "exercise_id": 2, "reps": [{"samples": [[0,0,0,0,0,0,0,0,0],[1,1,1,1,1,1,1,1,1]]}]})"
        << "\n";
  }
  const auto sets = ingest(tmp.path);
  REQUIRE(sets.size() == 2);
  CHECK(sets[0].set_id == "a");
  CHECK(sets[1].set_id == "b");
  CHECK(sets[1].exercise_id == 2);
  REQUIRE(sets[0].reps.size() == 1);
  CHECK(sets[0].reps[0].length() == 1);
  CHECK(sets[0].reps[0].at(0, 8) == 9.0);
  CHECK(sets[1].reps[0].length() == 2);
}

TEST_CASE("ingest rejects an 8-feature row with the line number") {
  TempFile tmp("ingest_bad.jsonl");
  {
    std::ofstream out(tmp.path);
    out << R"({"set_id": "a", "exercise_id": 0, "reps": [{"samples": [[1,2,3,4,5,6,7,8,9]]}]})"
        << "\n";
    out << R"({"set_id": "b", "exercise_id": 0, "reps": [{"samples": [[1,2,3,4,5,6,7,8]]}]})"
        << "\n";
  }
  CHECK_THROWS_WITH_AS(ingest(tmp.path),
                       doctest::Contains("line 2"), std::runtime_error);
  try {
    ingest(tmp.path);
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("expected 9 features") != std::string::npos);
    CHECK(std::string(e.what()).find("got 8") != std::string::npos);
  }
}

TEST_CASE("ingest rejects malformed JSON and empty reps") {
  TempFile tmp("ingest_json.jsonl");
  {
    std::ofstream out(tmp.path);
    out << "{not json\n";
  }
  CHECK_THROWS_WITH_AS(ingest(tmp.path), doctest::Contains("line 1"),
                       std::runtime_error);
  {
    std::ofstream out(tmp.path);
    out << R"({"set_id": "a", "exercise_id": 0, "reps": []})" << "\n";
  }
  CHECK_THROWS_AS(ingest(tmp.path), std::runtime_error);
}

TEST_CASE("pad_or_crop handles exact, short and long reps") {
  // exact length: pure transpose
  const RepRecord exact = make_rep(784);
  const Tensor t_exact = pad_or_crop(exact);
  CHECK(t_exact.shape() == Shape{9, 784});
  CHECK(t_exact.at(3, 100) == exact.at(100, 3));

  // short: zero tail
  const RepRecord shorty = make_rep(100);
  const Tensor t_short = pad_or_crop(shorty);
  for (std::size_t f = 0; f < 9; ++f) {
    for (std::size_t t = 100; t < 784; ++t) CHECK(t_short.at(f, t) == 0.0);
    for (std::size_t t = 0; t < 100; ++t) {
      CHECK(t_short.at(f, t) == shorty.at(t, f));
    }
  }

  // long: keep the head
  const RepRecord longy = make_rep(1000);
  const Tensor t_long = pad_or_crop(longy);
  CHECK(t_long.shape() == Shape{9, 784});
  for (std::size_t f = 0; f < 9; ++f) {
    CHECK(t_long.at(f, 783) == longy.at(783, f));
  }
  CHECK(valid_length(longy) == 784);
  CHECK(valid_length(shorty) == 100);
}

TEST_CASE("fit_standardizer floors degenerate variance") {
  SetRecord set;
  set.set_id = "s";
  set.exercise_id = 0;
  RepRecord rep;
  rep.samples.assign(10 * kNumFeatures, 5.0);
  set.reps.push_back(rep);
  const Standardizer s = fit_standardizer({set});
  for (std::size_t f = 0; f < 9; ++f) {
    CHECK(s.mean[f] == 5.0);
    CHECK(s.std[f] == 1e-8);
  }
}

TEST_CASE("fit_standardizer on plus-minus one gives mean 0 std 1") {
  SetRecord set;
  set.set_id = "s";
  set.exercise_id = 0;
  RepRecord rep;
  rep.samples.resize(2 * kNumFeatures);
  for (std::size_t f = 0; f < 9; ++f) {
    rep.at(0, f) = -1.0;
    rep.at(1, f) = 1.0;
  }
  set.reps.push_back(rep);
  const Standardizer s = fit_standardizer({set});
  for (std::size_t f = 0; f < 9; ++f) {
    CHECK(s.mean[f] == 0.0);
    CHECK(s.std[f] == 1.0);  // population std
  }
  CHECK_THROWS_AS((void)fit_standardizer({}), std::invalid_argument);
}

TEST_CASE("apply_standardizer identity, padding and inverse") {
  Standardizer ident;
  ident.mean.fill(0.0);
  ident.std.fill(1.0);
  const RepRecord rep = make_rep(50);
  const Tensor padded = pad_or_crop(rep);
  const Tensor same = apply_standardizer(ident, padded, 50);
  for (std::size_t i = 0; i < padded.size(); ++i) CHECK(same[i] == padded[i]);

  Standardizer s;
  for (std::size_t f = 0; f < 9; ++f) {
    s.mean[f] = 1.5 * static_cast<double>(f) - 3.0;
    s.std[f] = 0.25 + 0.5 * static_cast<double>(f);
  }
  const Tensor z = apply_standardizer(s, padded, 50);
  for (std::size_t f = 0; f < 9; ++f) {
    for (std::size_t t = 50; t < 784; ++t) CHECK(z.at(f, t) == 0.0);
  }
  // inverse transform recovers the valid region
  double worst = 0.0;
  for (std::size_t f = 0; f < 9; ++f) {
    for (std::size_t t = 0; t < 50; ++t) {
      const double back = z.at(f, t) * s.std[f] + s.mean[f];
      worst = std::max(worst, std::abs(back - padded.at(f, t)));
    }
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("global standardize mode pools all features") {
  SetRecord set;
  set.set_id = "s";
  set.exercise_id = 0;
  set.reps.push_back(make_rep(20));
  const Standardizer s = fit_standardizer({set}, StandardizeMode::global);
  for (std::size_t f = 1; f < 9; ++f) {
    CHECK(s.mean[f] == s.mean[0]);
    CHECK(s.std[f] == s.std[0]);
  }
}

TEST_CASE("split_by_set counts, determinism, disjointness") {
  std::vector<SetRecord> sets;
  for (int i = 0; i < 10; ++i) {
    SetRecord s;
    s.set_id = "set" + std::to_string(i);
    s.exercise_id = static_cast<std::size_t>(i % 3);
    s.reps.push_back(make_rep(30, i));
    sets.push_back(s);
  }
  const SplitDataset a = split_by_set(sets, 0.1, 99);
  CHECK(a.test_sets.size() == 1);
  CHECK(a.train_sets.size() == 9);

  const SplitDataset b = split_by_set(sets, 0.1, 99);
  CHECK(a.test_sets[0].set_id == b.test_sets[0].set_id);

  const SplitDataset c = split_by_set(sets, 0.3, 123);
  std::set<std::string> seen;
  for (const auto& s : c.train_sets) seen.insert(s.set_id);
  for (const auto& s : c.test_sets) {
    CHECK(seen.find(s.set_id) == seen.end());
    seen.insert(s.set_id);
  }
  CHECK(seen.size() == 10);  // exhaustive

  CHECK_THROWS_AS((void)split_by_set(sets, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS((void)split_by_set(sets, 1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(
      (void)split_by_set(std::vector<SetRecord>(sets.begin(), sets.begin() + 1),
                         0.5, 1),
      std::invalid_argument);
}

TEST_CASE("test-set sizing matches the paper's counts") {
  CHECK(num_test_sets(49194, 0.1007) == 4954);
  CHECK(num_test_sets(10, 0.1) == 1);
}
