#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "repforge/evaluation.hpp"
#include "repforge/rng.hpp"
#include "repforge/synthgen.hpp"

using namespace repforge;

namespace {

Tensor prob_vec(std::initializer_list<double> v) {
  return Tensor({v.size()}, std::vector<double>(v));
}

// Deterministic synthetic sets for predictor-stub tests.
std::vector<SetRecord> stub_sets(std::size_t classes, std::size_t sets_per_class,
                                 std::uint64_t seed) {
  SynthConfig sc;
  sc.num_classes = classes;
  sc.sets_per_class = sets_per_class;
  sc.seed = seed;
  sc.rep_length_min = 20;
  sc.rep_length_max = 50;
  return generate_dataset(sc);
}

Standardizer identity_standardizer() {
  Standardizer s;
  s.mean.fill(0.0);
  s.std.fill(1.0);
  return s;
}

RepPredictor perfect_predictor(std::size_t k) {
  return [k](const InputImage& img) {
    Prediction p;
    p.cls = img.meta.label;
    p.probs = Tensor({k});
    p.probs[p.cls] = 1.0;
    return p;
  };
}

RepPredictor constant_predictor(std::size_t k, std::size_t cls) {
  return [k, cls](const InputImage&) {
    Prediction p;
    p.cls = cls;
    p.probs = Tensor({k});
    p.probs[cls] = 1.0;
    return p;
  };
}

}  // namespace

TEST_CASE("majority vote examples") {
  CHECK(majority_vote({3, 3, 7},
                      {prob_vec({0, 0, 0, 0.9, 0, 0, 0, 0.1}),
                       prob_vec({0, 0, 0, 0.8, 0, 0, 0, 0.2}),
                       prob_vec({0, 0, 0, 0.1, 0, 0, 0, 0.9})}) == 3);
  CHECK(majority_vote({5}, {prob_vec({0, 0, 0, 0, 0, 1.0})}) == 5);

  // tie between 2 and 9 broken by summed probability 1.3 vs 1.1
  Tensor a({10}), b({10});
  a[2] = 0.7;
  a[9] = 0.3;
  b[2] = 0.6;
  b[9] = 0.8;
  CHECK(majority_vote({2, 9}, {a, b}) == 2);

  // remaining tie goes to the smallest index
  Tensor e1({4}), e2({4});
  e1[1] = 0.5;
  e2[3] = 0.5;
  e1[3] = 0.5;
  e2[1] = 0.5;
  CHECK(majority_vote({1, 3}, {e1, e2}) == 1);

  CHECK_THROWS_AS((void)majority_vote({}, {}), std::invalid_argument);
}

TEST_CASE("strict majority is invariant to rep order") {
  Rng rng(5);
  std::vector<std::size_t> preds{4, 4, 4, 1, 2};
  std::vector<Tensor> probs;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    Tensor p({5});
    for (std::size_t j = 0; j < 5; ++j) p[j] = rng.uniform(0, 1);
    probs.push_back(p);
  }
  const std::size_t want = majority_vote(preds, probs);
  CHECK(want == 4);
  for (int shuffle = 0; shuffle < 10; ++shuffle) {
    std::vector<std::size_t> order{0, 1, 2, 3, 4};
    rng.shuffle(order);
    std::vector<std::size_t> sp;
    std::vector<Tensor> pp;
    for (std::size_t idx : order) {
      sp.push_back(preds[idx]);
      pp.push_back(probs[idx]);
    }
    CHECK(majority_vote(sp, pp) == want);
  }
}

TEST_CASE("perfect stub gives all accuracies 1 and a diagonal confusion") {
  const auto sets = stub_sets(4, 6, 2);
  const EvalReport r = evaluate_with(perfect_predictor(4), sets,
                                     identity_standardizer(),
                                     ImageLayout::rect, 4);
  CHECK(r.rep_accuracy == 1.0);
  CHECK(r.set_accuracy == 1.0);
  CHECK(r.set_accuracy_gt7 == 1.0);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      if (i != j) CHECK(r.confusion[i][j] == 0);
    }
  }
  CHECK(format_eval_summary(r) == "rep 1.000 / set 1.000 / set_gt7 1.000");
}

TEST_CASE("constant class-0 stub forces a single confusion column") {
  const auto sets = stub_sets(4, 5, 3);
  std::size_t class0_reps = 0, total = 0;
  for (const auto& s : sets) {
    total += s.reps.size();
    if (s.exercise_id == 0) class0_reps += s.reps.size();
  }
  const EvalReport r = evaluate_with(constant_predictor(4, 0), sets,
                                     identity_standardizer(),
                                     ImageLayout::rect, 4);
  CHECK(r.rep_accuracy ==
        doctest::Approx(static_cast<double>(class0_reps) / total).epsilon(1e-15));
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 1; j < 4; ++j) CHECK(r.confusion[i][j] == 0);
  }
}

TEST_CASE("confusion identities hold for a noisy stub") {
  const auto sets = stub_sets(5, 8, 7);
  // deterministic pseudo-random predictor: right 70% of the time
  Rng rng(99);
  std::vector<std::size_t> flips;
  const RepPredictor noisy = [&](const InputImage& img) {
    Prediction p;
    const bool right = rng.uniform() < 0.7;
    p.cls = right ? img.meta.label : (img.meta.label + 1 + rng.index(4)) % 5;
    p.probs = Tensor({5});
    p.probs[p.cls] = 1.0;
    return p;
  };
  const EvalReport r =
      evaluate_with(noisy, sets, identity_standardizer(), ImageLayout::rect, 5);

  // trace / total == rep_accuracy exactly
  std::size_t trace = 0, total = 0, row_sums[5] = {0, 0, 0, 0, 0};
  for (std::size_t i = 0; i < 5; ++i) {
    trace += r.confusion[i][i];
    for (std::size_t j = 0; j < 5; ++j) {
      total += r.confusion[i][j];
      row_sums[i] += r.confusion[i][j];
    }
  }
  CHECK(total == r.num_reps);
  CHECK(static_cast<double>(trace) / static_cast<double>(total) ==
        r.rep_accuracy);

  // confusion row r sums to the number of reps with true label r
  std::size_t want_rows[5] = {0, 0, 0, 0, 0};
  for (const auto& s : sets) want_rows[s.exercise_id] += s.reps.size();
  for (std::size_t i = 0; i < 5; ++i) CHECK(row_sums[i] == want_rows[i]);

  // normalized rows sum to 1 within 1e-12
  const auto norm = normalize_confusion(r.confusion);
  for (std::size_t i = 0; i < 5; ++i) {
    double sum = 0.0;
    for (double v : norm[i]) sum += v;
    if (row_sums[i] > 0) CHECK(std::abs(sum - 1.0) < 1e-12);
  }

  // per-rep-count buckets tile the rep population
  std::size_t bucket_total = 0;
  for (const auto& [count, bucket] : r.per_rep_count) bucket_total += bucket.total;
  CHECK(bucket_total == r.num_reps);
}

TEST_CASE("singleton sets: set accuracy equals rep accuracy") {
  auto sets = stub_sets(3, 10, 11);
  for (auto& s : sets) s.reps.resize(1);  // all sets become single-rep
  Rng rng(13);
  const RepPredictor coin = [&](const InputImage& img) {
    Prediction p;
    p.cls = rng.uniform() < 0.5 ? img.meta.label : 0;
    p.probs = Tensor({3});
    p.probs[p.cls] = 1.0;
    return p;
  };
  const EvalReport r =
      evaluate_with(coin, sets, identity_standardizer(), ImageLayout::rect, 3);
  CHECK(r.rep_accuracy == r.set_accuracy);
  CHECK(r.num_sets_gt7 == 0);
  CHECK(r.set_accuracy_gt7 == 0.0);
}

TEST_CASE("normalize_confusion examples") {
  const std::vector<std::vector<std::size_t>> counts{{2, 2}, {0, 4}};
  const auto norm = normalize_confusion(counts);
  CHECK(norm[0][0] == 0.5);
  CHECK(norm[0][1] == 0.5);
  CHECK(norm[1][0] == 0.0);
  CHECK(norm[1][1] == 1.0);

  const std::vector<std::vector<std::size_t>> diag{{3, 0}, {0, 9}};
  const auto eye = normalize_confusion(diag);
  CHECK(eye[0][0] == 1.0);
  CHECK(eye[1][1] == 1.0);

  const std::vector<std::vector<std::size_t>> zero{{0, 0}, {1, 1}};
  const auto z = normalize_confusion(zero);
  CHECK(z[0][0] == 0.0);  // zero row stays zero
  CHECK(z[0][1] == 0.0);
}

TEST_CASE("eval report JSON carries every field") {
  const auto sets = stub_sets(3, 4, 17);
  const EvalReport r = evaluate_with(perfect_predictor(3), sets,
                                     identity_standardizer(),
                                     ImageLayout::rect, 3);
  const std::string json = eval_report_json(r);
  for (const char* key :
       {"rep_accuracy", "set_accuracy", "set_accuracy_gt7", "confusion",
        "per_rep_count_accuracy", "num_reps", "num_sets", "num_sets_gt7"}) {
    INFO(key);
    CHECK(json.find(key) != std::string::npos);
  }
}

TEST_CASE("empty evaluation set list is rejected") {
  CHECK_THROWS_AS((void)evaluate_with(perfect_predictor(2), {},
                                      identity_standardizer(),
                                      ImageLayout::rect, 2),
                  std::invalid_argument);
}
