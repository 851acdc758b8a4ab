#include "repforge/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "repforge/threading.hpp"

namespace repforge {

std::size_t majority_vote(const std::vector<std::size_t>& rep_predictions,
                          const std::vector<Tensor>& rep_probs) {
  if (rep_predictions.empty() || rep_predictions.size() != rep_probs.size()) {
    throw std::invalid_argument(
        "majority_vote: need equally sized, non-empty prediction/prob lists");
  }
  std::map<std::size_t, std::size_t> counts;
  for (std::size_t c : rep_predictions) ++counts[c];
  std::size_t best_count = 0;
  for (const auto& [cls, cnt] : counts) best_count = std::max(best_count, cnt);

  std::size_t winner = 0;
  double winner_mass = -1.0;
  for (const auto& [cls, cnt] : counts) {  // map order: ascending class index
    if (cnt != best_count) continue;
    double mass = 0.0;
    for (const Tensor& p : rep_probs) mass += p[cls];
    if (mass > winner_mass) {
      winner = cls;
      winner_mass = mass;
    }
  }
  return winner;
}

EvalReport evaluate_with(const RepPredictor& predict,
                         const std::vector<SetRecord>& sets,
                         const Standardizer& standardizer, ImageLayout layout,
                         std::size_t num_classes) {
  if (sets.empty()) {
    throw std::invalid_argument("evaluate: empty evaluation set list");
  }

  // flatten (set, rep) pairs so prediction can run in parallel
  std::vector<std::pair<std::size_t, std::size_t>> flat;
  for (std::size_t si = 0; si < sets.size(); ++si) {
    for (std::size_t ri = 0; ri < sets[si].reps.size(); ++ri) {
      flat.emplace_back(si, ri);
    }
  }
  std::vector<Prediction> preds(flat.size());
  parallel_for(flat.size(), [&](std::size_t i) {
    const auto [si, ri] = flat[i];
    const SetRecord& set = sets[si];
    const RepRecord& rep = set.reps[ri];
    const Tensor standardized = apply_standardizer(
        standardizer, pad_or_crop(rep), valid_length(rep));
    const InputImage img = format_rep(standardized, layout,
                                      RepMeta{set.set_id, ri, set.exercise_id});
    preds[i] = predict(img);
  });

  EvalReport rep;
  rep.num_classes = num_classes;
  rep.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));

  std::size_t cursor = 0;
  for (const SetRecord& set : sets) {
    if (set.exercise_id >= num_classes) {
      throw std::invalid_argument("evaluate: exercise_id " +
                                  std::to_string(set.exercise_id) +
                                  " out of range for " +
                                  std::to_string(num_classes) + " classes");
    }
    const std::size_t n_reps = set.reps.size();
    std::vector<std::size_t> set_preds(n_reps);
    std::vector<Tensor> set_probs(n_reps);
    std::size_t set_correct = 0;
    for (std::size_t ri = 0; ri < n_reps; ++ri, ++cursor) {
      const Prediction& p = preds[cursor];
      set_preds[ri] = p.cls;
      set_probs[ri] = p.probs;
      rep.confusion[set.exercise_id][p.cls] += 1;
      const bool ok = p.cls == set.exercise_id;
      set_correct += ok;
      auto& bucket = rep.per_rep_count[n_reps];
      bucket.total += 1;
      bucket.correct += ok;
    }
    rep.num_reps += n_reps;
    rep.correct_reps += set_correct;

    const std::size_t voted = majority_vote(set_preds, set_probs);
    const bool set_ok = voted == set.exercise_id;
    rep.num_sets += 1;
    rep.correct_sets += set_ok;
    if (n_reps >= 8) {
      rep.num_sets_gt7 += 1;
      rep.correct_sets_gt7 += set_ok;
    }
  }

  rep.rep_accuracy =
      static_cast<double>(rep.correct_reps) / static_cast<double>(rep.num_reps);
  rep.set_accuracy =
      static_cast<double>(rep.correct_sets) / static_cast<double>(rep.num_sets);
  rep.set_accuracy_gt7 =
      rep.num_sets_gt7
          ? static_cast<double>(rep.correct_sets_gt7) /
                static_cast<double>(rep.num_sets_gt7)
          : 0.0;
  return rep;
}

EvalReport evaluate(const Model& model, const std::vector<SetRecord>& sets,
                    const Standardizer& standardizer, ImageLayout layout) {
  if (layout != model.config.layout) {
    throw std::invalid_argument("evaluate: layout does not match model");
  }
  return evaluate_with(
      [&model](const InputImage& img) { return predict_rep(model, img); }, sets,
      standardizer, layout, model.config.num_classes);
}

std::vector<std::vector<double>> normalize_confusion(
    const std::vector<std::vector<std::size_t>>& confusion) {
  std::vector<std::vector<double>> out(confusion.size());
  for (std::size_t r = 0; r < confusion.size(); ++r) {
    out[r].assign(confusion[r].size(), 0.0);
    std::size_t row_sum = 0;
    for (std::size_t v : confusion[r]) row_sum += v;
    if (row_sum == 0) continue;
    for (std::size_t c = 0; c < confusion[r].size(); ++c) {
      out[r][c] = static_cast<double>(confusion[r][c]) /
                  static_cast<double>(row_sum);
    }
  }
  return out;
}

std::string eval_report_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["num_classes"] = report.num_classes;
  j["rep_accuracy"] = report.rep_accuracy;
  j["set_accuracy"] = report.set_accuracy;
  j["set_accuracy_gt7"] = report.set_accuracy_gt7;
  j["num_reps"] = report.num_reps;
  j["correct_reps"] = report.correct_reps;
  j["num_sets"] = report.num_sets;
  j["correct_sets"] = report.correct_sets;
  j["num_sets_gt7"] = report.num_sets_gt7;
  j["correct_sets_gt7"] = report.correct_sets_gt7;
  j["confusion"] = report.confusion;
  nlohmann::ordered_json strata = nlohmann::ordered_json::object();
  for (const auto& [count, bucket] : report.per_rep_count) {
    strata[std::to_string(count)] = {{"accuracy", bucket.accuracy()},
                                     {"correct", bucket.correct},
                                     {"total", bucket.total}};
  }
  j["per_rep_count_accuracy"] = strata;
  return j.dump(2);
}

void write_eval_report_json(const EvalReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << eval_report_json(report) << '\n';
}

void write_confusion_csv(const std::vector<std::vector<double>>& normalized,
                         const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  char buf[32];
  for (const auto& row : normalized) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", row[c]);
      if (c) out << ',';
      out << buf;
    }
    out << '\n';
  }
}

std::string format_eval_summary(const EvalReport& report) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "rep %.3f / set %.3f / set_gt7 %.3f",
                report.rep_accuracy, report.set_accuracy,
                report.set_accuracy_gt7);
  return buf;
}

}  // namespace repforge
