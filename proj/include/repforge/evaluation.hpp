#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "repforge/dataset.hpp"
#include "repforge/imaging.hpp"
#include "repforge/model.hpp"

namespace repforge {

struct RepCountBucket {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const {
    return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  }
};

struct EvalReport {
  std::size_t num_classes = 0;
  std::size_t num_reps = 0, correct_reps = 0;
  std::size_t num_sets = 0, correct_sets = 0;
  std::size_t num_sets_gt7 = 0, correct_sets_gt7 = 0;  // sets with >= 8 reps
  double rep_accuracy = 0.0;
  double set_accuracy = 0.0;
  double set_accuracy_gt7 = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted], reps
  std::map<std::size_t, RepCountBucket> per_rep_count;  // reps-per-set -> acc
};

// Most frequent predicted class; ties break by the larger summed probability
// over the set for the tied classes, then by the smaller index.
std::size_t majority_vote(const std::vector<std::size_t>& rep_predictions,
                          const std::vector<Tensor>& rep_probs);

using RepPredictor = std::function<Prediction(const InputImage&)>;

// Runs the predictor on every rep (preprocessed with the given standardizer
// and layout) and aggregates rep-based, set-based (majority vote) and
// rep-count-stratified accuracies plus the confusion matrix.
EvalReport evaluate_with(const RepPredictor& predict,
                         const std::vector<SetRecord>& sets,
                         const Standardizer& standardizer, ImageLayout layout,
                         std::size_t num_classes);

EvalReport evaluate(const Model& model, const std::vector<SetRecord>& sets,
                    const Standardizer& standardizer, ImageLayout layout);

// Rows divided by their sums; zero rows stay zero.
std::vector<std::vector<double>> normalize_confusion(
    const std::vector<std::vector<std::size_t>>& confusion);

std::string eval_report_json(const EvalReport& report);
void write_eval_report_json(const EvalReport& report, const std::string& path);
void write_confusion_csv(const std::vector<std::vector<double>>& normalized,
                         const std::string& path);

// "rep 0.912 / set 0.941 / set_gt7 0.973" style one-liner.
std::string format_eval_summary(const EvalReport& report);

}  // namespace repforge
