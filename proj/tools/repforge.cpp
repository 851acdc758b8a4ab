#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "repforge/dataset.hpp"
#include "repforge/evaluation.hpp"
#include "repforge/gradcheck.hpp"
#include "repforge/manifest.hpp"
#include "repforge/model.hpp"
#include "repforge/synthgen.hpp"
#include "repforge/training.hpp"
#include "repforge/version.hpp"

namespace {

using namespace repforge;

struct SynthFlags {
  std::string out;
  std::size_t classes = 10;
  std::size_t sets_per_class = 50;
  std::uint64_t seed = 42;
  double noise = 0.4;
  double few_rep_boost = 2.4;
  std::size_t rep_len_min = 200;
  std::size_t rep_len_max = 784;
  double overlong_prob = 0.01;
};

int run_synth(const SynthFlags& f) {
  SynthConfig cfg;
  cfg.num_classes = f.classes;
  cfg.sets_per_class = f.sets_per_class;
  cfg.seed = f.seed;
  cfg.base_noise_sigma = f.noise;
  cfg.few_rep_variance_boost = f.few_rep_boost;
  cfg.rep_length_min = f.rep_len_min;
  cfg.rep_length_max = f.rep_len_max;
  cfg.overlong_prob = f.overlong_prob;

  const std::vector<SetRecord> sets = generate_dataset(cfg);
  export_jsonl(sets, cfg.num_classes, f.out);
  std::size_t reps = 0;
  for (const auto& s : sets) reps += s.reps.size();
  std::cout << "wrote " << sets.size() << " sets, " << reps << " reps to "
            << f.out << "\n";
  return 0;
}

struct TrainFlags {
  std::string data;
  std::string layout = "channels";
  int depth = 2;
  std::string out_model;
  std::size_t epochs = 40;
  std::size_t batch = 100;
  double lr = 0.0005;
  double test_fraction = 0.1;
  std::uint64_t seed = 42;
  std::size_t eval_every = 1;
  std::size_t classes = 0;  // 0: infer from data
  double dropout_keep = 0.5;
  bool dropout_on_conv = false;
  std::string standardize = "feature";
  std::string log_csv;
  std::string manifest;
};

int run_train(const TrainFlags& f) {
  bool disjoint = false;
  const ImageLayout layout = parse_layout(f.layout, &disjoint);
  const StandardizeMode mode = f.standardize == "global"
                                   ? StandardizeMode::global
                                   : StandardizeMode::per_feature;

  std::vector<SetRecord> sets = ingest(f.data);
  std::size_t classes = f.classes;
  if (classes == 0) {
    for (const auto& s : sets) classes = std::max(classes, s.exercise_id + 1);
  }

  const std::string log_path =
      f.log_csv.empty() ? f.out_model + ".log.csv" : f.log_csv;
  const std::string manifest_path =
      f.manifest.empty() ? f.out_model + ".manifest.json" : f.manifest;

  RunManifest manifest;
  manifest.data_path = f.data;
  manifest.data_digest = hex_u64(fnv1a64_file(f.data));
  manifest.layout = f.layout;
  manifest.disjoint_conv1 = disjoint;
  manifest.depth = f.depth;
  manifest.num_classes = classes;
  manifest.epochs = f.epochs;
  manifest.batch_size = f.batch;
  manifest.lr = f.lr;
  manifest.test_fraction = f.test_fraction;
  manifest.dropout_keep = f.dropout_keep;
  manifest.dropout_on_conv = f.dropout_on_conv;
  manifest.standardize_mode = f.standardize;
  manifest.seed = f.seed;
  manifest.eval_every = f.eval_every;
  write_manifest(manifest, manifest_path);

  ModelConfig mc = ModelConfig::standard(layout, disjoint, f.depth, classes, f.seed);
  mc.dropout_keep = f.dropout_keep;
  mc.dropout_on_conv = f.dropout_on_conv;
  Model model = build_model(mc);
  std::cerr << "model: layout=" << f.layout << " depth=" << f.depth
            << " classes=" << classes << " params=" << model.parameter_count()
            << "\n";

  const SplitDataset data = split_by_set(std::move(sets), f.test_fraction,
                                         f.seed, mode);
  std::cerr << "split: " << data.train_sets.size() << " train sets, "
            << data.test_sets.size() << " test sets\n";

  const std::vector<const Tensor*> cparams =
      const_cast<const Model&>(model).parameters();
  AdamState opt = AdamState::init(cparams, AdamConfig{.lr = f.lr});

  TrainConfig tc;
  tc.batch_size = f.batch;
  tc.epochs = f.epochs;
  tc.lr = f.lr;
  tc.shuffle_seed = f.seed;
  tc.eval_every = f.eval_every;
  tc.checkpoint_path = f.out_model;

  const TrainLog log = run_training(model, opt, data, tc);
  for (const auto& r : log.epochs) {
    std::cerr << "epoch " << r.epoch << ": loss " << r.loss;
    if (r.evaluated) {
      std::cerr << ", train_acc " << r.train_acc << ", test_acc " << r.test_acc;
    }
    std::cerr << " (" << r.seconds << "s)\n";
  }
  write_train_log_csv(log, log_path);

  const EpochRecord& last = log.epochs.back();
  std::printf("final epoch %zu: loss %.6f", last.epoch, last.loss);
  if (last.evaluated) {
    std::printf(", train_acc %.4f, test_acc %.4f", last.train_acc, last.test_acc);
  }
  std::printf("\nwrote %s, %s, %s\n", f.out_model.c_str(), log_path.c_str(),
              manifest_path.c_str());
  return 0;
}

struct EvalFlags {
  std::string model;
  std::string data;
  std::string report_json;
  std::string confusion_csv;
};

int run_eval(const EvalFlags& f) {
  const Checkpoint ck = load_checkpoint(f.model);
  const std::vector<SetRecord> sets = ingest(f.data);
  const EvalReport report =
      evaluate(ck.model, sets, ck.standardizer, ck.model.config.layout);
  std::cout << format_eval_summary(report) << "\n";
  if (!f.report_json.empty()) write_eval_report_json(report, f.report_json);
  if (!f.confusion_csv.empty()) {
    write_confusion_csv(normalize_confusion(report.confusion), f.confusion_csv);
  }
  return 0;
}

int run_gradcheck(std::uint64_t seed) {
  const std::vector<GradCheckResult> results = run_gradient_suite(seed);
  bool all_pass = true;
  for (const auto& r : results) {
    std::printf("%-14s max_rel_err %.3e  tol %.1e  %s\n", r.name.c_str(),
                r.max_rel_err, r.tolerance, r.pass ? "PASS" : "FAIL");
    all_pass = all_pass && r.pass;
  }
  if (!all_pass) {
    for (const auto& r : results) {
      if (!r.pass) {
        std::cerr << "gradient check failed for " << r.name << "\n";
      }
    }
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"repforge " + std::string(kVersion) +
               ": CNN training and evaluation for segmented wearable-sensor "
               "exercise reps"};
  app.require_subcommand(1);

  SynthFlags sf;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--out", sf.out, "output JSON-lines file")->required();
  synth->add_option("--classes", sf.classes, "number of exercise classes");
  synth->add_option("--sets-per-class", sf.sets_per_class, "sets per class");
  synth->add_option("--seed", sf.seed, "generator seed");
  synth->add_option("--noise", sf.noise, "base noise sigma");
  synth->add_option("--few-rep-boost", sf.few_rep_boost,
                    "noise multiplier for sets with < 4 reps");
  synth->add_option("--rep-len-min", sf.rep_len_min, "minimum rep length");
  synth->add_option("--rep-len-max", sf.rep_len_max, "nominal maximum rep length");
  synth->add_option("--overlong-prob", sf.overlong_prob,
                    "fraction of reps exceeding the nominal maximum");

  TrainFlags tf;
  CLI::App* train = app.add_subcommand("train", "train a model");
  train->add_option("--data", tf.data, "JSON-lines dataset")->required();
  train->add_option("--layout", tf.layout,
                    "square84 | rect | rect-disj | channels")->required();
  train->add_option("--depth", tf.depth, "conv layers (2, 3 or 4)")->required();
  train->add_option("--out-model", tf.out_model, "checkpoint path")->required();
  train->add_option("--epochs", tf.epochs, "training epochs");
  train->add_option("--batch", tf.batch, "minibatch size");
  train->add_option("--lr", tf.lr, "Adam learning rate");
  train->add_option("--test-fraction", tf.test_fraction, "held-out set fraction");
  train->add_option("--seed", tf.seed, "seed for split/shuffle/init");
  train->add_option("--eval-every", tf.eval_every,
                    "epochs between accuracy evaluations (0 = never)");
  train->add_option("--classes", tf.classes,
                    "number of classes (default: infer from data)");
  train->add_option("--dropout-keep", tf.dropout_keep, "dropout keep probability");
  train->add_flag("--dropout-on-conv", tf.dropout_on_conv,
                  "apply dropout after conv blocks too");
  train->add_option("--standardize", tf.standardize, "feature | global")
      ->check(CLI::IsMember({"feature", "global"}));
  train->add_option("--log-csv", tf.log_csv,
                    "train log CSV (default: <out-model>.log.csv)");
  train->add_option("--manifest", tf.manifest,
                    "run manifest (default: <out-model>.manifest.json)");

  EvalFlags ef;
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--model", ef.model, "checkpoint path")->required();
  eval->add_option("--data", ef.data, "JSON-lines dataset")->required();
  eval->add_option("--report-json", ef.report_json, "full report output");
  eval->add_option("--confusion-csv", ef.confusion_csv,
                   "normalized confusion matrix output");

  std::uint64_t gc_seed = 1;
  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gradcheck->add_option("--seed", gc_seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << std::flush;
    return 2;
  }

  try {
    if (synth->parsed()) return run_synth(sf);
    if (train->parsed()) return run_train(tf);
    if (eval->parsed()) return run_eval(ef);
    if (gradcheck->parsed()) return run_gradcheck(gc_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
