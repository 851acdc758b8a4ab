#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "repforge/dataset.hpp"
#include "repforge/model.hpp"
#include "repforge/optimizer.hpp"

namespace repforge {

struct TrainConfig {
  std::size_t batch_size = 100;
  std::size_t epochs = 40;
  double lr = 0.0005;
  std::uint64_t shuffle_seed = 0;
  std::size_t eval_every = 1;  // epochs between accuracy evaluations; 0 = never
  std::string checkpoint_path;  // written after the last epoch when non-empty
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean per-rep training loss
  bool evaluated = false;
  double train_acc = 0.0;  // rep-based, only meaningful when evaluated
  double test_acc = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
};

// Deterministic permutation of [0, n) for one epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t shuffle_seed,
                                     std::size_t epoch);

// Minibatch training: per epoch a seeded shuffle, batches of batch_size (the
// final partial batch is trained too), mean loss/gradients per batch, one
// adam_step per batch. Per-item forward/backward runs in parallel but
// gradients are reduced in item order, so results do not depend on the
// worker count. Aborts on non-finite loss.
TrainLog run_training(Model& model, AdamState& opt, const SplitDataset& data,
                      const TrainConfig& cfg);

void write_train_log_csv(const TrainLog& log, const std::string& path);

// Little-endian binary checkpoint: magic "RFCK", format version, the
// serialized model config, then named tensors (parameters, Adam state, the
// train-time standardizer).
void save_checkpoint(const Model& model, const AdamState& opt,
                     const Standardizer& standardizer, const std::string& path);

struct Checkpoint {
  Model model;
  AdamState opt;
  Standardizer standardizer;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace repforge
