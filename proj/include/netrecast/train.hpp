#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "netrecast/data.hpp"
#include "netrecast/network.hpp"
#include "netrecast/optim.hpp"

namespace netrecast {

struct EvalResult {
  double accuracy = 0.0;  // fraction in [0, 1]
  double loss = 0.0;      // mean cross-entropy
  std::int64_t correct = 0;
  std::int64_t total = 0;
};

// Eval-mode pass over `data` (normalized with `norm`, no augmentation).
EvalResult evaluate(Network& net, const Dataset& data, const NormStats& norm, int batch_size = 250);

// Row of the metrics CSV `epoch,train_loss,val_acc,lr`.
struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_acc = 0.0;
  double lr = 0.0;
};

std::string format_metrics_csv(std::span<const EpochRecord> records);

struct TrainResult {
  std::vector<EpochRecord> epochs;
  double best_val_acc = 0.0;
  int best_epoch = -1;
};

struct TrainConfig {
  int epochs = 10;
  int batch_size = 64;
  OptimizerConfig optimizer = OptimizerConfig::sgd(0.05, 0.9, 5e-4);
  bool augment = true;
  std::uint64_t seed = 1;
  // Restore the parameters of the epoch with the best validation accuracy.
  bool keep_best = true;
  std::function<void(const EpochRecord&)> on_epoch;
};

// Plain backpropagation on cross-entropy (teacher training and the
// from-scratch baselines).
TrainResult train_supervised(Network& net, const Dataset& train, const Dataset& val, const NormStats& norm,
                             const TrainConfig& config);

// Recomputes the running statistics of the blocks at `positions` from one
// pass over `data` (no augmentation): statistics are reset and accumulated
// as a cumulative average over batches. Other blocks run in eval mode.
void refresh_bn_statistics(Network& net, const Dataset& data, const NormStats& norm, std::span<const int> positions,
                           int batch_size = 250);

// Fraction of identical argmax predictions between two networks.
double prediction_agreement(Network& a, Network& b, const Dataset& data, const NormStats& norm);

}  // namespace netrecast
