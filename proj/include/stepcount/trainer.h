#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "stepcount/augment.h"
#include "stepcount/estimators.h"
#include "stepcount/windowing.h"

namespace stepcount {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 32;
  double lr = 1e-3;
  int scheduler_patience = 5;
  double scheduler_factor = 0.9;
  double min_lr = 1e-5;
  // Stop when validation MSE has not improved for this many epochs.
  int divergence_patience = 30;
  AugmentSpec augment;
  std::uint64_t seed = 0;
  double window_len_s = 5.0;
  WindowStrategy strategy = WindowStrategy::fixed;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // MSE in step units
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  std::string stop_reason;

  nlohmann::json to_json() const;
};

struct TrainResult {
  CnnRegressor model;  // parameters from the best validation epoch
  TrainHistory history;
};

// Minimizes MSE on the fold's training recordings with Adam and a plateau
// scheduler on validation MSE. Fully deterministic for a given seed.
TrainResult train(CnnRegressor model, std::span<const WindowSample> samples, const FoldSplit& fold,
                  const TrainConfig& cfg);

// Indices of samples whose recording id is in `ids`.
std::vector<std::size_t> select_samples(std::span<const WindowSample> samples,
                                        const std::vector<std::string>& ids);

}  // namespace stepcount
