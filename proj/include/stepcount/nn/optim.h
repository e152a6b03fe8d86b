#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "stepcount/nn/tensor.h"

namespace stepcount::nn {

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step_count = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

// One bias-corrected Adam update, p <- p - lr * m_hat / (sqrt(v_hat) + eps),
// using each parameter's accumulated grad. Moment buffers are created on the
// first call and must keep matching the parameter list afterwards.
template <typename T>
void adam_step(std::span<Parameter<T>* const> params, AdamState& state);

// Multiplies the learning rate by `factor` after `patience` consecutive epochs
// without an improvement of at least `min_delta`.
struct PlateauScheduler {
  double lr = 1e-3;
  int patience = 5;
  double factor = 0.9;
  double min_lr = 1e-5;
  double min_delta = 1e-6;
  double best_metric = std::numeric_limits<double>::infinity();
  int epochs_since_improvement = 0;

  // Returns true when the learning rate was reduced.
  bool step(double val_metric);
};

}  // namespace stepcount::nn
