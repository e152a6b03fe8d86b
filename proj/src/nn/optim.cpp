#include "stepcount/nn/optim.h"

#include <algorithm>
#include <cmath>

#include "stepcount/errors.h"

namespace stepcount::nn {

template <typename T>
void adam_step(std::span<Parameter<T>* const> params, AdamState& state) {
  if (state.first_moment.empty()) {
    for (const auto* p : params) {
      state.first_moment.emplace_back(p->value.size(), 0.0);
      state.second_moment.emplace_back(p->value.size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ShapeError("adam_step: parameter list changed between steps");
  }
  ++state.step_count;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<T>& p = *params[i];
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    if (m.size() != p.value.size() || p.grad.size() != p.value.size()) {
      throw ShapeError("adam_step: moment or gradient shape mismatch for '" + p.name + "'");
    }
    for (std::size_t k = 0; k < m.size(); ++k) {
      const double g = p.grad[k];
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g;
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      p.value[k] = static_cast<T>(p.value[k] - state.lr * m_hat / (std::sqrt(v_hat) + state.eps));
    }
  }
}

template void adam_step<float>(std::span<Parameter<float>* const>, AdamState&);
template void adam_step<double>(std::span<Parameter<double>* const>, AdamState&);

bool PlateauScheduler::step(double val_metric) {
  if (val_metric <= best_metric - min_delta) {
    best_metric = val_metric;
    epochs_since_improvement = 0;
    return false;
  }
  if (++epochs_since_improvement < patience) return false;
  epochs_since_improvement = 0;
  const double reduced = std::max(lr * factor, min_lr);
  const bool changed = reduced < lr;
  lr = reduced;
  return changed;
}

}  // namespace stepcount::nn
