#include "stepcount/trainer.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "stepcount/errors.h"
#include "stepcount/nn/ops.h"
#include "stepcount/nn/optim.h"
#include "stepcount/util.h"

namespace stepcount {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (scheduler_patience < 1) throw ConfigError("train.scheduler_patience must be >= 1");
  if (!(scheduler_factor > 0.0 && scheduler_factor <= 1.0)) {
    throw ConfigError("train.scheduler_factor must lie in (0, 1]");
  }
  if (!(min_lr > 0.0)) throw ConfigError("train.min_lr must be positive");
  if (divergence_patience < 1) throw ConfigError("train.divergence_patience must be >= 1");
  if (!(window_len_s > 0.0)) throw ConfigError("window_len_s must be positive");
}

nlohmann::json TrainHistory::to_json() const {
  nlohmann::json j;
  j["best_epoch"] = best_epoch;
  j["best_val_loss"] = best_val_loss;
  j["stop_reason"] = stop_reason;
  auto& arr = j["epochs"] = nlohmann::json::array();
  for (const auto& e : epochs) {
    arr.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}, {"lr", e.lr}});
  }
  return j;
}

std::vector<std::size_t> select_samples(std::span<const WindowSample> samples,
                                        const std::vector<std::string>& ids) {
  const std::set<std::string> wanted(ids.begin(), ids.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (wanted.contains(samples[i].recording_id)) out.push_back(i);
  }
  return out;
}

namespace {

double validation_mse(CnnRegressor& model, std::span<const WindowSample> samples,
                      const std::vector<std::size_t>& idx) {
  std::vector<const MelSpectrogram*> feats;
  feats.reserve(idx.size());
  for (std::size_t i : idx) feats.push_back(&samples[i].features);
  const auto pred = model.predict(feats);
  double acc = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const double d = pred[k] - samples[idx[k]].label_steps;
    acc += d * d;
  }
  return acc / static_cast<double>(idx.size());
}

}  // namespace

TrainResult train(CnnRegressor model, std::span<const WindowSample> samples, const FoldSplit& fold,
                  const TrainConfig& cfg) {
  cfg.validate();
  retain_freed_memory();
  const auto train_idx = select_samples(samples, fold.train);
  const auto val_idx = select_samples(samples, fold.validation);
  if (train_idx.empty()) throw InvalidInputError(fold.fold_id + ": empty training partition");
  if (val_idx.empty()) throw InvalidInputError(fold.fold_id + ": empty validation partition");

  const auto& first = samples[train_idx[0]].features.values;
  const auto F = static_cast<std::size_t>(first.rows());
  const auto T = static_cast<std::size_t>(first.cols());
  for (const auto& s : samples) {
    if (static_cast<std::size_t>(s.features.values.rows()) != F ||
        static_cast<std::size_t>(s.features.values.cols()) != T) {
      throw ShapeError("inconsistent feature geometry across samples");
    }
  }
  cfg.augment.validate(static_cast<int>(F), static_cast<int>(T));

  // Regress standardized labels; the model maps predictions back to steps.
  std::vector<double> labels;
  for (std::size_t i : train_idx) labels.push_back(samples[i].label_steps);
  const double mean = std::accumulate(labels.begin(), labels.end(), 0.0) / static_cast<double>(labels.size());
  double var = 0.0;
  for (double y : labels) var += (y - mean) * (y - mean);
  var /= static_cast<double>(labels.size());
  const double scale = var > 1e-12 ? std::sqrt(var) : 1.0;
  model.set_label_normalization(mean, scale);

  nn::AdamState adam;
  adam.lr = cfg.lr;
  nn::PlateauScheduler scheduler;
  scheduler.lr = cfg.lr;
  scheduler.patience = cfg.scheduler_patience;
  scheduler.factor = cfg.scheduler_factor;
  scheduler.min_lr = std::min(cfg.min_lr, cfg.lr);

  CnnRegressor current = std::move(model);
  auto params = current.parameter_ptrs();
  TrainResult result{current, {}};
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  result.history.stop_reason = "epoch_cap";

  const std::size_t frame = F * T;
  const auto batch_size = static_cast<std::size_t>(cfg.batch_size);
  std::vector<std::size_t> order = train_idx;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, {1, static_cast<std::uint64_t>(epoch)}));
    order = train_idx;
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    for (std::size_t start = 0, batch = 0; start < order.size(); start += batch_size, ++batch) {
      const std::size_t n = std::min(batch_size, order.size() - start);
      nn::Tensor<float> x({n, 1, F, T});
      nn::Tensor<float> y({n, 1});
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t si = order[start + k];
        const WindowSample& s = samples[si];
        AugmentRng rng(derive_seed(cfg.seed, {2, static_cast<std::uint64_t>(epoch), si}));
        const MelSpectrogram* feat = &s.features;
        MelSpectrogram augmented;
        if (cfg.augment.kind == AugmentKind::spec_mask) {
          augmented = spec_mask(s.features, cfg.augment, rng);
          feat = &augmented;
        } else if (cfg.augment.kind == AugmentKind::filter_aug) {
          augmented = filter_aug(s.features, cfg.augment, rng);
          feat = &augmented;
        }
        std::copy(feat->values.data(), feat->values.data() + frame, x.data() + k * frame);
        y[k] = static_cast<float>((s.label_steps - mean) / scale);
      }
      if (cfg.augment.kind == AugmentKind::mixup && n > 1) {
        AugmentRng rng(derive_seed(cfg.seed, {3, static_cast<std::uint64_t>(epoch), batch}));
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        const double lambda = sample_mixup_lambda(cfg.augment.alpha, rng);
        nn::Tensor<float> mixed_x = x;
        nn::Tensor<float> mixed_y = y;
        const auto l = static_cast<float>(lambda);
        for (std::size_t k = 0; k < n; ++k) {
          const float* a = x.data() + k * frame;
          const float* b = x.data() + perm[k] * frame;
          float* dst = mixed_x.data() + k * frame;
          for (std::size_t i = 0; i < frame; ++i) dst[i] = l * a[i] + (1.0f - l) * b[i];
          mixed_y[k] = l * y[k] + (1.0f - l) * y[perm[k]];
        }
        x = std::move(mixed_x);
        y = std::move(mixed_y);
      }

      for (auto* p : params) p->zero_grad();
      nn::Tape<float> tape;
      const nn::Var out = current.forward(tape, x);
      const nn::Var loss = nn::mse_loss(tape, out, y);
      loss_sum += static_cast<double>(tape.value(loss)[0]) * static_cast<double>(n);
      tape.backward(loss);
      nn::adam_step<float>(params, adam);
    }

    const double train_loss = loss_sum / static_cast<double>(order.size()) * scale * scale;
    const double val_loss = validation_mse(current, samples, val_idx);
    result.history.epochs.push_back({epoch, train_loss, val_loss, adam.lr});

    if (!std::isfinite(val_loss)) {
      result.history.stop_reason = "non_finite_loss";
      break;
    }
    if (val_loss < best_val) {
      best_val = val_loss;
      since_best = 0;
      result.history.best_epoch = epoch;
      result.history.best_val_loss = val_loss;
      result.model = current;
    } else if (++since_best >= cfg.divergence_patience) {
      result.history.stop_reason = "no_improvement";
      break;
    }
    scheduler.step(val_loss);
    adam.lr = scheduler.lr;
  }
  return result;
}

}  // namespace stepcount
