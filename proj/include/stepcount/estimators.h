#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stepcount/audio_io.h"
#include "stepcount/dsp_features.h"
#include "stepcount/nn/tensor.h"

namespace stepcount {

enum class EstimatorKind { naive, peakpick, cnn };

std::string to_string(EstimatorKind k);
EstimatorKind parse_estimator(const std::string& name);

// Constant predictor: the mean training label.
class NaiveBaseline {
 public:
  static NaiveBaseline fit(std::span<const int> labels);
  static NaiveBaseline fit(std::span<const double> labels);
  double predict() const { return mean_label_; }
  double mean_label() const { return mean_label_; }

 private:
  double mean_label_ = 0.0;
};

struct PeakPickConfig {
  double band_lo_hz = 60.0;
  double band_hi_hz = 2000.0;
  double envelope_smooth_ms = 30.0;
  double peak_min_distance_s = 0.22;
  double threshold_k = 3.0;  // multiple of the median envelope

  void validate(int sample_rate_hz) const;
};

// Band-pass -> full-wave rectify -> moving-average envelope -> peaks above
// threshold_k * median(envelope), at least peak_min_distance_s apart.
class PeakPickEstimator {
 public:
  explicit PeakPickEstimator(PeakPickConfig cfg = {}) : cfg_(cfg) {}
  const PeakPickConfig& config() const { return cfg_; }

  // Sample indices of accepted peaks, ascending.
  std::vector<std::size_t> peaks(const Waveform& w) const;
  // Requires at least one second of audio.
  double count(const Waveform& w) const;

 private:
  PeakPickConfig cfg_;
};

// Four blocks of (3x3 conv, padding 1) -> ReLU -> 2x2 average pool with
// 16/32/64/128 channels, global mean+max pooling, then 256 -> 64 -> 1.
// The network regresses standardized labels; predict() maps back to steps.
template <typename T>
class CnnRegressorT {
 public:
  static constexpr std::string_view kArchitectureId = "cnn4-c16-32-64-128-meanmax-fc64";
  static constexpr int kMinMelBins = 16;

  CnnRegressorT();
  explicit CnnRegressorT(std::uint64_t init_seed, std::uint64_t feature_hash = 0);

  // batch: N x 1 x F x T. Returns an N x 1 node holding standardized outputs.
  nn::Var forward(nn::Tape<T>& tape, const nn::Tensor<T>& batch, bool track_grads = true);

  // Unrounded step counts, one per input row.
  std::vector<double> predict(const nn::Tensor<T>& batch);
  std::vector<double> predict(std::span<const MelSpectrogram* const> features);
  double predict(const MelSpectrogram& features);

  std::vector<nn::Parameter<T>>& parameters() { return params_; }
  const std::vector<nn::Parameter<T>>& parameters() const { return params_; }
  std::vector<nn::Parameter<T>*> parameter_ptrs();
  std::size_t parameter_count() const;

  double label_mean() const { return label_mean_; }
  double label_scale() const { return label_scale_; }
  void set_label_normalization(double mean, double scale);

  std::uint64_t feature_hash() const { return feature_hash_; }
  void set_feature_hash(std::uint64_t h) { feature_hash_ = h; }

  template <typename U>
  CnnRegressorT<U> cast() const {
    CnnRegressorT<U> out;
    auto& dst = out.parameters();
    for (std::size_t i = 0; i < params_.size(); ++i) {
      dst[i].value = params_[i].value.template cast<U>();
      dst[i].grad = nn::Tensor<U>(dst[i].value.shape());
    }
    out.set_label_normalization(label_mean_, label_scale_);
    out.set_feature_hash(feature_hash_);
    return out;
  }

 private:
  std::vector<nn::Parameter<T>> params_;
  double label_mean_ = 0.0;
  double label_scale_ = 1.0;
  std::uint64_t feature_hash_ = 0;
};

using CnnRegressor = CnnRegressorT<float>;

extern template class CnnRegressorT<float>;
extern template class CnnRegressorT<double>;

// Packs features (all F x T) into an N x 1 x F x T tensor.
template <typename T>
nn::Tensor<T> pack_batch(std::span<const MelSpectrogram* const> features);

}  // namespace stepcount
