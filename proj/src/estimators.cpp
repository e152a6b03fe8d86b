#include "stepcount/estimators.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "stepcount/errors.h"
#include "stepcount/nn/ops.h"

namespace stepcount {

std::string to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::naive: return "naive";
    case EstimatorKind::peakpick: return "peakpick";
    case EstimatorKind::cnn: return "cnn";
  }
  return "naive";
}

EstimatorKind parse_estimator(const std::string& name) {
  if (name == "naive") return EstimatorKind::naive;
  if (name == "peakpick") return EstimatorKind::peakpick;
  if (name == "cnn") return EstimatorKind::cnn;
  throw ConfigError("unknown estimator '" + name + "' (expected naive|peakpick|cnn)");
}

NaiveBaseline NaiveBaseline::fit(std::span<const int> labels) {
  std::vector<double> d(labels.begin(), labels.end());
  return fit(std::span<const double>(d));
}

NaiveBaseline NaiveBaseline::fit(std::span<const double> labels) {
  if (labels.empty()) throw InvalidInputError("naive baseline needs at least one label");
  NaiveBaseline b;
  b.mean_label_ = std::accumulate(labels.begin(), labels.end(), 0.0) / static_cast<double>(labels.size());
  return b;
}

// --- peak picking --------------------------------------------------------

void PeakPickConfig::validate(int sample_rate_hz) const {
  if (!(band_lo_hz > 0.0 && band_lo_hz < band_hi_hz && band_hi_hz < sample_rate_hz / 2.0)) {
    throw ConfigError("peakpick: require 0 < band_lo_hz < band_hi_hz < Nyquist");
  }
  if (!(peak_min_distance_s > 0.0)) throw ConfigError("peakpick: peak_min_distance_s must be positive");
  if (!(envelope_smooth_ms > 0.0)) throw ConfigError("peakpick: envelope_smooth_ms must be positive");
  if (!(threshold_k > 0.0)) throw ConfigError("peakpick: threshold_k must be positive");
}

namespace {

struct Biquad {
  double b0, b1, b2, a1, a2;

  static Biquad make(bool high_pass, double cutoff_hz, double sr) {
    const double w0 = 2.0 * std::numbers::pi * cutoff_hz / sr;
    const double quality = 1.0 / std::numbers::sqrt2;  // Butterworth
    const double alpha = std::sin(w0) / (2.0 * quality);
    const double c = std::cos(w0);
    const double a0 = 1.0 + alpha;
    Biquad q{};
    if (high_pass) {
      q.b0 = (1.0 + c) / 2.0 / a0;
      q.b1 = -(1.0 + c) / a0;
    } else {
      q.b0 = (1.0 - c) / 2.0 / a0;
      q.b1 = (1.0 - c) / a0;
    }
    q.b2 = q.b0;
    q.a1 = -2.0 * c / a0;
    q.a2 = (1.0 - alpha) / a0;
    return q;
  }

  void apply(std::vector<double>& x) const {
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
    for (double& v : x) {
      const double y = b0 * v + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
      x2 = x1;
      x1 = v;
      y2 = y1;
      y1 = y;
      v = y;
    }
  }
};

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

}  // namespace

std::vector<std::size_t> PeakPickEstimator::peaks(const Waveform& w) const {
  const int sr = w.sample_rate_hz();
  cfg_.validate(sr);
  std::vector<double> x(w.samples().begin(), w.samples().end());
  Biquad::make(true, cfg_.band_lo_hz, sr).apply(x);
  Biquad::make(false, cfg_.band_hi_hz, sr).apply(x);
  for (double& v : x) v = std::abs(v);

  // Centered moving average via prefix sums.
  const auto n = x.size();
  const auto half = static_cast<std::size_t>(std::max(1.0, std::round(cfg_.envelope_smooth_ms * 1e-3 * sr / 2.0)));
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
  std::vector<double> env(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n, i + half + 1);
    env[i] = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
  }

  const double threshold = cfg_.threshold_k * median_of(env);
  std::vector<std::size_t> candidates;
  for (std::size_t i = 1; i < n; ++i) {
    const bool rising = env[i] > env[i - 1];
    // A burst cut off by the window end still counts once its envelope crosses the threshold.
    const bool local_max = rising && (i + 1 == n || env[i] >= env[i + 1]);
    if (local_max && env[i] > threshold) candidates.push_back(i);
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](std::size_t a, std::size_t b) { return env[a] > env[b]; });

  const auto min_gap = static_cast<std::size_t>(std::llround(cfg_.peak_min_distance_s * sr));
  std::vector<std::size_t> accepted;
  for (std::size_t c : candidates) {
    const bool clear = std::all_of(accepted.begin(), accepted.end(), [&](std::size_t a) {
      return (a > c ? a - c : c - a) >= min_gap;
    });
    if (clear) accepted.push_back(c);
  }
  std::sort(accepted.begin(), accepted.end());
  return accepted;
}

double PeakPickEstimator::count(const Waveform& w) const {
  if (w.duration_s() < 1.0) throw InvalidInputError("peak picking needs at least 1 s of audio");
  return static_cast<double>(peaks(w).size());
}

// --- CNN regressor -------------------------------------------------------

namespace {

template <typename T>
nn::Parameter<T> kaiming_uniform(std::string name, nn::Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  nn::Tensor<T> t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(dist(rng));
  return nn::Parameter<T>(std::move(name), std::move(t));
}

template <typename T>
nn::Parameter<T> zeros(std::string name, nn::Shape shape) {
  return nn::Parameter<T>(std::move(name), nn::Tensor<T>(std::move(shape)));
}

constexpr std::size_t kChannels[] = {16, 32, 64, 128};
constexpr std::size_t kHidden = 64;
constexpr std::size_t kPredictChunk = 16;

}  // namespace

template <typename T>
CnnRegressorT<T>::CnnRegressorT() : CnnRegressorT(0) {}

template <typename T>
CnnRegressorT<T>::CnnRegressorT(std::uint64_t init_seed, std::uint64_t feature_hash)
    : feature_hash_(feature_hash) {
  std::mt19937_64 rng(init_seed);
  std::size_t in_ch = 1;
  for (std::size_t b = 0; b < 4; ++b) {
    const std::string prefix = "conv" + std::to_string(b + 1);
    params_.push_back(kaiming_uniform<T>(prefix + ".weight", {kChannels[b], in_ch, 3, 3}, in_ch * 9, rng));
    params_.push_back(zeros<T>(prefix + ".bias", {kChannels[b]}));
    in_ch = kChannels[b];
  }
  const std::size_t pooled = 2 * kChannels[3];
  params_.push_back(kaiming_uniform<T>("fc1.weight", {kHidden, pooled}, pooled, rng));
  params_.push_back(zeros<T>("fc1.bias", {kHidden}));
  params_.push_back(kaiming_uniform<T>("fc2.weight", {1, kHidden}, kHidden, rng));
  params_.push_back(zeros<T>("fc2.bias", {1}));
}

template <typename T>
nn::Var CnnRegressorT<T>::forward(nn::Tape<T>& tape, const nn::Tensor<T>& batch, bool track_grads) {
  if (batch.rank() != 4 || batch.dim(1) != 1) {
    throw ShapeError("CnnRegressor expects N x 1 x F x T input, got " + nn::shape_string(batch.shape()));
  }
  if (batch.dim(2) < kMinMelBins || batch.dim(3) < kMinMelBins) {
    throw ShapeError("CnnRegressor input too small for four pooling stages: " + nn::shape_string(batch.shape()));
  }
  std::vector<nn::Var> p;
  p.reserve(params_.size());
  for (auto& param : params_) p.push_back(track_grads ? tape.parameter(param) : tape.constant(param.value));

  nn::Var h = tape.constant(batch);
  for (std::size_t b = 0; b < 4; ++b) {
    h = nn::conv2d(tape, h, p[2 * b], p[2 * b + 1], {.padding = 1, .stride = 1});
    h = nn::relu(tape, h);
    h = nn::avg_pool2d(tape, h, 2, 2);
  }
  h = nn::global_mean_max_pool(tape, h);
  h = nn::linear(tape, h, p[8], p[9]);
  h = nn::relu(tape, h);
  return nn::linear(tape, h, p[10], p[11]);
}

template <typename T>
std::vector<double> CnnRegressorT<T>::predict(const nn::Tensor<T>& batch) {
  std::vector<double> out;
  out.reserve(batch.dim(0));
  const std::size_t row = batch.size() / std::max<std::size_t>(1, batch.dim(0));
  for (std::size_t start = 0; start < batch.dim(0); start += kPredictChunk) {
    const std::size_t n = std::min(kPredictChunk, batch.dim(0) - start);
    std::vector<T> chunk(batch.data() + start * row, batch.data() + (start + n) * row);
    nn::Tensor<T> x({n, 1, batch.dim(2), batch.dim(3)}, std::move(chunk));
    nn::Tape<T> tape;
    const nn::Var y = forward(tape, x, false);
    for (std::size_t i = 0; i < n; ++i) {
      out.push_back(static_cast<double>(tape.value(y)[i]) * label_scale_ + label_mean_);
    }
  }
  return out;
}

template <typename T>
std::vector<double> CnnRegressorT<T>::predict(std::span<const MelSpectrogram* const> features) {
  std::vector<double> out;
  out.reserve(features.size());
  for (std::size_t start = 0; start < features.size(); start += kPredictChunk) {
    const std::size_t n = std::min(kPredictChunk, features.size() - start);
    auto part = predict(pack_batch<T>(features.subspan(start, n)));
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

template <typename T>
double CnnRegressorT<T>::predict(const MelSpectrogram& features) {
  const MelSpectrogram* one[] = {&features};
  return predict(std::span<const MelSpectrogram* const>(one))[0];
}

template <typename T>
std::vector<nn::Parameter<T>*> CnnRegressorT<T>::parameter_ptrs() {
  std::vector<nn::Parameter<T>*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

template <typename T>
std::size_t CnnRegressorT<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
void CnnRegressorT<T>::set_label_normalization(double mean, double scale) {
  if (!(scale > 0.0) || !std::isfinite(mean)) throw InvalidInputError("invalid label normalization");
  label_mean_ = mean;
  label_scale_ = scale;
}

template <typename T>
nn::Tensor<T> pack_batch(std::span<const MelSpectrogram* const> features) {
  if (features.empty()) throw InvalidInputError("empty feature batch");
  const auto F = static_cast<std::size_t>(features[0]->values.rows());
  const auto Tn = static_cast<std::size_t>(features[0]->values.cols());
  nn::Tensor<T> out({features.size(), 1, F, Tn});
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& m = features[i]->values;
    if (static_cast<std::size_t>(m.rows()) != F || static_cast<std::size_t>(m.cols()) != Tn) {
      throw ShapeError("feature geometry differs within batch");
    }
    T* dst = out.data() + i * F * Tn;
    for (std::size_t k = 0; k < F * Tn; ++k) dst[k] = static_cast<T>(m.data()[k]);
  }
  return out;
}

template class CnnRegressorT<float>;
template class CnnRegressorT<double>;
template nn::Tensor<float> pack_batch<float>(std::span<const MelSpectrogram* const>);
template nn::Tensor<double> pack_batch<double>(std::span<const MelSpectrogram* const>);

}  // namespace stepcount
