#include "stepcount/dsp_features.h"

#include <fftw3.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>

#include "stepcount/errors.h"
#include "stepcount/util.h"

namespace stepcount {

void FeatureConfig::validate() const {
  if (sample_rate_hz <= 0) throw ConfigError("features.sample_rate_hz must be positive");
  if (hop_length <= 0 || hop_length > win_length || win_length > fft_size) {
    throw ConfigError("features: require 0 < hop_length <= win_length <= fft_size");
  }
  if (mel_bins < 1) throw ConfigError("features.mel_bins must be >= 1");
  if (!(fmin_hz >= 0.0 && fmin_hz < fmax_hz && fmax_hz <= sample_rate_hz / 2.0)) {
    throw ConfigError("features: require 0 <= fmin_hz < fmax_hz <= sample_rate/2");
  }
  if (!(log_floor > 0.0)) throw ConfigError("features.log_floor must be positive");
}

std::string FeatureConfig::canonical() const {
  std::ostringstream ss;
  ss.precision(17);
  ss << "sr=" << sample_rate_hz << ";fft=" << fft_size << ";win=" << win_length
     << ";hop=" << hop_length << ";mel=" << mel_bins << ";fmin=" << fmin_hz
     << ";fmax=" << fmax_hz << ";floor=" << log_floor << ";norm=" << per_window_norm;
  return ss.str();
}

std::uint64_t FeatureConfig::hash() const { return fnv1a64(canonical()); }

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> analysis_window(const FeatureConfig& cfg) {
  std::vector<double> win(static_cast<std::size_t>(cfg.win_length));
  for (int i = 0; i < cfg.win_length; ++i) {
    win[static_cast<std::size_t>(i)] =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / cfg.win_length);
  }
  return win;
}

namespace {

// FFTW planning is not thread-safe; plans are created once per size under a lock
// and executed with the new-array interface afterwards.
class RealFftPlan {
 public:
  explicit RealFftPlan(int n) : n_(n) {
    double* in = fftw_alloc_real(static_cast<std::size_t>(n));
    fftw_complex* out = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    plan_ = fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
  }
  ~RealFftPlan() { fftw_destroy_plan(plan_); }
  RealFftPlan(const RealFftPlan&) = delete;
  RealFftPlan& operator=(const RealFftPlan&) = delete;

  void execute(double* in, fftw_complex* out) const { fftw_execute_dft_r2c(plan_, in, out); }
  int size() const { return n_; }

 private:
  int n_;
  fftw_plan plan_;
};

const RealFftPlan& plan_for(int n) {
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<RealFftPlan>> plans;
  std::lock_guard lock(mutex);
  auto& slot = plans[n];
  if (!slot) slot = std::make_unique<RealFftPlan>(n);
  return *slot;
}

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};

}  // namespace

RealMatrix stft_power(const Waveform& w, const FeatureConfig& cfg) {
  cfg.validate();
  if (w.size() < static_cast<std::size_t>(cfg.win_length)) {
    throw InvalidInputError("waveform shorter than one analysis window");
  }
  const int n_fft = cfg.fft_size;
  const int n_bins = n_fft / 2 + 1;
  const auto frames =
      static_cast<int>((w.size() - static_cast<std::size_t>(cfg.win_length)) / cfg.hop_length + 1);

  const auto& plan = plan_for(n_fft);
  std::unique_ptr<double, FftwDeleter> buf(fftw_alloc_real(static_cast<std::size_t>(n_fft)));
  std::unique_ptr<fftw_complex, FftwDeleter> spec(
      fftw_alloc_complex(static_cast<std::size_t>(n_bins)));
  const auto window = analysis_window(cfg);
  const auto& x = w.samples();

  RealMatrix power(n_bins, frames);
  for (int t = 0; t < frames; ++t) {
    const std::size_t offset = static_cast<std::size_t>(t) * cfg.hop_length;
    double* frame = buf.get();
    std::fill(frame, frame + n_fft, 0.0);
    for (int i = 0; i < cfg.win_length; ++i) {
      frame[i] = x[offset + static_cast<std::size_t>(i)] * window[static_cast<std::size_t>(i)];
    }
    plan.execute(frame, spec.get());
    for (int k = 0; k < n_bins; ++k) {
      const double re = spec.get()[k][0];
      const double im = spec.get()[k][1];
      power(k, t) = re * re + im * im;
    }
  }
  return power;
}

std::vector<double> mel_center_frequencies(const FeatureConfig& cfg) {
  const double lo = hz_to_mel(cfg.fmin_hz);
  const double hi = hz_to_mel(cfg.fmax_hz);
  std::vector<double> centers(static_cast<std::size_t>(cfg.mel_bins));
  for (int m = 0; m < cfg.mel_bins; ++m) {
    centers[static_cast<std::size_t>(m)] = mel_to_hz(lo + (hi - lo) * (m + 1) / (cfg.mel_bins + 1));
  }
  return centers;
}

RealMatrix mel_filterbank(const FeatureConfig& cfg) {
  cfg.validate();
  const int n_bins = cfg.fft_size / 2 + 1;
  const double lo = hz_to_mel(cfg.fmin_hz);
  const double hi = hz_to_mel(cfg.fmax_hz);
  std::vector<double> edges(static_cast<std::size_t>(cfg.mel_bins + 2));
  for (int i = 0; i < cfg.mel_bins + 2; ++i) {
    edges[static_cast<std::size_t>(i)] = mel_to_hz(lo + (hi - lo) * i / (cfg.mel_bins + 1));
  }

  RealMatrix fb = RealMatrix::Zero(cfg.mel_bins, n_bins);
  for (int m = 0; m < cfg.mel_bins; ++m) {
    const double left = edges[static_cast<std::size_t>(m)];
    const double center = edges[static_cast<std::size_t>(m + 1)];
    const double right = edges[static_cast<std::size_t>(m + 2)];
    double row_sum = 0.0;
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate_hz / cfg.fft_size;
      const double rise = (f - left) / (center - left);
      const double fall = (right - f) / (right - center);
      const double weight = std::max(0.0, std::min(rise, fall));
      fb(m, k) = weight;
      row_sum += weight;
    }
    if (!(row_sum > 0.0)) {
      throw ConfigError("mel filter " + std::to_string(m) +
                        " is empty; too many mel bins for the FFT resolution");
    }
  }
  return fb;
}

int frames_for_samples(std::size_t samples, const FeatureConfig& cfg) {
  return static_cast<int>(samples / static_cast<std::size_t>(cfg.hop_length));
}

MelSpectrogram log_mel(const Waveform& w, const FeatureConfig& cfg) {
  cfg.validate();
  if (w.sample_rate_hz() != cfg.sample_rate_hz) {
    throw InvalidInputError("waveform rate " + std::to_string(w.sample_rate_hz()) +
                            " does not match feature rate " + std::to_string(cfg.sample_rate_hz));
  }
  if (w.size() < static_cast<std::size_t>(cfg.win_length)) {
    throw InvalidInputError("waveform shorter than one analysis window");
  }
  const int frames = frames_for_samples(w.size(), cfg);
  const auto padded_len =
      static_cast<std::ptrdiff_t>(frames - 1) * cfg.hop_length + cfg.win_length;
  const RealMatrix power = stft_power(w.slice(0, std::max<std::ptrdiff_t>(padded_len, static_cast<std::ptrdiff_t>(cfg.win_length))), cfg);
  const RealMatrix fb = mel_filterbank(cfg);
  RealMatrix energies = fb * power.leftCols(frames);

  MelSpectrogram out;
  out.frame_hop_s = cfg.hop_s();
  out.values = energies.unaryExpr([&](double e) { return std::log(std::max(e, cfg.log_floor)); })
                   .cast<float>();
  return out;
}

void standardize(MelSpectrogram& m) {
  if (m.values.size() == 0) return;
  const double n = static_cast<double>(m.values.size());
  const double mean = m.values.cast<double>().sum() / n;
  const double var = (m.values.cast<double>().array() - mean).square().sum() / n;
  const double scale = 1.0 / (std::sqrt(var) + 1e-6);
  m.values = ((m.values.cast<double>().array() - mean) * scale).cast<float>().matrix();
}

namespace {
constexpr char kCacheMagic[4] = {'L', 'M', 'E', 'L'};
constexpr std::uint32_t kCacheVersion = 1;
}  // namespace

void write_feature_cache(const MelSpectrogram& m, std::uint64_t config_hash,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  const auto f = static_cast<std::uint32_t>(m.values.rows());
  const auto t = static_cast<std::uint32_t>(m.values.cols());
  out.write(kCacheMagic, 4);
  out.write(reinterpret_cast<const char*>(&kCacheVersion), 4);
  out.write(reinterpret_cast<const char*>(&f), 4);
  out.write(reinterpret_cast<const char*>(&t), 4);
  out.write(reinterpret_cast<const char*>(&m.frame_hop_s), 8);
  out.write(reinterpret_cast<const char*>(&config_hash), 8);
  out.write(reinterpret_cast<const char*>(m.values.data()),
            static_cast<std::streamsize>(sizeof(float) * m.values.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

MelSpectrogram read_feature_cache(const std::filesystem::path& path, std::uint64_t* config_hash) {
  const std::string bytes = read_file(path);
  constexpr std::size_t kHeader = 4 + 4 + 4 + 4 + 8 + 8;
  if (bytes.size() < kHeader || std::memcmp(bytes.data(), kCacheMagic, 4) != 0) {
    throw FormatError(path.string() + ": not a feature cache file");
  }
  std::uint32_t version = 0, f = 0, t = 0;
  double hop = 0.0;
  std::uint64_t hash = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&f, bytes.data() + 8, 4);
  std::memcpy(&t, bytes.data() + 12, 4);
  std::memcpy(&hop, bytes.data() + 16, 8);
  std::memcpy(&hash, bytes.data() + 24, 8);
  if (version != kCacheVersion) throw FormatError(path.string() + ": unknown cache version");
  if (bytes.size() != kHeader + sizeof(float) * f * t) {
    throw FormatError(path.string() + ": payload size does not match header");
  }
  MelSpectrogram m;
  m.frame_hop_s = hop;
  m.values.resize(f, t);
  std::memcpy(m.values.data(), bytes.data() + kHeader, sizeof(float) * f * t);
  if (config_hash != nullptr) *config_hash = hash;
  return m;
}

}  // namespace stepcount
