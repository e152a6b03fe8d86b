#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <Eigen/Core>

#include "stepcount/audio_io.h"

namespace stepcount {

using RealMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using FeatureMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct FeatureConfig {
  int sample_rate_hz = kCanonicalSampleRate;
  int fft_size = 512;
  int win_length = 400;  // 25 ms
  int hop_length = 160;  // 10 ms
  int mel_bins = 64;
  double fmin_hz = 50.0;
  double fmax_hz = 8000.0;
  double log_floor = 1e-10;
  bool per_window_norm = true;

  double hop_s() const { return static_cast<double>(hop_length) / sample_rate_hz; }

  // Throws ConfigError if the invariants hop <= win <= fft, fmin < fmax <= sr/2 fail.
  void validate() const;
  // Stable textual form; hashed into feature caches and checkpoints.
  std::string canonical() const;
  std::uint64_t hash() const;
};

// F x T log-energies (row = mel bin, column = frame).
struct MelSpectrogram {
  FeatureMatrix values;
  double frame_hop_s = 0.01;
  int mel_bins() const { return static_cast<int>(values.rows()); }
  int frames() const { return static_cast<int>(values.cols()); }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// (fft_size/2 + 1) x T power spectrogram, Hann window, no centering.
RealMatrix stft_power(const Waveform& w, const FeatureConfig& cfg);

// mel_bins x (fft_size/2 + 1) triangular filters.
RealMatrix mel_filterbank(const FeatureConfig& cfg);

// Center frequency of each mel filter in Hz.
std::vector<double> mel_center_frequencies(const FeatureConfig& cfg);

// Hann window of length cfg.win_length (periodic form).
std::vector<double> analysis_window(const FeatureConfig& cfg);

// Number of frames a log-mel of `samples` produces: floor(samples / hop).
int frames_for_samples(std::size_t samples, const FeatureConfig& cfg);

// log(max(fb * power, floor)). The signal is right-padded with zeros so the
// result has frames_for_samples(len) columns.
MelSpectrogram log_mel(const Waveform& w, const FeatureConfig& cfg);

// Subtracts the mean and divides by (std + 1e-6), in place.
void standardize(MelSpectrogram& m);

// Feature cache file: "LMEL", u32 version, u32 F, u32 T, f64 hop_s,
// u64 config hash, then F*T float32 row-major (all little-endian).
void write_feature_cache(const MelSpectrogram& m, std::uint64_t config_hash,
                         const std::filesystem::path& path);
MelSpectrogram read_feature_cache(const std::filesystem::path& path,
                                  std::uint64_t* config_hash = nullptr);

}  // namespace stepcount
