#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stepcount/audio_io.h"
#include "stepcount/dsp_features.h"

namespace stepcount {

// Ground-truth step events for one recording.
struct StepAnnotations {
  std::string recording_id;
  std::string runner_id;
  std::vector<double> step_times_s;  // strictly increasing, within [0, duration]
  double recording_duration_s = 0.0;

  // Throws InvalidInputError on unsorted or out-of-range timestamps.
  void validate() const;
};

// Half-open interval [start_s, end_s).
struct Window {
  double start_s = 0.0;
  double end_s = 0.0;
  double length_s() const { return end_s - start_s; }
  bool operator==(const Window&) const = default;
};

enum class WindowStrategy { fixed, step_aligned };

std::string to_string(WindowStrategy s);
WindowStrategy parse_strategy(const std::string& name);

struct WindowSample {
  Window window;
  int label_steps = 0;
  MelSpectrogram features;
  std::vector<float> audio;  // raw window audio, only when requested
  std::string recording_id;
  std::string runner_id;
  // Step-aligned windows need annotations at inference time.
  bool oracle_dependent = false;
};

// [0,w), [w,2w), ...; a trailing remainder shorter than w is dropped.
std::vector<Window> fixed_windows(double duration_s, double win_len_s);

// Each window starts where the previous ended and ends at the last step strictly
// before start + w. Generation stops once no step lies in (start, start + w).
std::vector<Window> step_aligned_windows(const StepAnnotations& ann, double win_len_s);

// |{ t : start <= t < end }|
int count_steps(const StepAnnotations& ann, const Window& win);

struct SampleOptions {
  bool compute_features = true;
  bool keep_audio = false;
};

// One labeled sample per window. Windows shorter than win_len_s are zero-padded
// to the full window length before featurization.
std::vector<WindowSample> make_samples(const StepAnnotations& ann, const Waveform& waveform,
                                       WindowStrategy strategy, double win_len_s,
                                       const FeatureConfig& cfg, const SampleOptions& opts = {});

// Runner-disjoint train/validation/test partition of recording ids.
struct FoldSplit {
  std::string fold_id;
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
};

struct SplitRatios {
  double train = 0.6;
  double validation = 0.2;
  double test = 0.2;
};

// Runners are dealt into n_folds groups by serpentine round-robin over runners
// sorted by recording count (ties broken by a seeded shuffle). Fold k tests on
// group k, validates on group k+1 and trains on the rest. The ratios fix how
// many groups each partition receives, so only multiples of 1/n_folds are exact.
std::vector<FoldSplit> generate_splits(const std::vector<StepAnnotations>& annotations,
                                       int n_folds = 5, SplitRatios ratios = {},
                                       std::uint64_t seed = 0);

}  // namespace stepcount
