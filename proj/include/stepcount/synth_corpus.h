#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "stepcount/audio_io.h"
#include "stepcount/windowing.h"

namespace stepcount {

enum class SurfaceTone { soft, hard };

struct SynthProfile {
  double cadence_spm = 170.0;
  double cadence_jitter = 0.0;  // std-dev of inter-step interval, as a fraction
  double step_gain_db = -6.0;    // peak level of a step burst, dBFS
  double noise_floor_db = -40.0; // background RMS, dBFS
  double step_decay_ms = 20.0;
  SurfaceTone surface_tone = SurfaceTone::hard;
  double duration_s = 60.0;
  std::uint64_t seed = 0;

  void validate() const;
};

constexpr double kFirstStepTime = 0.2;

struct SynthRecording {
  Waveform waveform;
  StepAnnotations annotations;
};

// Steps at t0 = 0.2 s, t_{k+1} = t_k + (60/cadence)(1 + jitter g_k). Each step
// is an exponentially decaying noise burst over pink-ish background noise.
SynthRecording synth_recording(const SynthProfile& profile, std::string recording_id = "rec",
                               std::string runner_id = "runner");

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct ProfileRanges {
  Range cadence_spm{150.0, 190.0};
  Range cadence_jitter{0.0, 0.1};
  Range step_gain_db{-12.0, -6.0};
  Range noise_floor_db{-45.0, -30.0};
  Range step_decay_ms{12.0, 30.0};
  double soft_surface_fraction = 0.5;
  double duration_s = 60.0;
};

// Cadence and surface are drawn once per runner; jitter, levels and decay
// per recording. Ids are "runner_XX" and "runner_XX_recYY".
std::vector<SynthRecording> synth_corpus(int n_runners, int recordings_per_runner,
                                         const ProfileRanges& ranges, std::uint64_t seed);

// Per-runner cadence used by synth_corpus for a given seed (for tests and summaries).
std::vector<double> corpus_runner_cadences(int n_runners, const ProfileRanges& ranges,
                                           std::uint64_t seed);

}  // namespace stepcount
