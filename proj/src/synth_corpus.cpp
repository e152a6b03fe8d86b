#include "stepcount/synth_corpus.h"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "stepcount/errors.h"
#include "stepcount/util.h"

namespace stepcount {

void SynthProfile::validate() const {
  if (!(cadence_spm > 0.0)) throw InvalidInputError("cadence_spm must be positive");
  if (!(cadence_jitter >= 0.0 && cadence_jitter <= 0.3)) {
    throw InvalidInputError("cadence_jitter must lie in [0, 0.3]");
  }
  if (!(duration_s > 0.0)) throw InvalidInputError("duration_s must be positive");
  if (!(step_decay_ms > 0.0)) throw InvalidInputError("step_decay_ms must be positive");
}

namespace {

double db_to_amp(double db) { return std::pow(10.0, db / 20.0); }

// One-pole low-pass coefficient for a -3 dB point at cutoff_hz.
double one_pole_coeff(double cutoff_hz, int sr) {
  return std::exp(-2.0 * std::numbers::pi * cutoff_hz / sr);
}

}  // namespace

SynthRecording synth_recording(const SynthProfile& profile, std::string recording_id,
                               std::string runner_id) {
  profile.validate();
  const int sr = kCanonicalSampleRate;
  const auto n = static_cast<std::size_t>(std::llround(profile.duration_s * sr));

  std::mt19937_64 timing_rng(derive_seed(profile.seed, {1}));
  std::mt19937_64 burst_rng(derive_seed(profile.seed, {2}));
  std::mt19937_64 noise_rng(derive_seed(profile.seed, {3}));
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<double> steps;
  const double interval = 60.0 / profile.cadence_spm;
  for (double t = kFirstStepTime; t < profile.duration_s;) {
    steps.push_back(t);
    // Keep intervals positive even for extreme draws.
    const double factor = std::max(0.05, 1.0 + profile.cadence_jitter * normal(timing_rng));
    t += interval * factor;
  }

  // Background: white noise through the Kellet "economy" pink filter, scaled to RMS.
  std::vector<double> signal(n, 0.0);
  {
    double b0 = 0, b1 = 0, b2 = 0;
    double energy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double white = normal(noise_rng);
      b0 = 0.99765 * b0 + white * 0.0990460;
      b1 = 0.96300 * b1 + white * 0.2965164;
      b2 = 0.57000 * b2 + white * 1.0526913;
      signal[i] = b0 + b1 + b2 + white * 0.1848;
      energy += signal[i] * signal[i];
    }
    const double rms = n > 0 ? std::sqrt(energy / static_cast<double>(n)) : 1.0;
    const double scale = rms > 0 ? db_to_amp(profile.noise_floor_db) / rms : 0.0;
    for (double& v : signal) v *= scale;
  }

  const double tau = profile.step_decay_ms / 1000.0 * sr;
  const auto burst_len = static_cast<std::size_t>(std::ceil(6.0 * tau));
  const double peak = db_to_amp(profile.step_gain_db);
  const double lp = one_pole_coeff(2000.0, sr);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  std::vector<double> burst(burst_len);
  auto low_pass = [lp](std::vector<double>& x) {
    double state = 0.0;
    for (double& v : x) {
      state = (1.0 - lp) * v + lp * state;
      v = state;
    }
  };
  for (double t : steps) {
    for (double& v : burst) v = uniform(burst_rng);
    if (profile.surface_tone == SurfaceTone::soft) {
      // two one-pole sections: 12 dB/oct above 2 kHz
      low_pass(burst);
      low_pass(burst);
    }
    double burst_peak = 0.0;
    for (double v : burst) burst_peak = std::max(burst_peak, std::abs(v));
    const double norm = burst_peak > 0.0 ? peak / burst_peak : 0.0;
    const auto onset = static_cast<std::size_t>(std::llround(t * sr));
    for (std::size_t i = 0; i < burst_len && onset + i < n; ++i) {
      signal[onset + i] += norm * burst[i] * std::exp(-static_cast<double>(i) / tau);
    }
  }

  std::vector<float> samples(n);
  for (std::size_t i = 0; i < n; ++i) samples[i] = static_cast<float>(signal[i]);

  SynthRecording rec;
  rec.waveform = Waveform(std::move(samples), sr);
  rec.annotations.recording_id = std::move(recording_id);
  rec.annotations.runner_id = std::move(runner_id);
  rec.annotations.step_times_s = std::move(steps);
  rec.annotations.recording_duration_s = profile.duration_s;
  return rec;
}

namespace {

double draw(std::mt19937_64& rng, const Range& r) {
  if (r.hi <= r.lo) return r.lo;
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

std::string padded(const char* prefix, int value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s%02d", prefix, value);
  return buf;
}

}  // namespace

std::vector<double> corpus_runner_cadences(int n_runners, const ProfileRanges& ranges,
                                           std::uint64_t seed) {
  std::vector<double> cadences;
  for (int r = 0; r < n_runners; ++r) {
    std::mt19937_64 rng(derive_seed(seed, {100, static_cast<std::uint64_t>(r)}));
    cadences.push_back(draw(rng, ranges.cadence_spm));
  }
  return cadences;
}

std::vector<SynthRecording> synth_corpus(int n_runners, int recordings_per_runner,
                                         const ProfileRanges& ranges, std::uint64_t seed) {
  if (n_runners < 1 || recordings_per_runner < 1) {
    throw InvalidInputError("runner and recording counts must be >= 1");
  }
  std::vector<SynthRecording> corpus;
  corpus.reserve(static_cast<std::size_t>(n_runners * recordings_per_runner));
  for (int r = 0; r < n_runners; ++r) {
    std::mt19937_64 runner_rng(derive_seed(seed, {100, static_cast<std::uint64_t>(r)}));
    const double cadence = draw(runner_rng, ranges.cadence_spm);
    const bool soft = std::uniform_real_distribution<double>(0.0, 1.0)(runner_rng) <
                      ranges.soft_surface_fraction;
    const std::string runner_id = padded("runner_", r);
    for (int k = 0; k < recordings_per_runner; ++k) {
      std::mt19937_64 rec_rng(
          derive_seed(seed, {200, static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(k)}));
      SynthProfile p;
      p.cadence_spm = cadence;
      p.surface_tone = soft ? SurfaceTone::soft : SurfaceTone::hard;
      p.cadence_jitter = draw(rec_rng, ranges.cadence_jitter);
      p.step_gain_db = draw(rec_rng, ranges.step_gain_db);
      p.noise_floor_db = draw(rec_rng, ranges.noise_floor_db);
      p.step_decay_ms = draw(rec_rng, ranges.step_decay_ms);
      p.duration_s = ranges.duration_s;
      p.seed = rec_rng();
      corpus.push_back(synth_recording(p, runner_id + padded("_rec", k), runner_id));
    }
  }
  return corpus;
}

}  // namespace stepcount
