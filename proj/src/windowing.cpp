#include "stepcount/windowing.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "stepcount/errors.h"

namespace stepcount {

void StepAnnotations::validate() const {
  if (!(recording_duration_s >= 0.0)) {
    throw InvalidInputError(recording_id + ": negative recording duration");
  }
  for (std::size_t i = 0; i < step_times_s.size(); ++i) {
    const double t = step_times_s[i];
    if (!std::isfinite(t) || t < 0.0 || t > recording_duration_s) {
      throw InvalidInputError(recording_id + ": step time outside [0, duration]");
    }
    if (i > 0 && !(t > step_times_s[i - 1])) {
      throw InvalidInputError(recording_id + ": step times not strictly increasing");
    }
  }
}

std::string to_string(WindowStrategy s) {
  return s == WindowStrategy::fixed ? "fixed" : "step_aligned";
}

WindowStrategy parse_strategy(const std::string& name) {
  if (name == "fixed") return WindowStrategy::fixed;
  if (name == "step_aligned" || name == "step-aligned") return WindowStrategy::step_aligned;
  throw ConfigError("unknown windowing strategy '" + name + "' (expected fixed|step_aligned)");
}

std::vector<Window> fixed_windows(double duration_s, double win_len_s) {
  if (!(win_len_s > 0.0)) throw InvalidInputError("window length must be positive");
  std::vector<Window> out;
  // Integer window index avoids accumulating rounding in the boundaries.
  for (long k = 0;; ++k) {
    const double start = static_cast<double>(k) * win_len_s;
    const double end = static_cast<double>(k + 1) * win_len_s;
    if (end > duration_s) break;
    out.push_back({start, end});
  }
  return out;
}

std::vector<Window> step_aligned_windows(const StepAnnotations& ann, double win_len_s) {
  if (!(win_len_s > 0.0)) throw InvalidInputError("window length must be positive");
  if (ann.step_times_s.empty()) {
    throw InvalidInputError(ann.recording_id + ": step-aligned windowing needs annotations");
  }
  const auto& steps = ann.step_times_s;
  std::vector<Window> out;
  double start = 0.0;
  while (true) {
    const double limit = start + win_len_s;
    // Last step strictly before the limit...
    auto it = std::lower_bound(steps.begin(), steps.end(), limit);
    if (it == steps.begin()) break;
    const double end = *std::prev(it);
    // ...which must also lie strictly after the start.
    if (!(end > start)) break;
    out.push_back({start, end});
    start = end;
  }
  return out;
}

int count_steps(const StepAnnotations& ann, const Window& win) {
  const auto& steps = ann.step_times_s;
  auto lo = std::lower_bound(steps.begin(), steps.end(), win.start_s);
  auto hi = std::lower_bound(lo, steps.end(), win.end_s);
  return static_cast<int>(hi - lo);
}

std::vector<WindowSample> make_samples(const StepAnnotations& ann, const Waveform& waveform,
                                       WindowStrategy strategy, double win_len_s,
                                       const FeatureConfig& cfg, const SampleOptions& opts) {
  if (opts.compute_features && waveform.sample_rate_hz() != cfg.sample_rate_hz) {
    throw InvalidInputError(ann.recording_id + ": waveform rate differs from feature rate");
  }
  const double duration = std::min(ann.recording_duration_s, waveform.duration_s());
  const std::vector<Window> windows = strategy == WindowStrategy::fixed
                                          ? fixed_windows(duration, win_len_s)
                                          : step_aligned_windows(ann, win_len_s);
  const double sr = waveform.sample_rate_hz();
  const auto full_len = static_cast<std::ptrdiff_t>(std::llround(win_len_s * sr));

  std::vector<WindowSample> out;
  out.reserve(windows.size());
  for (const Window& win : windows) {
    WindowSample s;
    s.window = win;
    s.label_steps = count_steps(ann, win);
    s.recording_id = ann.recording_id;
    s.runner_id = ann.runner_id;
    s.oracle_dependent = strategy == WindowStrategy::step_aligned;

    const auto begin = static_cast<std::ptrdiff_t>(std::llround(win.start_s * sr));
    const auto end = std::min(static_cast<std::ptrdiff_t>(std::llround(win.end_s * sr)), begin + full_len);
    Waveform segment = waveform.slice(begin, end);
    if (opts.keep_audio) s.audio = segment.samples();
    if (opts.compute_features) {
      std::vector<float> padded = segment.samples();
      padded.resize(static_cast<std::size_t>(full_len), 0.0f);
      s.features = log_mel(Waveform(std::move(padded), waveform.sample_rate_hz()), cfg);
      if (cfg.per_window_norm) standardize(s.features);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<FoldSplit> generate_splits(const std::vector<StepAnnotations>& annotations,
                                       int n_folds, SplitRatios ratios, std::uint64_t seed) {
  if (n_folds < 2) throw ConfigError("need at least 2 folds");
  const double ratio_sum = ratios.train + ratios.validation + ratios.test;
  if (!(ratios.train > 0 && ratios.validation > 0 && ratios.test > 0) ||
      std::abs(ratio_sum - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be positive and sum to 1");
  }
  const int n_test = std::max(1, static_cast<int>(std::lround(ratios.test * n_folds)));
  const int n_val = std::max(1, static_cast<int>(std::lround(ratios.validation * n_folds)));
  if (n_test + n_val >= n_folds) throw ConfigError("split ratios leave no training groups");

  std::map<std::string, std::vector<std::string>> by_runner;
  for (const auto& a : annotations) by_runner[a.runner_id].push_back(a.recording_id);
  if (static_cast<int>(by_runner.size()) < n_folds) {
    throw ConfigError("need at least " + std::to_string(n_folds) + " distinct runners, got " +
                      std::to_string(by_runner.size()));
  }
  for (auto& [runner, recs] : by_runner) std::sort(recs.begin(), recs.end());

  // map iteration is already sorted by runner id, so input order cannot leak in.
  std::vector<std::string> runners;
  for (const auto& [runner, recs] : by_runner) runners.push_back(runner);
  std::mt19937_64 rng(seed);
  std::shuffle(runners.begin(), runners.end(), rng);
  std::stable_sort(runners.begin(), runners.end(), [&](const auto& a, const auto& b) {
    return by_runner[a].size() > by_runner[b].size();
  });

  std::vector<std::vector<std::string>> groups(static_cast<std::size_t>(n_folds));
  for (std::size_t i = 0; i < runners.size(); ++i) {
    const std::size_t round = i / static_cast<std::size_t>(n_folds);
    const std::size_t pos = i % static_cast<std::size_t>(n_folds);
    const std::size_t g = round % 2 == 0 ? pos : static_cast<std::size_t>(n_folds) - 1 - pos;
    groups[g].push_back(runners[i]);
  }

  auto recordings_of = [&](int g, std::vector<std::string>& dst) {
    for (const auto& runner : groups[static_cast<std::size_t>(g % n_folds)]) {
      const auto& recs = by_runner[runner];
      dst.insert(dst.end(), recs.begin(), recs.end());
    }
  };

  std::vector<FoldSplit> folds;
  for (int k = 0; k < n_folds; ++k) {
    FoldSplit f;
    f.fold_id = "s" + std::to_string(k);
    for (int g = 0; g < n_test; ++g) recordings_of(k + g, f.test);
    for (int g = 0; g < n_val; ++g) recordings_of(k + n_test + g, f.validation);
    for (int g = n_test + n_val; g < n_folds; ++g) recordings_of(k + g, f.train);
    std::sort(f.train.begin(), f.train.end());
    std::sort(f.validation.begin(), f.validation.end());
    std::sort(f.test.begin(), f.test.end());
    folds.push_back(std::move(f));
  }
  return folds;
}

}  // namespace stepcount
