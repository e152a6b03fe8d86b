#include <doctest.h>

#include <cmath>
#include <set>

#include "oracles.h"
#include "stepcount/errors.h"
#include "stepcount/synth_corpus.h"
#include "stepcount/windowing.h"

using namespace stepcount;

TEST_CASE("jitter-free steps at 180 spm") {
  SynthProfile p;
  p.cadence_spm = 180.0;
  p.duration_s = 10.0;
  const auto r = synth_recording(p);
  const auto& t = r.annotations.step_times_s;
  REQUIRE(!t.empty());
  CHECK(t.front() == doctest::Approx(kFirstStepTime));
  for (std::size_t i = 1; i < t.size(); ++i) CHECK(t[i] - t[i - 1] == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
  // 0.2 + k/3 < 10 for k = 0..29
  CHECK(oracle::count_in(t, 0.0, 10.0) == 30);
  CHECK(t.size() == 30);
  CHECK(r.waveform.size() == 160000);
  CHECK(r.annotations.recording_duration_s == 10.0);
  CHECK_NOTHROW(r.annotations.validate());
}

TEST_CASE("bursts stand out over a very low noise floor") {
  SynthProfile p;
  p.noise_floor_db = -120.0;
  p.step_gain_db = -6.0;
  p.duration_s = 5.0;
  p.step_decay_ms = 15.0;
  const auto r = synth_recording(p);
  const auto& x = r.waveform.samples();
  const int sr = r.waveform.sample_rate_hz();
  double in_e = 0, out_e = 0;
  std::size_t in_n = 0, out_n = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double ti = static_cast<double>(i) / sr;
    bool inside = false, near = false;
    for (double s : r.annotations.step_times_s) {
      if (ti >= s && ti < s + 0.03) inside = true;
      if (ti >= s - 0.01 && ti < s + 0.15) near = true;
    }
    if (inside) {
      in_e += x[i] * x[i];
      ++in_n;
    } else if (!near) {
      out_e += x[i] * x[i];
      ++out_n;
    }
  }
  REQUIRE(in_n > 0);
  REQUIRE(out_n > 0);
  CHECK(std::sqrt(in_e / in_n) >= 10.0 * std::sqrt(out_e / out_n));
}

TEST_CASE("deterministic for a seed") {
  SynthProfile p;
  p.cadence_jitter = 0.05;
  p.duration_s = 5.0;
  p.seed = 17;
  const auto a = synth_recording(p);
  const auto b = synth_recording(p);
  CHECK(a.waveform.samples() == b.waveform.samples());
  CHECK(a.annotations.step_times_s == b.annotations.step_times_s);
  p.seed = 18;
  CHECK(synth_recording(p).waveform.samples() != a.waveform.samples());
}

TEST_CASE("profile validation") {
  SynthProfile p;
  p.cadence_spm = 0.0;
  CHECK_THROWS_AS(p.validate(), InvalidInputError);
  p = {};
  p.duration_s = -1.0;
  CHECK_THROWS_AS(p.validate(), InvalidInputError);
  p = {};
  p.cadence_jitter = 0.4;
  CHECK_THROWS_AS(p.validate(), InvalidInputError);
  CHECK_THROWS_AS(synth_corpus(0, 1, {}, 0), InvalidInputError);
}

TEST_CASE("corpus layout") {
  ProfileRanges ranges;
  ranges.duration_s = 10.0;
  const auto c = synth_corpus(5, 2, ranges, 3);
  REQUIRE(c.size() == 10);
  std::set<std::string> runners, recs;
  for (const auto& r : c) {
    runners.insert(r.annotations.runner_id);
    recs.insert(r.annotations.recording_id);
    CHECK(r.annotations.recording_id.rfind(r.annotations.runner_id + "_rec", 0) == 0);
  }
  CHECK(runners.size() == 5);
  CHECK(recs.size() == 10);
  CHECK(runners.contains("runner_00"));
  CHECK(recs.contains("runner_04_rec01"));

  const auto cad = corpus_runner_cadences(5, ranges, 3);
  REQUIRE(cad.size() == 5);
  for (std::size_t i = 0; i < cad.size(); ++i) {
    CHECK(cad[i] >= 150.0);
    CHECK(cad[i] <= 190.0);
    for (std::size_t j = 0; j < i; ++j) CHECK(cad[i] != cad[j]);
  }
}

TEST_CASE("mean 5 s label follows the cadence range") {
  ProfileRanges ranges;
  ranges.duration_s = 30.0;
  ranges.cadence_jitter = {0.0, 0.0};
  const auto c = synth_corpus(8, 1, ranges, 21);
  double sum = 0.0;
  int n = 0;
  for (const auto& r : c) {
    for (const auto& w : fixed_windows(r.annotations.recording_duration_s, 5.0)) {
      sum += count_steps(r.annotations, w);
      ++n;
    }
  }
  const double mean = sum / n;
  CHECK(mean >= 12.5);
  CHECK(mean <= 15.8);
}
