#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "oracles.h"
#include "stepcount/dsp_features.h"
#include "stepcount/errors.h"

using namespace stepcount;

namespace {

Waveform tone(double hz, double seconds, double amp = 0.5, int sr = 16000) {
  std::vector<float> x(static_cast<std::size_t>(seconds * sr));
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * hz * i / sr));
  return Waveform(std::move(x), sr);
}

Waveform noise(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> d(-0.8f, 0.8f);
  std::vector<float> x(n);
  for (auto& v : x) v = d(rng);
  return Waveform(std::move(x), 16000);
}

}  // namespace

TEST_CASE("mel scale") {
  CHECK(hz_to_mel(0.0) == 0.0);
  CHECK(hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)));
  CHECK(hz_to_mel(700.0) == doctest::Approx(781.17).epsilon(1e-5));
  for (double hz : {50.0, 440.0, 8000.0}) CHECK(mel_to_hz(hz_to_mel(hz)) == doctest::Approx(hz));
}

TEST_CASE("config validation and hashing") {
  FeatureConfig c;
  CHECK_NOTHROW(c.validate());
  FeatureConfig bad = c;
  bad.hop_length = 600;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.fmax_hz = 9000;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.win_length = 1024;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  FeatureConfig other = c;
  other.mel_bins = 40;
  CHECK(other.hash() != c.hash());
  CHECK(FeatureConfig{}.hash() == c.hash());
}

TEST_CASE("analysis window is periodic Hann") {
  const auto w = analysis_window(FeatureConfig{});
  const auto ref = oracle::periodic_hann(400);
  REQUIRE(w.size() == ref.size());
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(w[i] == doctest::Approx(ref[i]).epsilon(1e-14));
}

TEST_CASE("STFT matches direct DFT") {
  const FeatureConfig cfg;
  const Waveform x = noise(4000, 5);
  const RealMatrix p = stft_power(x, cfg);
  const std::size_t frames = (4000 - 400) / 160 + 1;
  REQUIRE(p.rows() == 257);
  REQUIRE(static_cast<std::size_t>(p.cols()) == frames);
  const auto hann = oracle::periodic_hann(400);
  for (std::size_t t = 0; t < frames; ++t) {
    std::vector<double> frame(400);
    for (std::size_t i = 0; i < 400; ++i) frame[i] = x.samples()[t * 160 + i] * hann[i];
    const auto ref = oracle::dft_power(frame, 512);
    const double peak = *std::max_element(ref.begin(), ref.end());
    for (std::size_t k = 0; k < ref.size(); ++k) REQUIRE(std::fabs(p(k, t) - ref[k]) <= 1e-5 * peak);
  }
}

TEST_CASE("Parseval on one-sided power") {
  const FeatureConfig cfg;
  const auto hann = oracle::periodic_hann(400);
  for (unsigned seed = 0; seed < 5; ++seed) {
    const Waveform x = noise(400, seed);
    const RealMatrix p = stft_power(x, cfg);
    REQUIRE(p.cols() == 1);
    double energy = 0.0;
    for (std::size_t i = 0; i < 400; ++i) energy += std::pow(x.samples()[i] * hann[i], 2);
    double spec = p(0, 0) + p(256, 0);
    for (int k = 1; k < 256; ++k) spec += 2.0 * p(k, 0);
    CHECK(std::fabs(spec / 512.0 - energy) <= 1e-6 * energy);
  }
}

TEST_CASE("STFT of silence and of a 1 kHz tone") {
  const FeatureConfig cfg;
  const RealMatrix z = stft_power(Waveform(std::vector<float>(1600, 0.0f), 16000), cfg);
  CHECK(z.cwiseAbs().maxCoeff() == 0.0);
  const RealMatrix p = stft_power(tone(1000.0, 400.0 / 16000.0), cfg);
  REQUIRE(p.cols() == 1);
  Eigen::Index arg;
  p.col(0).maxCoeff(&arg);
  CHECK(arg == 32);
}

TEST_CASE("mel filterbank") {
  const FeatureConfig cfg;
  const RealMatrix fb = mel_filterbank(cfg);
  CHECK(fb.rows() == 64);
  CHECK(fb.cols() == 257);
  CHECK(fb.minCoeff() >= 0.0);
  for (int m = 0; m < 64; ++m) CHECK(fb.row(m).maxCoeff() > 0.0);
  const auto centers = mel_center_frequencies(cfg);
  REQUIRE(centers.size() == 64);
  CHECK(std::is_sorted(centers.begin(), centers.end()));
  CHECK(centers.front() > 50.0);
  CHECK(centers.back() < 8000.0);
  FeatureConfig dense = cfg;
  dense.fft_size = 64;
  dense.win_length = 64;
  dense.hop_length = 32;
  dense.mel_bins = 128;
  CHECK_THROWS_AS(mel_filterbank(dense), ConfigError);
}

TEST_CASE("log-mel geometry and floors") {
  const FeatureConfig cfg;
  const auto m = log_mel(tone(440.0, 5.0), cfg);
  CHECK(m.mel_bins() == 64);
  CHECK(m.frames() == 500);
  CHECK(m.frame_hop_s == doctest::Approx(0.01));
  CHECK(m.values.allFinite());
  CHECK(m.values.minCoeff() >= static_cast<float>(std::log(cfg.log_floor)));
  CHECK(frames_for_samples(80000, cfg) == 500);
  CHECK(frames_for_samples(16000 * 10, cfg) == 1000);

  const auto s = log_mel(Waveform(std::vector<float>(16000, 0.0f), 16000), cfg);
  CHECK(s.frames() == 100);
  for (Eigen::Index i = 0; i < s.values.size(); ++i)
    REQUIRE(s.values.data()[i] == static_cast<float>(std::log(cfg.log_floor)));

  CHECK_THROWS_AS(log_mel(Waveform(std::vector<float>(800, 0.0f), 8000), cfg), InvalidInputError);
}

TEST_CASE("1 kHz tone peaks at the mel bin centred nearest 1 kHz") {
  const FeatureConfig cfg;
  const auto m = log_mel(tone(1000.0, 1.0), cfg);
  const auto centers = mel_center_frequencies(cfg);
  std::size_t nearest = 0;
  for (std::size_t i = 1; i < centers.size(); ++i)
    if (std::fabs(centers[i] - 1000.0) < std::fabs(centers[nearest] - 1000.0)) nearest = i;
  Eigen::Index arg;
  m.values.col(50).maxCoeff(&arg);
  CHECK(static_cast<std::size_t>(arg) == nearest);
}

TEST_CASE("standardize") {
  auto m = log_mel(noise(16000, 9), FeatureConfig{});
  standardize(m);
  const double mean = m.values.cast<double>().mean();
  const double sd = std::sqrt((m.values.cast<double>().array() - mean).square().mean());
  CHECK(std::fabs(mean) < 1e-5);
  CHECK(sd == doctest::Approx(1.0).epsilon(1e-4));
  MelSpectrogram c;
  c.values = FeatureMatrix::Constant(4, 4, 3.0f);
  standardize(c);
  CHECK(c.values.cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("feature cache round trip") {
  const FeatureConfig cfg;
  const auto m = log_mel(noise(8000, 2), cfg);
  const auto path = std::filesystem::temp_directory_path() / "stepcount_cache.lmel";
  write_feature_cache(m, cfg.hash(), path);
  std::uint64_t h = 0;
  const auto back = read_feature_cache(path, &h);
  CHECK(h == cfg.hash());
  CHECK(back.values == m.values);
  CHECK(back.frame_hop_s == m.frame_hop_s);
  std::filesystem::resize_file(path, 20);
  CHECK_THROWS_AS(read_feature_cache(path), FormatError);
  std::filesystem::remove(path);
}
