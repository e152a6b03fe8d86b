#pragma once

#include <filesystem>
#include <span>
#include <vector>

namespace stepcount {

constexpr int kCanonicalSampleRate = 16000;

// Mono PCM audio. Samples are clamped to [-1, 1] and must be finite.
class Waveform {
 public:
  Waveform() = default;
  Waveform(std::vector<float> samples, int sample_rate_hz);

  const std::vector<float>& samples() const { return samples_; }
  int sample_rate_hz() const { return sample_rate_hz_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  double duration_s() const {
    return static_cast<double>(samples_.size()) / sample_rate_hz_;
  }

  // Copy of samples [begin, end), zero-filled where the range leaves the signal.
  Waveform slice(std::ptrdiff_t begin, std::ptrdiff_t end) const;

 private:
  std::vector<float> samples_;
  int sample_rate_hz_ = kCanonicalSampleRate;
};

// Reads PCM16 or float32 RIFF/WAVE; multi-channel input is averaged to mono.
Waveform read_wav(const std::filesystem::path& path);
Waveform decode_wav(std::span<const std::uint8_t> bytes);

// Always writes PCM16 mono.
void write_wav(const Waveform& w, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_wav(const Waveform& w);

// Windowed-sinc band-limited resampling. Output length is
// round(len * target / source).
Waveform resample(const Waveform& w, int target_rate_hz);

}  // namespace stepcount
