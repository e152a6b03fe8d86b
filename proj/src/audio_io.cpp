#include "stepcount/audio_io.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <string>

#include "stepcount/errors.h"

namespace stepcount {

static_assert(std::endian::native == std::endian::little,
              "WAV codec assumes a little-endian host");

Waveform::Waveform(std::vector<float> samples, int sample_rate_hz)
    : samples_(std::move(samples)), sample_rate_hz_(sample_rate_hz) {
  if (sample_rate_hz_ <= 0) throw InvalidInputError("sample rate must be positive");
  for (float& s : samples_) {
    if (!std::isfinite(s)) throw InvalidInputError("waveform contains non-finite sample");
    s = std::clamp(s, -1.0f, 1.0f);
  }
}

Waveform Waveform::slice(std::ptrdiff_t begin, std::ptrdiff_t end) const {
  std::vector<float> out(static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, end - begin)), 0.0f);
  const auto n = static_cast<std::ptrdiff_t>(samples_.size());
  for (std::ptrdiff_t i = std::max<std::ptrdiff_t>(begin, 0); i < std::min(end, n); ++i) {
    out[static_cast<std::size_t>(i - begin)] = samples_[static_cast<std::size_t>(i)];
  }
  Waveform w;
  w.samples_ = std::move(out);
  w.sample_rate_hz_ = sample_rate_hz_;
  return w;
}

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T load_le(const std::uint8_t* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void store_le(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

}  // namespace

Waveform decode_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError("not a RIFF/WAVE file");
  }

  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t bits = 0;
  bool have_fmt = false;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const auto size = load_le<std::uint32_t>(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) {
      // Tolerate a data chunk truncated by a writer that never patched its size.
      if (std::memcmp(chunk, "data", 4) != 0) throw FormatError("chunk overruns file");
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw FormatError("fmt chunk too short");
      format = load_le<std::uint16_t>(chunk + 8);
      channels = load_le<std::uint16_t>(chunk + 10);
      rate = load_le<std::uint32_t>(chunk + 12);
      bits = load_le<std::uint16_t>(chunk + 22);
      if (format == kFormatExtensible) {
        if (size < 40) throw FormatError("extensible fmt chunk too short");
        format = load_le<std::uint16_t>(chunk + 32);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = std::min<std::size_t>(size, bytes.size() - body);
    }
    pos = body + size + (size & 1u);
  }

  if (!have_fmt) throw FormatError("missing fmt chunk");
  if (data == nullptr) throw FormatError("missing data chunk");
  if (channels == 0) throw FormatError("zero channels");
  if (rate == 0) throw FormatError("zero sample rate");

  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool f32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !f32) {
    throw UnsupportedCodecError("unsupported WAV encoding (format " + std::to_string(format) +
                                ", " + std::to_string(bits) + " bits)");
  }

  const std::size_t frame_bytes = static_cast<std::size_t>(channels) * (bits / 8);
  const std::size_t frames = data_size / frame_bytes;
  std::vector<float> mono(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    const std::uint8_t* frame = data + i * frame_bytes;
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      if (pcm16) {
        acc += load_le<std::int16_t>(frame + 2 * c) / 32768.0;
      } else {
        float v = load_le<float>(frame + 4 * c);
        if (!std::isfinite(v)) throw FormatError("non-finite float sample");
        acc += v;
      }
    }
    mono[i] = static_cast<float>(acc / channels);
  }
  return Waveform(std::move(mono), static_cast<int>(rate));
}

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_wav(const Waveform& w) {
  const auto data_bytes = static_cast<std::uint32_t>(w.size() * 2);
  const auto rate = static_cast<std::uint32_t>(w.sample_rate_hz());
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  store_le<std::uint32_t>(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  store_le<std::uint32_t>(out, 16);
  store_le<std::uint16_t>(out, kFormatPcm);
  store_le<std::uint16_t>(out, 1);
  store_le<std::uint32_t>(out, rate);
  store_le<std::uint32_t>(out, rate * 2);
  store_le<std::uint16_t>(out, 2);
  store_le<std::uint16_t>(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  store_le<std::uint32_t>(out, data_bytes);
  for (float s : w.samples()) {
    // round-to-nearest; +1.0 saturates at 32767
    long q = std::lround(static_cast<double>(s) * 32768.0);
    q = std::clamp<long>(q, -32768, 32767);
    store_le<std::int16_t>(out, static_cast<std::int16_t>(q));
  }
  return out;
}

void write_wav(const Waveform& w, const std::filesystem::path& path) {
  const auto bytes = encode_wav(w);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Waveform resample(const Waveform& w, int target_rate_hz) {
  if (target_rate_hz <= 0) throw InvalidInputError("target sample rate must be positive");
  const int source_rate = w.sample_rate_hz();
  if (source_rate == target_rate_hz) return w;

  const double ratio = static_cast<double>(target_rate_hz) / source_rate;
  const auto out_len = static_cast<std::size_t>(std::llround(static_cast<double>(w.size()) * ratio));
  // Cutoff relative to the source Nyquist; widened kernel when downsampling.
  const double cutoff = 0.95 * std::min(1.0, ratio);
  constexpr int kZeroCrossings = 24;
  const double half_width = kZeroCrossings / cutoff;
  const double kaiser_beta = 8.6;
  const double i0_beta = std::cyl_bessel_i(0.0, kaiser_beta);
  constexpr std::size_t kTable = 8192;
  std::vector<double> kaiser(kTable + 1);
  for (std::size_t i = 0; i <= kTable; ++i) {
    const double r = static_cast<double>(i) / kTable;
    kaiser[i] = std::cyl_bessel_i(0.0, kaiser_beta * std::sqrt(1.0 - r * r)) / i0_beta;
  }
  auto window_at = [&](double r) {
    const double pos = std::min(1.0, std::abs(r)) * kTable;
    const auto i = std::min<std::size_t>(static_cast<std::size_t>(pos), kTable - 1);
    const double frac = pos - static_cast<double>(i);
    return kaiser[i] + frac * (kaiser[i + 1] - kaiser[i]);
  };

  const auto& in = w.samples();
  const auto n_in = static_cast<std::ptrdiff_t>(in.size());
  std::vector<float> out(out_len);
  for (std::size_t n = 0; n < out_len; ++n) {
    const double t = static_cast<double>(n) / ratio;
    const auto lo = static_cast<std::ptrdiff_t>(std::ceil(t - half_width));
    const auto hi = static_cast<std::ptrdiff_t>(std::floor(t + half_width));
    double acc = 0.0;
    double weight_sum = 0.0;
    for (std::ptrdiff_t k = std::max<std::ptrdiff_t>(lo, 0); k <= std::min(hi, n_in - 1); ++k) {
      const double x = static_cast<double>(k) - t;
      const double arg = cutoff * x;
      const double sinc = arg == 0.0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
      const double h = sinc * window_at(x / half_width);
      acc += h * in[static_cast<std::size_t>(k)];
      weight_sum += h;
    }
    // Normalizing by the tap sum keeps DC exact, including at the edges.
    out[n] = weight_sum != 0.0 ? static_cast<float>(acc / weight_sum) : 0.0f;
  }
  return Waveform(std::move(out), target_rate_hz);
}

}  // namespace stepcount
