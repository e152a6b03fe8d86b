#include "stepcount/augment.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "stepcount/errors.h"

namespace stepcount {

std::string to_string(AugmentKind k) {
  switch (k) {
    case AugmentKind::none: return "none";
    case AugmentKind::spec_mask: return "spec_mask";
    case AugmentKind::filter_aug: return "filter_aug";
    case AugmentKind::mixup: return "mixup";
  }
  return "none";
}

AugmentKind parse_augment_kind(const std::string& name) {
  if (name == "none") return AugmentKind::none;
  if (name == "spec_mask" || name == "specaug") return AugmentKind::spec_mask;
  if (name == "filter_aug" || name == "filteraug") return AugmentKind::filter_aug;
  if (name == "mixup") return AugmentKind::mixup;
  throw ConfigError("unknown augmentation '" + name + "' (expected none|spec_mask|filter_aug|mixup)");
}

void AugmentSpec::validate(int mel_bins, int frames) const {
  switch (kind) {
    case AugmentKind::none: break;
    case AugmentKind::spec_mask:
      if (n_masks < 0) throw ConfigError("augment.n_masks must be >= 0");
      if (time_mask_frames < 0 || time_mask_frames >= frames) {
        throw ConfigError("augment.time_mask_frames must be smaller than the frame count");
      }
      if (freq_mask_bins < 0 || freq_mask_bins >= mel_bins) {
        throw ConfigError("augment.freq_mask_bins must be smaller than the mel bin count");
      }
      break;
    case AugmentKind::filter_aug:
      if (n_bands < 1 || n_bands > mel_bins) throw ConfigError("augment.n_bands must be in [1, mel_bins]");
      if (gain_db_lo > gain_db_hi) throw ConfigError("augment gain range is inverted");
      break;
    case AugmentKind::mixup:
      if (!(alpha > 0.0)) throw ConfigError("augment.alpha must be positive");
      break;
  }
}

MelSpectrogram spec_mask(const MelSpectrogram& x, const AugmentSpec& spec, AugmentRng& rng) {
  MelSpectrogram out = x;
  if (spec.n_masks <= 0 || x.values.size() == 0) return out;
  const auto F = static_cast<int>(x.values.rows());
  const auto T = static_cast<int>(x.values.cols());
  const float fill = x.values.mean();
  for (int m = 0; m < spec.n_masks; ++m) {
    const int width = std::uniform_int_distribution<int>(0, std::min(spec.time_mask_frames, T))(rng);
    const int t0 = std::uniform_int_distribution<int>(0, T - width)(rng);
    if (width > 0) out.values.middleCols(t0, width).setConstant(fill);
    const int height = std::uniform_int_distribution<int>(0, std::min(spec.freq_mask_bins, F))(rng);
    const int f0 = std::uniform_int_distribution<int>(0, F - height)(rng);
    if (height > 0) out.values.middleRows(f0, height).setConstant(fill);
  }
  return out;
}

double filter_gain_offset(double gain_db) { return gain_db * std::numbers::ln10 / 10.0; }

MelSpectrogram filter_aug(const MelSpectrogram& x, const AugmentSpec& spec, AugmentRng& rng) {
  MelSpectrogram out = x;
  const auto F = static_cast<int>(x.values.rows());
  if (F == 0) return out;
  const int bands = std::clamp(spec.n_bands, 1, F);
  // bands - 1 distinct interior boundaries in [1, F - 1]
  std::vector<int> candidates(static_cast<std::size_t>(F - 1));
  for (int i = 0; i < F - 1; ++i) candidates[static_cast<std::size_t>(i)] = i + 1;
  std::shuffle(candidates.begin(), candidates.end(), rng);
  std::vector<int> bounds(candidates.begin(), candidates.begin() + (bands - 1));
  bounds.push_back(0);
  bounds.push_back(F);
  std::sort(bounds.begin(), bounds.end());
  for (std::size_t b = 0; b + 1 < bounds.size(); ++b) {
    const double gain_db = spec.gain_db_hi > spec.gain_db_lo
        ? std::uniform_real_distribution<double>(spec.gain_db_lo, spec.gain_db_hi)(rng)
        : spec.gain_db_lo;
    if (gain_db == 0.0) continue;
    const auto offset = static_cast<float>(filter_gain_offset(gain_db));
    out.values.middleRows(bounds[b], bounds[b + 1] - bounds[b]).array() += offset;
  }
  return out;
}

double sample_mixup_lambda(double alpha, AugmentRng& rng) {
  if (!(alpha > 0.0)) throw InvalidInputError("mixup alpha must be positive");
  std::gamma_distribution<double> gamma(alpha, 1.0);
  const double a = gamma(rng);
  const double b = gamma(rng);
  if (a + b == 0.0) return 0.5;
  return a / (a + b);
}

MixupResult mixup(const FeatureMatrix& x1, double y1, const FeatureMatrix& x2, double y2, double lambda) {
  if (x1.rows() != x2.rows() || x1.cols() != x2.cols()) {
    throw ShapeError("mixup: feature shapes differ");
  }
  MixupResult r;
  if (lambda == 1.0) {
    r.features = x1;
    r.label = y1;
    return r;
  }
  const auto l = static_cast<float>(lambda);
  r.features = l * x1 + (1.0f - l) * x2;
  r.label = lambda * y1 + (1.0 - lambda) * y2;
  return r;
}

MixupResult mixup(const FeatureMatrix& x1, double y1, const FeatureMatrix& x2, double y2, double alpha,
                  AugmentRng& rng) {
  return mixup(x1, y1, x2, y2, sample_mixup_lambda(alpha, rng));
}

}  // namespace stepcount
