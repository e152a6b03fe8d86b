#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>

#include "stepcount/dsp_features.h"

namespace stepcount {

enum class AugmentKind { none, spec_mask, filter_aug, mixup };

std::string to_string(AugmentKind k);
AugmentKind parse_augment_kind(const std::string& name);

struct AugmentSpec {
  AugmentKind kind = AugmentKind::none;
  // spec_mask
  int n_masks = 2;
  int time_mask_frames = 50;
  int freq_mask_bins = 8;
  // filter_aug
  int n_bands = 3;
  double gain_db_lo = -6.0;
  double gain_db_hi = 6.0;
  // mixup
  double alpha = 0.3;
  std::uint64_t seed = 0;

  // Mask sizes must fit the feature geometry; alpha > 0 for mixup.
  void validate(int mel_bins, int frames) const;
};

using AugmentRng = std::mt19937_64;

// n_masks time stripes (width <= time_mask_frames) and n_masks frequency stripes
// (height <= freq_mask_bins), filled with the tensor mean.
MelSpectrogram spec_mask(const MelSpectrogram& x, const AugmentSpec& spec, AugmentRng& rng);

// Splits the mel axis into n_bands contiguous bands with random boundaries and
// adds a uniform gain from [gain_db_lo, gain_db_hi] to each band. Values are
// natural-log energies, so a gain of g dB adds g * ln(10) / 10.
MelSpectrogram filter_aug(const MelSpectrogram& x, const AugmentSpec& spec, AugmentRng& rng);

double filter_gain_offset(double gain_db);

// lambda ~ Beta(alpha, alpha)
double sample_mixup_lambda(double alpha, AugmentRng& rng);

struct MixupResult {
  FeatureMatrix features;
  double label = 0.0;
};

MixupResult mixup(const FeatureMatrix& x1, double y1, const FeatureMatrix& x2, double y2, double lambda);
MixupResult mixup(const FeatureMatrix& x1, double y1, const FeatureMatrix& x2, double y2, double alpha,
                  AugmentRng& rng);

}  // namespace stepcount
