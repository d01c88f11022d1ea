#pragma once

#include "profinet/episodes.hpp"

#include <array>
#include <vector>

namespace profinet {

inline constexpr int kCurriculumStages = 6;
inline constexpr std::array<double, kCurriculumStages> kStageNoise = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};

struct CurriculumStage {
  int index = 1;  // 1..6
  double noise_fraction = 0.0;
  int first_epoch = 1;  // inclusive
  int last_epoch = 1;  // inclusive
  int augmented_share = 4;  // augmented : original
  int original_share = 1;

  bool operator==(const CurriculumStage&) const = default;
};

/// Six equal contiguous epoch blocks with noise 0, .1, ..., .5.
std::vector<CurriculumStage> stage_table(int total_epochs);

CurriculumStage stage_for_epoch(int epoch, int total_epochs);

/// Adds zero-mean Gaussian noise with sigma = noise_fraction * std(amplitude)
/// to every element; amplitudes are clamped at zero afterwards.
CsiRecord add_noise(const CsiRecord& rec, double noise_fraction, Rng& rng);

/// 10 log10(1 / fraction^2): the SNR implied by a relative noise std.
/// Returns +infinity for fraction 0.
double snr_db(double noise_fraction);

/// Population standard deviation of every amplitude entry.
double amplitude_std(const CsiRecord& rec);

/// Replaces augmented_share / (augmented_share + original_share) of each
/// class's queries by noisy copies, chosen uniformly per class. Stage 1
/// returns the input unchanged.
std::vector<EpisodeItem> augment_query(const std::vector<EpisodeItem>& query,
                                       const CurriculumStage& stage, Rng& rng);

}  // namespace profinet
