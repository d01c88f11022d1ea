#include "profinet/curriculum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

namespace profinet {

std::vector<CurriculumStage> stage_table(int total_epochs) {
  if (total_epochs < kCurriculumStages || total_epochs % kCurriculumStages != 0)
    throw ConfigError("epochs must be a positive multiple of " + std::to_string(kCurriculumStages) +
                      " for the curriculum schedule, got " + std::to_string(total_epochs));
  const int block = total_epochs / kCurriculumStages;
  std::vector<CurriculumStage> table;
  for (int s = 0; s < kCurriculumStages; ++s) {
    CurriculumStage st;
    st.index = s + 1;
    st.noise_fraction = kStageNoise[std::size_t(s)];
    st.first_epoch = s * block + 1;
    st.last_epoch = (s + 1) * block;
    table.push_back(st);
  }
  return table;
}

CurriculumStage stage_for_epoch(int epoch, int total_epochs) {
  const auto table = stage_table(total_epochs);
  if (epoch < 1 || epoch > total_epochs)
    throw ConfigError("epoch " + std::to_string(epoch) + " is outside [1, " +
                      std::to_string(total_epochs) + "]");
  const int block = total_epochs / kCurriculumStages;
  return table[std::size_t((epoch - 1) / block)];
}

double amplitude_std(const CsiRecord& rec) {
  const auto a = rec.amplitude.cast<double>().array();
  const double mean = a.mean();
  return std::sqrt((a - mean).square().mean());
}

CsiRecord add_noise(const CsiRecord& rec, double noise_fraction, Rng& rng) {
  if (!(noise_fraction >= 0))
    throw ConfigError("noise_fraction must be >= 0, got " + std::to_string(noise_fraction));
  if (noise_fraction == 0) return rec;
  const double sigma = noise_fraction * amplitude_std(rec);
  std::normal_distribution<double> gauss(0.0, sigma);
  CsiRecord out = rec;
  float* p = out.amplitude.data();
  for (Eigen::Index i = 0; i < out.amplitude.size(); ++i)
    p[i] = float(std::max(0.0, double(p[i]) + gauss(rng)));
  return out;
}

double snr_db(double noise_fraction) {
  if (!(noise_fraction >= 0))
    throw ConfigError("noise_fraction must be >= 0, got " + std::to_string(noise_fraction));
  if (noise_fraction == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / (noise_fraction * noise_fraction));
}

std::vector<EpisodeItem> augment_query(const std::vector<EpisodeItem>& query,
                                       const CurriculumStage& stage, Rng& rng) {
  if (stage.noise_fraction == 0) return query;
  const int shares = stage.augmented_share + stage.original_share;
  std::map<Label, std::vector<std::size_t>> positions;
  for (std::size_t i = 0; i < query.size(); ++i) positions[query[i].label].push_back(i);

  std::vector<EpisodeItem> out = query;
  for (auto& [label, pos] : positions) {
    const int n = int(pos.size());
    if (n % shares != 0)
      throw ConfigError("query count " + std::to_string(n) + " of class " + std::to_string(label) +
                        " is not divisible by " + std::to_string(shares) +
                        " (augmented:original mix)");
    const int n_aug = n / shares * stage.augmented_share;
    std::shuffle(pos.begin(), pos.end(), rng);
    for (int i = 0; i < n_aug; ++i) {
      auto& item = out[pos[std::size_t(i)]];
      item.record = std::make_shared<CsiRecord>(add_noise(*item.record, stage.noise_fraction, rng));
      item.index = -1;
    }
  }
  return out;
}

}  // namespace profinet
