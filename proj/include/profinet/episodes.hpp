#pragma once

#include "profinet/csi.hpp"
#include "profinet/rng.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

namespace profinet {

enum class Phase { kMetaTrain, kMetaTest };

struct EpisodeConfig {
  int n_way = 5;
  int k_shot = 1;
  int n_query = 10;  // per class
  Phase phase = Phase::kMetaTrain;

  void validate() const;
};

/// A record drawn into an episode. `index` is the record's position in the
/// source dataset, or -1 for records synthesized by augmentation.
struct EpisodeItem {
  RecordPtr record;
  Label label = 0;
  std::ptrdiff_t index = -1;
};

struct Episode {
  std::vector<Label> class_ids;
  std::vector<EpisodeItem> support;  // class-major: K items per class
  std::vector<EpisodeItem> query;  // class-major: N_q items per class
};

const std::vector<Label>& phase_labels(const GestureDataset& ds, Phase phase);

/// Record indices per label, built once per dataset.
class LabelIndex {
 public:
  explicit LabelIndex(const GestureDataset& ds);
  const std::vector<std::size_t>& of(Label label) const;

 private:
  std::map<Label, std::vector<std::size_t>> by_label_;
};

/// Uniform class choice without replacement, then uniform record choice
/// without replacement inside each class. Classes appear in draw order.
Episode sample_episode(const GestureDataset& ds, const EpisodeConfig& cfg, Rng& rng);
Episode sample_episode(const GestureDataset& ds, const LabelIndex& index, const EpisodeConfig& cfg,
                       Rng& rng);

struct StreamedEpisode {
  int epoch = 0;  // 1-based
  int episode = 0;  // 1-based within the epoch
  Episode data;
};

/// Ordered, reproducible sequence of epochs x episodes_per_epoch episodes.
/// Episode (e, i) draws from its own derived stream, so any suffix of the
/// sequence can be regenerated without replaying the prefix.
class EpisodeStream {
 public:
  EpisodeStream(const GestureDataset& ds, EpisodeConfig cfg, int episodes_per_epoch, int epochs,
                std::uint64_t seed, int first_epoch = 1);

  std::optional<StreamedEpisode> next();
  std::int64_t total() const { return std::int64_t(epochs_) * episodes_per_epoch_; }

 private:
  const GestureDataset* ds_;
  LabelIndex index_;
  EpisodeConfig cfg_;
  int episodes_per_epoch_;
  int epochs_;
  std::uint64_t seed_;
  int epoch_;
  int episode_ = 0;
};

/// Seed of episode (epoch, episode) in a stream rooted at `seed`.
std::uint64_t episode_seed(std::uint64_t seed, Phase phase, int epoch, int episode);

}  // namespace profinet
