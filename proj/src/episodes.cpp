#include "profinet/episodes.hpp"

#include <algorithm>
#include <map>
#include <string>

namespace profinet {

void EpisodeConfig::validate() const {
  if (n_way < 2) throw ConfigError("n_way must be >= 2, got " + std::to_string(n_way));
  if (k_shot < 1) throw ConfigError("k_shot must be >= 1, got " + std::to_string(k_shot));
  if (n_query < 1) throw ConfigError("n_query must be >= 1, got " + std::to_string(n_query));
}

const std::vector<Label>& phase_labels(const GestureDataset& ds, Phase phase) {
  return phase == Phase::kMetaTrain ? ds.split.train_labels : ds.split.test_labels;
}

namespace {

// Partial Fisher-Yates: the first k entries of `pool` become a uniform
// sample without replacement.
template <typename T>
void choose_prefix(std::vector<T>& pool, std::size_t k, Rng& rng) {
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
}

}  // namespace

LabelIndex::LabelIndex(const GestureDataset& ds) {
  for (Label l : ds.label_space) by_label_[l];
  for (std::size_t i = 0; i < ds.records.size(); ++i) by_label_[ds.records[i]->label].push_back(i);
}

const std::vector<std::size_t>& LabelIndex::of(Label label) const {
  static const std::vector<std::size_t> kEmpty;
  auto it = by_label_.find(label);
  return it == by_label_.end() ? kEmpty : it->second;
}

Episode sample_episode(const GestureDataset& ds, const EpisodeConfig& cfg, Rng& rng) {
  return sample_episode(ds, LabelIndex(ds), cfg, rng);
}

Episode sample_episode(const GestureDataset& ds, const LabelIndex& index, const EpisodeConfig& cfg,
                       Rng& rng) {
  cfg.validate();
  const auto& labels = phase_labels(ds, cfg.phase);
  const char* phase_name = cfg.phase == Phase::kMetaTrain ? "meta-train" : "meta-test";
  if (labels.size() < std::size_t(cfg.n_way))
    throw EpisodeError(std::string(phase_name) + " split has " + std::to_string(labels.size()) +
                       " classes, episode needs " + std::to_string(cfg.n_way));

  std::vector<Label> classes = labels;
  choose_prefix(classes, std::size_t(cfg.n_way), rng);
  classes.resize(std::size_t(cfg.n_way));

  Episode ep;
  ep.class_ids = classes;
  const std::size_t need = std::size_t(cfg.k_shot + cfg.n_query);
  std::vector<std::vector<std::size_t>> drawn;
  drawn.reserve(classes.size());
  for (Label c : classes) {
    std::vector<std::size_t> pool = index.of(c);
    if (pool.size() < need)
      throw EpisodeError("class " + std::to_string(c) + " has " + std::to_string(pool.size()) +
                         " records, episode needs " + std::to_string(need));
    choose_prefix(pool, need, rng);
    pool.resize(need);
    drawn.push_back(std::move(pool));
  }
  for (std::size_t c = 0; c < classes.size(); ++c)
    for (int i = 0; i < cfg.k_shot; ++i) {
      const std::size_t idx = drawn[c][std::size_t(i)];
      ep.support.push_back({ds.records[idx], classes[c], std::ptrdiff_t(idx)});
    }
  for (std::size_t c = 0; c < classes.size(); ++c)
    for (std::size_t i = std::size_t(cfg.k_shot); i < need; ++i) {
      const std::size_t idx = drawn[c][i];
      ep.query.push_back({ds.records[idx], classes[c], std::ptrdiff_t(idx)});
    }
  return ep;
}

std::uint64_t episode_seed(std::uint64_t seed, Phase phase, int epoch, int episode) {
  return derive_seed(seed, {phase == Phase::kMetaTrain ? 11u : 13u, std::uint64_t(epoch),
                            std::uint64_t(episode)});
}

EpisodeStream::EpisodeStream(const GestureDataset& ds, EpisodeConfig cfg, int episodes_per_epoch,
                             int epochs, std::uint64_t seed, int first_epoch)
    : ds_(&ds),
      index_(ds),
      cfg_(cfg),
      episodes_per_epoch_(episodes_per_epoch),
      epochs_(epochs),
      seed_(seed),
      epoch_(first_epoch) {
  cfg_.validate();
  if (episodes_per_epoch < 1)
    throw ConfigError("episodes_per_epoch must be >= 1, got " + std::to_string(episodes_per_epoch));
  if (epochs < 1) throw ConfigError("epochs must be >= 1, got " + std::to_string(epochs));
  if (first_epoch < 1) throw ConfigError("first epoch must be >= 1");
}

std::optional<StreamedEpisode> EpisodeStream::next() {
  if (episode_ == episodes_per_epoch_) {
    episode_ = 0;
    ++epoch_;
  }
  if (epoch_ > epochs_) return std::nullopt;
  ++episode_;
  Rng rng(episode_seed(seed_, cfg_.phase, epoch_, episode_));
  return StreamedEpisode{epoch_, episode_, sample_episode(*ds_, index_, cfg_, rng)};
}

}  // namespace profinet
