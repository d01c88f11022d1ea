#pragma once

#include "profinet/csi.hpp"
#include "profinet/preprocess.hpp"
#include "profinet/trainer.hpp"
#include "profinet/rng.hpp"

#include <algorithm>
#include <filesystem>
#include <memory>
#include <string>

#include <unistd.h>

namespace profinet::testing {

/// Small synthetic corpus: T = 4 s at `rate` Hz.
inline SyntheticConfig small_config(int n_classes, int samples_per_class, std::uint64_t seed,
                                    double rate = 25.0, int subcarriers = 6, int antennas = 2) {
  SyntheticConfig cfg;
  cfg.n_classes = n_classes;
  cfg.samples_per_class = samples_per_class;
  cfg.seed = seed;
  cfg.sample_rate_hz = rate;
  cfg.samples = int(rate * cfg.window_seconds);
  cfg.subcarriers = subcarriers;
  cfg.antennas = antennas;
  cfg.motion_bandwidth_hz = std::min(cfg.motion_bandwidth_hz, rate / 2.5);
  return cfg;
}

/// Dataset of constant 4 x 1 x 1 records; the first n_train labels form the
/// meta-train split. Record value encodes (label, position).
inline GestureDataset tiny_dataset(int n_classes, int per_class, int n_train) {
  GestureDataset ds;
  for (int l = 0; l < n_classes; ++l) {
    ds.label_space.push_back(l);
    (l < n_train ? ds.split.train_labels : ds.split.test_labels).push_back(l);
    for (int i = 0; i < per_class; ++i) {
      auto r = std::make_shared<CsiRecord>(4, 1, 1, l, "tiny", 1.0);
      r->amplitude.setConstant(float(l * 1000 + i));
      ds.records.push_back(std::move(r));
    }
  }
  return ds;
}

/// Ten-class corpus of 64 x 8 x 2 records, split 5 / 5, preprocessed and
/// downsampled to 16 x 8 x 2. Small enough for many training runs per test.
inline GestureDataset trainable_dataset(std::uint64_t seed = 1, int per_class = 12) {
  const auto raw = generate_synthetic(small_config(10, per_class, seed, 16.0, 8, 2));
  PreprocessConfig pc;
  pc.downsample_factor = 4;
  return prepare_dataset(split_labels(raw, 5, seed), pc);
}

inline TrainConfig tiny_train_config(AblationMode mode = AblationMode::kProto) {
  TrainConfig c;
  c.epochs = 6;
  c.episodes_per_epoch = 3;
  c.learning_rate = 1e-3;
  c.ablation_mode = mode;
  c.seed = 5;
  c.n_test_episodes = 100;
  c.backbone.conv_channels = {8, 8, 8, 8};
  c.backbone.embedding_dim = 8;
  return c;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("profinet_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  static int& counter() {
    static int n = 0;
    return n;
  }
  std::filesystem::path path_;
};

}  // namespace profinet::testing
