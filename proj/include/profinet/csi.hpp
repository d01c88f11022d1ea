#pragma once

#include "profinet/types.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace profinet {

inline constexpr double kDefaultWindowSeconds = 4.0;

/// One CSI amplitude capture. The tensor [T x S x A] is held as a T x (S*A)
/// matrix so that every (subcarrier, antenna) channel is a contiguous column;
/// channel (s, a) lives in column s * A + a.
struct CsiRecord {
  Mat<float> amplitude;
  int subcarriers = 0;
  int antennas = 0;
  Label label = 0;
  std::string env;
  double sample_rate_hz = 500.0;

  CsiRecord() = default;
  CsiRecord(int samples, int subcarriers, int antennas, Label label,
            std::string env, double sample_rate_hz);

  Eigen::Index samples() const { return amplitude.rows(); }
  Eigen::Index channels() const { return amplitude.cols(); }
  Eigen::Index channel_index(int s, int a) const { return Eigen::Index(s) * antennas + a; }

  float& at(Eigen::Index t, int s, int a) { return amplitude(t, channel_index(s, a)); }
  float at(Eigen::Index t, int s, int a) const { return amplitude(t, channel_index(s, a)); }

  auto channel(int s, int a) { return amplitude.col(channel_index(s, a)); }
  auto channel(int s, int a) const { return amplitude.col(channel_index(s, a)); }

  double window_seconds() const { return double(samples()) / sample_rate_hz; }

  /// Throws ShapeError / ConfigError when an invariant is broken.
  void validate(double window_seconds = kDefaultWindowSeconds) const;
};

bool operator==(const CsiRecord& a, const CsiRecord& b);

using RecordPtr = std::shared_ptr<const CsiRecord>;

struct LabelSplit {
  std::vector<Label> train_labels;
  std::vector<Label> test_labels;
  bool operator==(const LabelSplit&) const = default;
};

/// Records plus the disjoint meta-train / meta-test label split.
struct GestureDataset {
  std::vector<RecordPtr> records;
  std::vector<Label> label_space;  // sorted, unique
  LabelSplit split;
  double window_seconds = kDefaultWindowSeconds;

  std::size_t size() const { return records.size(); }
  const CsiRecord& operator[](std::size_t i) const { return *records[i]; }

  /// Record indices grouped per label, in record order.
  std::vector<std::size_t> indices_of(Label label) const;

  void validate() const;
};

bool operator==(const GestureDataset& a, const GestureDataset& b);

struct SyntheticConfig {
  int n_classes = 62;
  int samples_per_class = 50;
  std::uint64_t seed = 0;
  int samples = 2000;  // T
  int subcarriers = 30;  // S
  int antennas = 3;  // A
  double sample_rate_hz = 500.0;
  double window_seconds = kDefaultWindowSeconds;
  double motion_bandwidth_hz = 6.0;
  double modulation_depth = 0.2;
  double noise_std = 0.4;  // relative to the multipath baseline
  double impulse_rate = 0.002;
  double max_time_warp = 0.15;
  std::string env = "synthetic";

  void validate() const;
};

/// Deterministic stand-in corpus: each class modulates a shared multipath
/// baseline with its own low-frequency tone set and subcarrier gain pattern.
/// Intra-class variation comes from time warp, shift, template gain, noise
/// and sparse impulses. Applies the default label split.
GestureDataset generate_synthetic(const SyntheticConfig& cfg);

/// Train-label count used when no split is requested explicitly
/// (46 of 62, scaled proportionally for other class counts).
int default_train_count(int n_classes);

/// Returns a copy of `ds` whose split assigns exactly n_train labels to
/// meta-train and the rest to meta-test.
GestureDataset split_labels(const GestureDataset& ds, int n_train,
                            std::uint64_t seed);

inline constexpr std::uint32_t kDatasetFormatVersion = 1;

void save_dataset(const GestureDataset& ds, const std::filesystem::path& path);
GestureDataset load_dataset(const std::filesystem::path& path);

}  // namespace profinet
