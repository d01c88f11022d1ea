#pragma once

#include "profinet/csi.hpp"
#include "profinet/types.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace profinet {

struct HampelConfig {
  int window_half_width = 3;
  double n_sigmas = 3.0;

  void validate() const;
};

/// Scale turning a median absolute deviation into a Gaussian sigma estimate.
inline constexpr double kMadToSigma = 1.4826;

/// Sliding-window outlier replacement. A sample is replaced by its window
/// median when it deviates by more than n_sigmas scaled MADs; windows are
/// truncated at the series ends. With a zero MAD any sample that differs
/// from the median is replaced.
Vec<double> hampel_filter(const VecRef<double>& series, const HampelConfig& cfg);

enum class ThresholdMode { kSoft, kHard };

/// Orthonormal wavelet filter pair. `lowpass` is the analysis scaling filter;
/// the highpass is its quadrature mirror.
struct Wavelet {
  std::string name;
  std::vector<double> lowpass;
  std::vector<double> highpass;

  static Wavelet by_name(const std::string& name);  // haar, db2, db4
  int length() const { return int(lowpass.size()); }
};

struct DwtConfig {
  std::string wavelet = "db4";
  int levels = 3;
  ThresholdMode threshold_mode = ThresholdMode::kSoft;
  /// Replaces the universal threshold when set (0 gives the identity).
  std::optional<double> fixed_threshold;

  void validate(Eigen::Index series_length) const;
};

/// One analysis step with half-sample symmetric extension.
/// Returns (approximation, detail), each of length floor((n + F - 1) / 2).
std::pair<Vec<double>, Vec<double>> dwt_step(const VecRef<double>& x, const Wavelet& w);

/// Inverse of dwt_step, reconstructing `length` samples.
Vec<double> idwt_step(const VecRef<double>& approx, const VecRef<double>& detail,
                      const Wavelet& w, Eigen::Index length);

struct WaveletDecomposition {
  Vec<double> approximation;
  std::vector<Vec<double>> details;  // details[0] is the finest level
  std::vector<Eigen::Index> lengths;  // input length at each level
};

WaveletDecomposition wavedec(const VecRef<double>& x, const Wavelet& w, int levels);
Vec<double> waverec(const WaveletDecomposition& dec, const Wavelet& w);

/// Universal threshold sigma * sqrt(2 ln n), sigma = MAD(finest details) / 0.6745.
double universal_threshold(const VecRef<double>& finest_detail, Eigen::Index n);

double apply_threshold(double c, double threshold, ThresholdMode mode);

/// Multilevel decomposition, detail thresholding, reconstruction.
Vec<double> dwt_denoise(const VecRef<double>& series, const DwtConfig& cfg);

/// Hampel then DWT on every (subcarrier, antenna) channel independently.
/// Amplitudes are clamped at zero after reconstruction.
CsiRecord preprocess_record(const CsiRecord& rec, const HampelConfig& h, const DwtConfig& w);

/// Mean-pools the time axis by `factor`; the sample rate drops accordingly.
CsiRecord downsample_record(const CsiRecord& rec, int factor);

struct PreprocessConfig {
  HampelConfig hampel;
  DwtConfig dwt;
  bool enabled = true;
  int downsample_factor = 8;
};

/// Preprocesses and downsamples every record; labels and split are kept.
GestureDataset prepare_dataset(const GestureDataset& ds, const PreprocessConfig& cfg);

double median_of(std::span<double> values);  // reorders `values`

}  // namespace profinet
