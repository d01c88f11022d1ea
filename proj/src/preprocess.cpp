#include "profinet/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace profinet {

double median_of(std::span<double> v) {
  if (v.empty()) throw ConfigError("median of an empty window");
  const auto n = v.size();
  auto mid = v.begin() + std::ptrdiff_t(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (n % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

void HampelConfig::validate() const {
  if (window_half_width < 1)
    throw ConfigError("hampel.window_half_width must be >= 1, got " + std::to_string(window_half_width));
  if (!(n_sigmas > 0)) throw ConfigError("hampel.n_sigmas must be positive");
}

Vec<double> hampel_filter(const VecRef<double>& x, const HampelConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = x.size();
  const int h = cfg.window_half_width;
  if (n <= 2 * Eigen::Index(h))
    throw ConfigError("hampel series of length " + std::to_string(n) +
                      " is too short for window_half_width " + std::to_string(h));
  Vec<double> out = x;
  std::vector<double> window, dev;
  window.reserve(std::size_t(2 * h + 1));
  dev.reserve(std::size_t(2 * h + 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, i - h);
    const Eigen::Index hi = std::min<Eigen::Index>(n - 1, i + h);
    window.assign(x.data() + lo, x.data() + hi + 1);
    const double med = median_of(window);
    dev.clear();
    for (Eigen::Index j = lo; j <= hi; ++j) dev.push_back(std::abs(x(j) - med));
    const double mad = median_of(dev);
    const double deviation = std::abs(x(i) - med);
    const bool outlier = mad > 0 ? deviation > cfg.n_sigmas * kMadToSigma * mad : deviation > 0;
    if (outlier) out(i) = med;
  }
  return out;
}

Wavelet Wavelet::by_name(const std::string& name) {
  Wavelet w;
  w.name = name;
  if (name == "haar" || name == "db1") {
    const double r = std::numbers::sqrt2 / 2.0;
    w.lowpass = {r, r};
  } else if (name == "db2") {
    const double s3 = std::sqrt(3.0), d = 4.0 * std::numbers::sqrt2;
    w.lowpass = {(1 - s3) / d, (3 - s3) / d, (3 + s3) / d, (1 + s3) / d};
  } else if (name == "db4") {
    w.lowpass = {-0.010597401784997278, 0.032883011666982945, 0.030841381835986965,
                 -0.18703481171888114,  -0.02798376941698385, 0.6308807679295904,
                 0.7148465705525415,    0.23037781330885523};
  } else {
    throw ConfigError("dwt.wavelet: unknown wavelet '" + name + "' (expected haar, db2 or db4)");
  }
  const int f = w.length();
  w.highpass.resize(std::size_t(f));
  for (int j = 0; j < f; ++j)
    w.highpass[std::size_t(j)] = ((j % 2) ? -1.0 : 1.0) * w.lowpass[std::size_t(f - 1 - j)];
  return w;
}

void DwtConfig::validate(Eigen::Index n) const {
  Wavelet::by_name(wavelet);
  const int max_levels = n >= 2 ? int(std::floor(std::log2(double(n)))) : 0;
  if (levels < 1 || levels > max_levels)
    throw ConfigError("dwt.levels must lie in [1, " + std::to_string(max_levels) +
                      "] for length " + std::to_string(n) + ", got " + std::to_string(levels));
  if (fixed_threshold && !(*fixed_threshold >= 0))
    throw ConfigError("dwt.threshold must be >= 0");
}

namespace {

// Half-sample symmetric extension: x[-1] = x[0], x[n] = x[n-1].
inline Eigen::Index reflect(Eigen::Index i, Eigen::Index n) {
  const Eigen::Index period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

}  // namespace

std::pair<Vec<double>, Vec<double>> dwt_step(const VecRef<double>& x, const Wavelet& w) {
  const Eigen::Index n = x.size();
  const int f = w.length();
  const Eigen::Index out_len = (n + f - 1) / 2;
  Vec<double> approx(out_len), detail(out_len);
  for (Eigen::Index k = 0; k < out_len; ++k) {
    double a = 0, d = 0;
    for (int j = 0; j < f; ++j) {
      const double v = x(reflect(2 * k + 1 - j, n));
      a += w.lowpass[std::size_t(j)] * v;
      d += w.highpass[std::size_t(j)] * v;
    }
    approx(k) = a;
    detail(k) = d;
  }
  return {std::move(approx), std::move(detail)};
}

Vec<double> idwt_step(const VecRef<double>& approx, const VecRef<double>& detail,
                      const Wavelet& w, Eigen::Index length) {
  if (approx.size() != detail.size())
    throw ShapeError("idwt: approximation and detail lengths differ");
  const int f = w.length();
  const Eigen::Index m = approx.size();
  Vec<double> out(length);
  for (Eigen::Index t = 0; t < length; ++t) {
    double acc = 0;
    // Adjoint of the analysis map: coefficient k touched sample 2k+1-j.
    for (int j = (t + 1) % 2; j < f; j += 2) {
      const Eigen::Index k = (t + j - 1) / 2;
      if (k < 0 || k >= m) continue;
      acc += w.lowpass[std::size_t(j)] * approx(k) + w.highpass[std::size_t(j)] * detail(k);
    }
    out(t) = acc;
  }
  return out;
}

WaveletDecomposition wavedec(const VecRef<double>& x, const Wavelet& w, int levels) {
  WaveletDecomposition dec;
  Vec<double> current = x;
  for (int l = 0; l < levels; ++l) {
    dec.lengths.push_back(current.size());
    auto [a, d] = dwt_step(current, w);
    dec.details.push_back(std::move(d));
    current = std::move(a);
  }
  dec.approximation = std::move(current);
  return dec;
}

Vec<double> waverec(const WaveletDecomposition& dec, const Wavelet& w) {
  Vec<double> current = dec.approximation;
  for (int l = int(dec.details.size()) - 1; l >= 0; --l)
    current = idwt_step(current, dec.details[std::size_t(l)], w, dec.lengths[std::size_t(l)]);
  return current;
}

double universal_threshold(const VecRef<double>& finest, Eigen::Index n) {
  std::vector<double> mags(std::size_t(finest.size()));
  for (Eigen::Index i = 0; i < finest.size(); ++i) mags[std::size_t(i)] = std::abs(finest(i));
  const double sigma = median_of(mags) / 0.6745;
  return sigma * std::sqrt(2.0 * std::log(double(n)));
}

double apply_threshold(double c, double threshold, ThresholdMode mode) {
  if (mode == ThresholdMode::kHard) return std::abs(c) > threshold ? c : 0.0;
  const double mag = std::abs(c) - threshold;
  return mag > 0 ? std::copysign(mag, c) : 0.0;
}

Vec<double> dwt_denoise(const VecRef<double>& series, const DwtConfig& cfg) {
  cfg.validate(series.size());
  const Wavelet w = Wavelet::by_name(cfg.wavelet);
  WaveletDecomposition dec = wavedec(series, w, cfg.levels);
  const double lambda =
      cfg.fixed_threshold ? *cfg.fixed_threshold : universal_threshold(dec.details[0], series.size());
  if (lambda > 0) {
    for (auto& d : dec.details)
      for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = apply_threshold(d(i), lambda, cfg.threshold_mode);
  }
  return waverec(dec, w);
}

CsiRecord preprocess_record(const CsiRecord& rec, const HampelConfig& h, const DwtConfig& w) {
  h.validate();
  w.validate(rec.samples());
  CsiRecord out = rec;
  for (Eigen::Index c = 0; c < rec.channels(); ++c) {
    const Vec<double> raw = rec.amplitude.col(c).cast<double>();
    const Vec<double> clean = dwt_denoise(hampel_filter(raw, h), w);
    out.amplitude.col(c) = clean.cwiseMax(0.0).cast<float>();
  }
  return out;
}

CsiRecord downsample_record(const CsiRecord& rec, int factor) {
  if (factor < 1) throw ConfigError("downsample_factor must be >= 1, got " + std::to_string(factor));
  if (rec.samples() % factor != 0)
    throw ConfigError("downsample_factor " + std::to_string(factor) + " does not divide T=" +
                      std::to_string(rec.samples()));
  if (factor == 1) return rec;
  const Eigen::Index t_out = rec.samples() / factor;
  CsiRecord out(int(t_out), rec.subcarriers, rec.antennas, rec.label, rec.env,
                rec.sample_rate_hz / factor);
  for (Eigen::Index t = 0; t < t_out; ++t)
    out.amplitude.row(t) =
        (rec.amplitude.middleRows(t * factor, factor).cast<double>().colwise().sum() / double(factor))
            .cast<float>();
  return out;
}

GestureDataset prepare_dataset(const GestureDataset& ds, const PreprocessConfig& cfg) {
  GestureDataset out;
  out.label_space = ds.label_space;
  out.split = ds.split;
  out.window_seconds = ds.window_seconds;
  out.records.reserve(ds.records.size());
  for (const auto& r : ds.records) {
    CsiRecord clean = cfg.enabled ? preprocess_record(*r, cfg.hampel, cfg.dwt) : *r;
    out.records.push_back(std::make_shared<CsiRecord>(downsample_record(clean, cfg.downsample_factor)));
  }
  return out;
}

}  // namespace profinet
