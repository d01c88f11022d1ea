#include "profinet/csi.hpp"

#include "profinet/container.hpp"
#include "profinet/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <set>

namespace profinet {

namespace {

constexpr io::Magic kDatasetMagic = {'P', 'F', 'C', 'S', 'I', 'D', 'S', '\0'};

enum StreamTag : std::uint64_t { kBaseline = 1, kClass = 2, kSample = 3, kSplit = 4 };

bool is_integral(double x) { return std::abs(x - std::round(x)) < 1e-9; }

}  // namespace

CsiRecord::CsiRecord(int samples, int subcarriers, int antennas, Label label,
                     std::string env, double sample_rate_hz)
    : amplitude(Mat<float>::Zero(samples, Eigen::Index(subcarriers) * antennas)),
      subcarriers(subcarriers),
      antennas(antennas),
      label(label),
      env(std::move(env)),
      sample_rate_hz(sample_rate_hz) {}

void CsiRecord::validate(double window) const {
  if (subcarriers < 1 || antennas < 1)
    throw ShapeError("record needs S >= 1 and A >= 1, got S=" + std::to_string(subcarriers) +
                     " A=" + std::to_string(antennas));
  if (amplitude.cols() != Eigen::Index(subcarriers) * antennas)
    throw ShapeError("amplitude has " + std::to_string(amplitude.cols()) +
                     " channel columns, expected S*A=" + std::to_string(subcarriers * antennas));
  if (!(sample_rate_hz > 0)) throw ConfigError("sample_rate_hz must be positive");
  const double expected = sample_rate_hz * window;
  if (!is_integral(expected) || Eigen::Index(std::llround(expected)) != samples())
    throw ShapeError("record has T=" + std::to_string(samples()) + " samples, expected " +
                     std::to_string(expected) + " (sample_rate_hz x window_seconds)");
  if (!amplitude.allFinite()) throw ShapeError("amplitude contains non-finite values");
  if ((amplitude.array() < 0.0f).any()) throw ShapeError("amplitude contains negative values");
}

bool operator==(const CsiRecord& a, const CsiRecord& b) {
  return a.subcarriers == b.subcarriers && a.antennas == b.antennas && a.label == b.label &&
         a.env == b.env && a.sample_rate_hz == b.sample_rate_hz &&
         a.amplitude.rows() == b.amplitude.rows() && a.amplitude.cols() == b.amplitude.cols() &&
         a.amplitude == b.amplitude;
}

std::vector<std::size_t> GestureDataset::indices_of(Label label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i]->label == label) out.push_back(i);
  return out;
}

void GestureDataset::validate() const {
  const std::set<Label> space(label_space.begin(), label_space.end());
  for (const auto& r : records) {
    if (!space.count(r->label))
      throw ConfigError("record label " + std::to_string(r->label) + " is outside the label space");
  }
  std::set<Label> train;
  for (Label l : split.train_labels) {
    if (!space.count(l))
      throw ConfigError("train label " + std::to_string(l) + " is outside the label space");
    train.insert(l);
  }
  for (Label l : split.test_labels) {
    if (!space.count(l))
      throw ConfigError("test label " + std::to_string(l) + " is outside the label space");
    if (train.count(l))
      throw ConfigError("label " + std::to_string(l) + " is in both train and test splits");
  }
}

bool operator==(const GestureDataset& a, const GestureDataset& b) {
  if (a.records.size() != b.records.size() || a.label_space != b.label_space ||
      !(a.split == b.split) || a.window_seconds != b.window_seconds)
    return false;
  for (std::size_t i = 0; i < a.records.size(); ++i)
    if (!(*a.records[i] == *b.records[i])) return false;
  return true;
}

void SyntheticConfig::validate() const {
  if (n_classes < 2) throw ConfigError("n_classes must be >= 2, got " + std::to_string(n_classes));
  if (samples_per_class < 1)
    throw ConfigError("samples_per_class must be >= 1, got " + std::to_string(samples_per_class));
  if (subcarriers < 1) throw ConfigError("subcarriers must be >= 1");
  if (antennas < 1) throw ConfigError("antennas must be >= 1");
  if (!(sample_rate_hz > 0)) throw ConfigError("sample_rate_hz must be positive");
  if (!(window_seconds > 0)) throw ConfigError("window_seconds must be positive");
  const double expected = sample_rate_hz * window_seconds;
  if (samples < 4 || !is_integral(expected) || std::llround(expected) != samples)
    throw ConfigError("samples (T=" + std::to_string(samples) +
                      ") must equal sample_rate_hz x window_seconds = " + std::to_string(expected));
  if (!(motion_bandwidth_hz > 0)) throw ConfigError("motion_bandwidth_hz must be positive");
  if (!(modulation_depth >= 0 && modulation_depth < 1))
    throw ConfigError("modulation_depth must lie in [0, 1)");
  if (!(noise_std >= 0)) throw ConfigError("noise_std must be >= 0");
  if (!(impulse_rate >= 0 && impulse_rate <= 1)) throw ConfigError("impulse_rate must lie in [0, 1]");
  if (!(max_time_warp >= 0 && max_time_warp < 0.5)) throw ConfigError("max_time_warp must lie in [0, 0.5)");
}

namespace {

struct ClassTemplate {
  std::array<double, 3> freq{};
  std::array<double, 3> phase{};
  std::array<double, 3> weight{};
  double spatial_rate = 1.0;
  double spatial_phase = 0.0;
  double antenna_skew = 0.0;
};

ClassTemplate make_template(const SyntheticConfig& cfg, int c) {
  auto rng = make_rng(cfg.seed, {kClass, std::uint64_t(c)});
  std::uniform_real_distribution<double> freq(0.3, cfg.motion_bandwidth_hz);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> weight(0.4, 1.0);
  std::uniform_real_distribution<double> rate(0.3, 2.5);
  ClassTemplate tpl;
  for (int k = 0; k < 3; ++k) {
    tpl.freq[k] = freq(rng);
    tpl.phase[k] = angle(rng);
    tpl.weight[k] = weight(rng);
  }
  const double total = tpl.weight[0] + tpl.weight[1] + tpl.weight[2];
  for (auto& w : tpl.weight) w /= total;
  tpl.spatial_rate = rate(rng);
  tpl.spatial_phase = angle(rng);
  tpl.antenna_skew = angle(rng);
  return tpl;
}

}  // namespace

GestureDataset generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  const int T = cfg.samples, S = cfg.subcarriers, A = cfg.antennas;
  const double two_pi = 2.0 * std::numbers::pi;

  // Shared multipath baseline: smooth frequency-selective fading per antenna.
  Mat<double> baseline(S, A);
  {
    auto rng = make_rng(cfg.seed, {kBaseline});
    std::uniform_real_distribution<double> angle(0.0, two_pi);
    const double p1 = angle(rng), p2 = angle(rng);
    for (int a = 0; a < A; ++a) {
      const double pa = angle(rng);
      for (int s = 0; s < S; ++s) {
        const double x = double(s) / S;
        baseline(s, a) = 10.0 + 2.5 * std::cos(two_pi * 1.3 * x + p1 + pa) +
                         1.0 * std::cos(two_pi * 3.1 * x + p2) + 0.5 * a;
      }
    }
  }

  GestureDataset ds;
  ds.window_seconds = cfg.window_seconds;
  ds.records.reserve(std::size_t(cfg.n_classes) * cfg.samples_per_class);
  const double duration = cfg.window_seconds;

  for (int c = 0; c < cfg.n_classes; ++c) {
    const ClassTemplate tpl = make_template(cfg, c);
    Mat<double> gain(S, A);
    for (int a = 0; a < A; ++a)
      for (int s = 0; s < S; ++s)
        gain(s, a) = 0.5 + 0.5 * std::cos(two_pi * tpl.spatial_rate * double(s) / S +
                                          tpl.spatial_phase + a * tpl.antenna_skew);

    for (int i = 0; i < cfg.samples_per_class; ++i) {
      auto rng = make_rng(cfg.seed, {kSample, std::uint64_t(c), std::uint64_t(i)});
      std::uniform_real_distribution<double> unit(-1.0, 1.0);
      std::uniform_real_distribution<double> u01(0.0, 1.0);
      std::normal_distribution<double> gauss(0.0, 1.0);
      const double warp = 1.0 + cfg.max_time_warp * unit(rng);
      const double shift = 0.05 * duration * unit(rng);
      const double strength = 1.0 + 0.2 * unit(rng);

      // Gesture envelope over roughly 3.5 s of the window, time-warped.
      Vec<double> motion(T);
      for (int t = 0; t < T; ++t) {
        const double time = double(t) / cfg.sample_rate_hz;
        const double tw = (time - shift - 0.5 * duration) * warp + 0.5 * duration;
        double m = 0.0;
        for (int k = 0; k < 3; ++k) m += tpl.weight[k] * std::sin(two_pi * tpl.freq[k] * tw + tpl.phase[k]);
        const double edge = std::clamp((tw - 0.25) / 0.3, 0.0, 1.0) *
                            std::clamp((duration - 0.25 - tw) / 0.3, 0.0, 1.0);
        motion(t) = strength * edge * m;
      }

      auto rec = std::make_shared<CsiRecord>(T, S, A, Label(c), cfg.env, cfg.sample_rate_hz);
      for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
          const double base = baseline(s, a);
          const double depth = cfg.modulation_depth * gain(s, a);
          auto col = rec->channel(s, a);
          for (int t = 0; t < T; ++t) {
            double v = base * (1.0 + depth * motion(t)) + cfg.noise_std * base * gauss(rng);
            if (cfg.impulse_rate > 0 && u01(rng) < cfg.impulse_rate) v += base * (2.0 + 3.0 * u01(rng));
            col(t) = float(std::max(v, 0.0));
          }
        }
      }
      ds.records.push_back(std::move(rec));
    }
  }
  for (int c = 0; c < cfg.n_classes; ++c) ds.label_space.push_back(c);
  return split_labels(ds, default_train_count(cfg.n_classes), cfg.seed);
}

int default_train_count(int n_classes) {
  const int n = int(std::lround(double(n_classes) * 46.0 / 62.0));
  return std::clamp(n, 1, n_classes - 1);
}

GestureDataset split_labels(const GestureDataset& ds, int n_train, std::uint64_t seed) {
  const int n_labels = int(ds.label_space.size());
  if (n_train < 1 || n_train >= n_labels)
    throw ConfigError("n_train must lie in [1, " + std::to_string(n_labels - 1) + "], got " +
                      std::to_string(n_train));
  std::vector<Label> labels = ds.label_space;
  auto rng = make_rng(seed, {kSplit});
  std::shuffle(labels.begin(), labels.end(), rng);
  GestureDataset out = ds;
  out.split.train_labels.assign(labels.begin(), labels.begin() + n_train);
  out.split.test_labels.assign(labels.begin() + n_train, labels.end());
  std::sort(out.split.train_labels.begin(), out.split.train_labels.end());
  std::sort(out.split.test_labels.begin(), out.split.test_labels.end());
  return out;
}

void save_dataset(const GestureDataset& ds, const std::filesystem::path& path) {
  nlohmann::json header;
  header["format_version"] = kDatasetFormatVersion;
  header["window_seconds"] = ds.window_seconds;
  header["label_space"] = ds.label_space;
  header["split"] = {{"train", ds.split.train_labels}, {"test", ds.split.test_labels}};
  auto& recs = header["records"] = nlohmann::json::array();
  for (const auto& r : ds.records) {
    recs.push_back({{"label", r->label},
                    {"env", r->env},
                    {"sample_rate_hz", r->sample_rate_hz},
                    {"T", r->samples()},
                    {"S", r->subcarriers},
                    {"A", r->antennas}});
  }
  io::ContainerWriter writer(path, kDatasetMagic, kDatasetFormatVersion, header);
  // Payload is row-major [T x S x A], i.e. the transpose of the column layout.
  std::vector<float> buffer;
  for (const auto& r : ds.records) {
    buffer.resize(std::size_t(r->amplitude.size()));
    Eigen::Map<Eigen::Matrix<float, DYN, DYN, Eigen::RowMajor>>(buffer.data(), r->samples(),
                                                                r->channels()) = r->amplitude;
    writer.write_floats(buffer);
  }
  writer.close();
}

GestureDataset load_dataset(const std::filesystem::path& path) {
  io::ContainerReader reader(path, kDatasetMagic, kDatasetFormatVersion, "dataset");
  const auto& h = reader.header();
  GestureDataset ds;
  try {
    ds.window_seconds = h.at("window_seconds").get<double>();
    ds.label_space = h.at("label_space").get<std::vector<Label>>();
    ds.split.train_labels = h.at("split").at("train").get<std::vector<Label>>();
    ds.split.test_labels = h.at("split").at("test").get<std::vector<Label>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid dataset header: ") + e.what(), reader.offset());
  }
  std::vector<float> buffer;
  for (const auto& meta : h.at("records")) {
    const std::uint64_t record_offset = reader.offset();
    std::shared_ptr<CsiRecord> rec;
    try {
      const auto T = meta.at("T").get<long long>();
      const auto S = meta.at("S").get<int>();
      const auto A = meta.at("A").get<int>();
      if (T < 1 || S < 1 || A < 1)
        throw ParseError("record with non-positive dimensions", record_offset);
      rec = std::make_shared<CsiRecord>(int(T), S, A, meta.at("label").get<Label>(),
                                        meta.at("env").get<std::string>(),
                                        meta.at("sample_rate_hz").get<double>());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("invalid record entry: ") + e.what(), record_offset);
    }
    buffer.resize(std::size_t(rec->amplitude.size()));
    reader.read_floats(buffer);
    rec->amplitude = Eigen::Map<const Eigen::Matrix<float, DYN, DYN, Eigen::RowMajor>>(
        buffer.data(), rec->samples(), rec->channels());
    ds.records.push_back(std::move(rec));
  }
  reader.expect_end();
  ds.validate();
  return ds;
}

}  // namespace profinet
