#include "profinet/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace profinet {

namespace {

struct Default {
  const char* key;
  const char* value;
};

// Desk-scale protocol values are overridden per run; the defaults mirror
// the full experimental protocol.
constexpr Default kDefaults[] = {
    // synthetic corpus
    {"n_classes", "62"},
    {"samples_per_class", "50"},
    {"seed", "0"},
    {"samples", "2000"},
    {"subcarriers", "30"},
    {"antennas", "3"},
    {"sample_rate_hz", "500"},
    {"window_seconds", "4"},
    {"motion_bandwidth_hz", "6"},
    {"modulation_depth", "0.2"},
    {"noise_std", "0.4"},
    {"impulse_rate", "0.002"},
    {"max_time_warp", "0.15"},
    {"env", "synthetic"},
    {"n_train", "auto"},
    // preprocessing
    {"preprocess", "true"},
    {"hampel_half_width", "3"},
    {"hampel_n_sigmas", "3"},
    {"dwt_wavelet", "db4"},
    {"dwt_levels", "3"},
    {"dwt_threshold_mode", "soft"},
    {"downsample_factor", "8"},
    // model and training
    {"n_way", "5"},
    {"k_shot", "1"},
    {"n_query", "10"},
    {"epochs", "600"},
    {"episodes_per_epoch", "100"},
    {"learning_rate", "1e-4"},
    {"optimizer", "adam"},
    {"ablation_mode", "proto_A_Bplus"},
    {"fixed_noise_fraction", "0.3"},
    {"n_test_episodes", "600"},
    {"conv_channels", "64,64,64,64"},
    {"embedding_dim", "64"},
    {"input_norm", "relative"},
    {"checkpoint_every", "0"},
    // ablation
    {"modes", "proto,proto_A,proto_B,proto_Bplus,proto_A_Bplus"},
    {"seeds", "1,2,3"},
    {"shots", "1,5"},
    // paths
    {"dataset", "dataset.pfcsi"},
    {"out_dir", "runs"},
    {"checkpoint", ""},
    {"resume", ""},
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename N>
N parse_number(const std::string& key, const std::string& text) {
  N value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || text.empty())
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "' as a number");
  return value;
}

}  // namespace

Config::Config() {
  for (const auto& d : kDefaults) {
    values_[d.key] = d.value;
    sources_[d.key] = "default";
  }
}

void Config::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    // A run manifest: replay its resolved config.
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("cannot parse manifest " + path.string() + ": " + e.what());
    }
    if (!j.contains("config") || !j["config"].is_object())
      throw ConfigError("manifest " + path.string() + " has no config object");
    for (const auto& [k, v] : j["config"].items()) set(k, v.is_string() ? v.get<std::string>() : v.dump(), path.string());
    return;
  }
  parse_text(text, path.string());
}

void Config::parse_text(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), source);
  }
}

void Config::set(const std::string& key, const std::string& value, const std::string& source) {
  if (!values_.count(key)) throw ConfigError("unknown config key '" + key + "'");
  values_[key] = value;
  sources_[key] = source;
}

const std::string& Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

std::string Config::source_of(const std::string& key) const {
  auto it = sources_.find(key);
  return it == sources_.end() ? "" : it->second;
}

int Config::get_int(const std::string& key) const { return parse_number<int>(key, get(key)); }
std::uint64_t Config::get_u64(const std::string& key) const { return parse_number<std::uint64_t>(key, get(key)); }
double Config::get_double(const std::string& key) const { return parse_number<double>(key, get(key)); }

bool Config::get_bool(const std::string& key) const {
  const auto& v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

std::vector<std::string> Config::get_list(const std::string& key) const {
  std::vector<std::string> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ','))
    if (!trim(item).empty()) out.push_back(trim(item));
  return out;
}

std::vector<std::string> Config::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) out.push_back(k);
  return out;
}

std::string Config::to_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

nlohmann::json Config::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : values_) j[k] = v;
  return j;
}

namespace {

// Wraps typed conversion errors so the message names the key.
template <typename F>
auto keyed(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    if (what.find(key) != std::string::npos) throw;
    throw ConfigError("config key '" + key + "': " + what);
  }
}

}  // namespace

SyntheticConfig synthetic_config(const Config& c) {
  SyntheticConfig s;
  s.n_classes = c.get_int("n_classes");
  s.samples_per_class = c.get_int("samples_per_class");
  s.seed = c.get_u64("seed");
  s.samples = c.get_int("samples");
  s.subcarriers = c.get_int("subcarriers");
  s.antennas = c.get_int("antennas");
  s.sample_rate_hz = c.get_double("sample_rate_hz");
  s.window_seconds = c.get_double("window_seconds");
  s.motion_bandwidth_hz = c.get_double("motion_bandwidth_hz");
  s.modulation_depth = c.get_double("modulation_depth");
  s.noise_std = c.get_double("noise_std");
  s.impulse_rate = c.get_double("impulse_rate");
  s.max_time_warp = c.get_double("max_time_warp");
  s.env = c.get("env");
  s.validate();
  return s;
}

PreprocessConfig preprocess_config(const Config& c) {
  PreprocessConfig p;
  p.enabled = c.get_bool("preprocess");
  p.hampel.window_half_width = c.get_int("hampel_half_width");
  p.hampel.n_sigmas = c.get_double("hampel_n_sigmas");
  keyed("hampel_half_width", [&] { p.hampel.validate(); return 0; });
  p.dwt.wavelet = c.get("dwt_wavelet");
  keyed("dwt_wavelet", [&] { return Wavelet::by_name(p.dwt.wavelet).length(); });
  p.dwt.levels = c.get_int("dwt_levels");
  const auto& mode = c.get("dwt_threshold_mode");
  if (mode == "soft") p.dwt.threshold_mode = ThresholdMode::kSoft;
  else if (mode == "hard") p.dwt.threshold_mode = ThresholdMode::kHard;
  else throw ConfigError("config key 'dwt_threshold_mode': expected soft or hard, got '" + mode + "'");
  p.downsample_factor = c.get_int("downsample_factor");
  if (p.downsample_factor < 1) throw ConfigError("config key 'downsample_factor' must be >= 1");
  return p;
}

TrainConfig train_config(const Config& c) {
  TrainConfig t;
  t.n_way = c.get_int("n_way");
  t.k_shot = c.get_int("k_shot");
  t.n_query = c.get_int("n_query");
  t.epochs = c.get_int("epochs");
  t.episodes_per_epoch = c.get_int("episodes_per_epoch");
  t.learning_rate = c.get_double("learning_rate");
  t.optimizer = keyed("optimizer", [&] { return optimizer_from_string(c.get("optimizer")); });
  t.ablation_mode = keyed("ablation_mode", [&] { return ablation_from_string(c.get("ablation_mode")); });
  t.seed = c.get_u64("seed");
  t.fixed_noise_fraction = c.get_double("fixed_noise_fraction");
  t.n_test_episodes = c.get_int("n_test_episodes");
  const auto channels = c.get_list("conv_channels");
  if (channels.size() != 4) throw ConfigError("config key 'conv_channels' needs exactly 4 entries");
  for (std::size_t i = 0; i < 4; ++i) t.backbone.conv_channels[i] = parse_number<int>("conv_channels", channels[i]);
  t.backbone.embedding_dim = c.get_int("embedding_dim");
  t.backbone.downsample_factor = c.get_int("downsample_factor");
  const auto& norm = c.get("input_norm");
  if (norm == "relative") t.backbone.input_norm = InputNorm::kRelative;
  else if (norm == "none") t.backbone.input_norm = InputNorm::kNone;
  else throw ConfigError("config key 'input_norm': expected relative or none, got '" + norm + "'");
  if (t.n_way < 2) throw ConfigError("config key 'n_way' must be >= 2");
  if (t.k_shot < 1) throw ConfigError("config key 'k_shot' must be >= 1");
  if (t.n_query < 1) throw ConfigError("config key 'n_query' must be >= 1");
  if (t.epochs < 1) throw ConfigError("config key 'epochs' must be >= 1");
  if (t.episodes_per_epoch < 1) throw ConfigError("config key 'episodes_per_epoch' must be >= 1");
  if (!(t.learning_rate > 0)) throw ConfigError("config key 'learning_rate' must be positive");
  if (t.n_test_episodes != 0 && t.n_test_episodes < kMinReportedTestEpisodes)
    throw ConfigError("config key 'n_test_episodes' must be 0 or >= " + std::to_string(kMinReportedTestEpisodes));
  return t;
}

std::vector<AblationMode> ablation_modes(const Config& c) {
  std::vector<AblationMode> out;
  for (const auto& m : c.get_list("modes")) out.push_back(keyed("modes", [&] { return ablation_from_string(m); }));
  if (out.empty()) throw ConfigError("config key 'modes' is empty");
  return out;
}

std::vector<std::uint64_t> ablation_seeds(const Config& c) {
  std::vector<std::uint64_t> out;
  for (const auto& s : c.get_list("seeds")) out.push_back(parse_number<std::uint64_t>("seeds", s));
  if (out.empty()) throw ConfigError("config key 'seeds' is empty");
  return out;
}

std::vector<int> ablation_shots(const Config& c) {
  std::vector<int> out;
  for (const auto& s : c.get_list("shots")) {
    const int k = parse_number<int>("shots", s);
    if (k < 1) throw ConfigError("config key 'shots' entries must be >= 1");
    out.push_back(k);
  }
  if (out.empty()) throw ConfigError("config key 'shots' is empty");
  return out;
}

}  // namespace profinet
