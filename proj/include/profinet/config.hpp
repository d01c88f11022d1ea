#pragma once

// Layered key = value configuration: built-in defaults, then a config file,
// then command-line overrides. Every key must be known; unknown keys and
// malformed values raise ConfigError naming the key.

#include "profinet/csi.hpp"
#include "profinet/preprocess.hpp"
#include "profinet/trainer.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace profinet {

class Config {
 public:
  /// All keys with their default values.
  Config();

  void load_file(const std::filesystem::path& path);
  void parse_text(const std::string& text, const std::string& source);
  void set(const std::string& key, const std::string& value, const std::string& source = "override");

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  std::string source_of(const std::string& key) const;

  int get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;

  /// Keys in sorted order.
  std::vector<std::string> keys() const;
  /// Serializes as key = value lines, readable by parse_text.
  std::string to_text() const;
  nlohmann::json to_json() const;

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> sources_;
};

SyntheticConfig synthetic_config(const Config& c);
PreprocessConfig preprocess_config(const Config& c);
TrainConfig train_config(const Config& c);
std::vector<AblationMode> ablation_modes(const Config& c);
std::vector<std::uint64_t> ablation_seeds(const Config& c);
std::vector<int> ablation_shots(const Config& c);

}  // namespace profinet
