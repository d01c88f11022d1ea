#pragma once

// Binary container shared by dataset and checkpoint files:
//
//   magic        8 bytes
//   version      u32 little-endian
//   reserved     u32 (zero)
//   header_len   u64 little-endian
//   header       header_len bytes of UTF-8 JSON
//   payload      little-endian float32 blocks described by the header

#include "profinet/types.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>

namespace profinet::io {

using Magic = std::array<char, 8>;

class ContainerWriter {
 public:
  ContainerWriter(const std::filesystem::path& path, const Magic& magic,
                  std::uint32_t version, const nlohmann::json& header);

  void write_floats(std::span<const float> values);
  void close();

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

class ContainerReader {
 public:
  /// Validates magic and version and parses the JSON header.
  ContainerReader(const std::filesystem::path& path, const Magic& magic,
                  std::uint32_t expected_version, const std::string& kind);

  const nlohmann::json& header() const { return header_; }
  std::uint64_t offset() const { return offset_; }

  void read_floats(std::span<float> out);
  /// Throws ParseError unless the payload has been fully consumed.
  void expect_end();

 private:
  void read_exact(char* dst, std::size_t n, const char* what);

  std::ifstream in_;
  std::uint64_t offset_ = 0;
  nlohmann::json header_;
};

}  // namespace profinet::io
