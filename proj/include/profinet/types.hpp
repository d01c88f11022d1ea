#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace profinet {

static constexpr auto DYN = Eigen::Dynamic;

template <typename T>
using Mat = Eigen::Matrix<T, DYN, DYN>;
template <typename T>
using Vec = Eigen::Matrix<T, DYN, 1>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, DYN>;
template <typename T>
using VecRef = Eigen::Ref<const Vec<T>>;
template <typename T>
using MatRef = Eigen::Ref<const Mat<T>>;

using Label = std::int32_t;

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value; the message names the offending key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor dimension mismatch.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Episode cannot be sampled or scored (missing classes, too few records).
class EpisodeError : public Error {
 public:
  using Error::Error;
};

/// Corrupt or truncated container file.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Container written with a format version this build does not read.
class VersionError : public Error {
 public:
  VersionError(const std::string& kind, std::uint32_t found,
               std::uint32_t expected)
      : Error(kind + " format version " + std::to_string(found) +
              " is not supported (expected version " +
              std::to_string(expected) + ")"),
        found_(found),
        expected_(expected) {}
  std::uint32_t found() const noexcept { return found_; }
  std::uint32_t expected() const noexcept { return expected_; }

 private:
  std::uint32_t found_;
  std::uint32_t expected_;
};

/// Non-finite training loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

inline std::string shape_str(Eigen::Index rows, Eigen::Index cols) {
  return "[" + std::to_string(rows) + " x " + std::to_string(cols) + "]";
}

}  // namespace profinet
