#include "profinet/container.hpp"

#include <bit>
#include <cstring>
#include <vector>

namespace profinet::io {

static_assert(std::endian::native == std::endian::little,
              "container payloads are little-endian");

namespace {

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

ContainerWriter::ContainerWriter(const std::filesystem::path& path,
                                 const Magic& magic, std::uint32_t version,
                                 const nlohmann::json& header)
    : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
  if (!out_) throw Error("cannot open " + path.string() + " for writing");
  const std::string text = header.dump();
  out_.write(magic.data(), magic.size());
  put<std::uint32_t>(out_, version);
  put<std::uint32_t>(out_, 0);
  put<std::uint64_t>(out_, text.size());
  out_.write(text.data(), std::streamsize(text.size()));
}

void ContainerWriter::write_floats(std::span<const float> values) {
  out_.write(reinterpret_cast<const char*>(values.data()),
             std::streamsize(values.size_bytes()));
}

void ContainerWriter::close() {
  out_.flush();
  if (!out_) throw Error("write failed for " + path_.string());
  out_.close();
}

ContainerReader::ContainerReader(const std::filesystem::path& path,
                                 const Magic& magic,
                                 std::uint32_t expected_version,
                                 const std::string& kind)
    : in_(path, std::ios::binary) {
  if (!in_) throw Error("cannot open " + path.string());
  Magic found{};
  read_exact(found.data(), found.size(), "magic");
  if (found != magic) throw ParseError("not a " + kind + " file (bad magic)", 0);

  std::uint32_t version = 0, reserved = 0;
  std::uint64_t header_len = 0;
  read_exact(reinterpret_cast<char*>(&version), sizeof version, "version");
  if (version != expected_version) throw VersionError(kind, version, expected_version);
  read_exact(reinterpret_cast<char*>(&reserved), sizeof reserved, "reserved field");
  read_exact(reinterpret_cast<char*>(&header_len), sizeof header_len, "header length");

  constexpr std::uint64_t kMaxHeader = 1ULL << 31;
  if (header_len > kMaxHeader)
    throw ParseError("implausible header length " + std::to_string(header_len), offset_ - 8);
  std::string text(header_len, '\0');
  const std::uint64_t header_start = offset_;
  read_exact(text.data(), text.size(), "header");
  try {
    header_ = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed header: ") + e.what(), header_start + e.byte);
  }
}

void ContainerReader::read_exact(char* dst, std::size_t n, const char* what) {
  in_.read(dst, std::streamsize(n));
  const auto got = std::uint64_t(in_.gcount());
  if (got != n)
    throw ParseError(std::string("truncated file while reading ") + what + ": expected " +
                         std::to_string(n) + " bytes, got " + std::to_string(got),
                     offset_ + got);
  offset_ += n;
}

void ContainerReader::read_floats(std::span<float> out) {
  read_exact(reinterpret_cast<char*>(out.data()), out.size_bytes(), "payload");
}

void ContainerReader::expect_end() {
  char c;
  in_.read(&c, 1);
  if (in_.gcount() != 0) throw ParseError("trailing bytes after payload", offset_);
}

}  // namespace profinet::io
