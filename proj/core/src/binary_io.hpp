#pragma once

// Shared helpers for the text-header + little-endian payload containers used
// by corpus and checkpoint files.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace rap::io {

class ByteWriter {
 public:
  void f64(double v);
  void f64s(std::span<const double> v);
  void i64(std::int64_t v);
  void u8(std::uint8_t v);
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  /// `what` names the container in truncation messages.
  ByteReader(std::span<const std::uint8_t> bytes, std::string what)
      : bytes_(bytes), what_(std::move(what)) {}

  double f64();
  void f64s(std::span<double> out);
  std::int64_t i64();
  std::uint8_t u8();
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const;

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::string what_;
};

struct Container {
  std::vector<std::string> header_lines;  // without the magic line and the "end" line
  std::vector<std::uint8_t> payload;
};

/// Writes `magic version`, the header lines, `payload_bytes N`, `end`, then
/// the payload.
void write_container(const std::filesystem::path& path, const std::string& magic, int version,
                     const std::vector<std::string>& header_lines,
                     const std::vector<std::uint8_t>& payload);

/// Reads a container written by write_container. Raises FormatError for a
/// wrong magic or malformed header (kMalformedHeader), an unexpected version
/// (kVersionMismatch), or a short payload (kTruncated, naming the expected
/// byte count). IoError if the file cannot be opened.
Container read_container(const std::filesystem::path& path, const std::string& magic,
                         int version);

/// Splits a header line into whitespace-separated fields.
std::vector<std::string> fields(const std::string& line);

}  // namespace rap::io
