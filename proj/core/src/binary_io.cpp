#include "binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "rap/error.hpp"

namespace rap::io {
namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(raw[sizeof(T) - 1 - i]);
  } else {
    out.insert(out.end(), raw, raw + sizeof(T));
  }
}

template <typename T>
T get_le(const std::uint8_t* p) {
  std::uint8_t raw[sizeof(T)];
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T); ++i) raw[i] = p[sizeof(T) - 1 - i];
  } else {
    std::memcpy(raw, p, sizeof(T));
  }
  T value;
  std::memcpy(&value, raw, sizeof(T));
  return value;
}

}  // namespace

void ByteWriter::f64(double v) { put_le(bytes_, v); }
void ByteWriter::f64s(std::span<const double> v) {
  bytes_.reserve(bytes_.size() + v.size() * 8);
  for (double x : v) put_le(bytes_, x);
}
void ByteWriter::i64(std::int64_t v) { put_le(bytes_, v); }
void ByteWriter::u8(std::uint8_t v) { bytes_.push_back(v); }

void ByteReader::need(std::size_t n) const {
  if (remaining() < n) {
    throw FormatError(FormatError::Kind::kTruncated,
                      what_ + ": payload truncated at byte " + std::to_string(pos_) +
                          ", needed " + std::to_string(n) + " more");
  }
}

double ByteReader::f64() {
  need(8);
  const double v = get_le<double>(bytes_.data() + pos_);
  pos_ += 8;
  return v;
}

void ByteReader::f64s(std::span<double> out) {
  need(out.size() * 8);
  for (double& v : out) {
    v = get_le<double>(bytes_.data() + pos_);
    pos_ += 8;
  }
}

std::int64_t ByteReader::i64() {
  need(8);
  const std::int64_t v = get_le<std::int64_t>(bytes_.data() + pos_);
  pos_ += 8;
  return v;
}

std::uint8_t ByteReader::u8() {
  need(1);
  return bytes_[pos_++];
}

void write_container(const std::filesystem::path& path, const std::string& magic, int version,
                     const std::vector<std::string>& header_lines,
                     const std::vector<std::uint8_t>& payload) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << magic << ' ' << version << '\n';
  for (const auto& line : header_lines) out << line << '\n';
  out << "payload_bytes " << payload.size() << '\n';
  out << "end\n";
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<std::string> fields(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> out;
  std::string f;
  while (is >> f) out.push_back(f);
  return out;
}

Container read_container(const std::filesystem::path& path, const std::string& magic,
                         int version) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string name = path.string();
  const auto malformed = [&](const std::string& why) {
    return FormatError(FormatError::Kind::kMalformedHeader, name + ": malformed header: " + why);
  };

  std::string line;
  if (!std::getline(in, line)) throw malformed("empty file");
  const auto first = fields(line);
  if (first.size() != 2 || first[0] != magic) throw malformed("expected '" + magic + " <version>'");
  int found_version = 0;
  try {
    found_version = std::stoi(first[1]);
  } catch (const std::exception&) {
    throw malformed("bad version field '" + first[1] + "'");
  }
  if (found_version != version) {
    throw FormatError(FormatError::Kind::kVersionMismatch,
                      name + ": version " + std::to_string(found_version) + " is not supported (expected " +
                          std::to_string(version) + ")");
  }

  Container c;
  std::size_t payload_bytes = 0;
  bool have_size = false, ended = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      ended = true;
      break;
    }
    const auto f = fields(line);
    if (f.size() == 2 && f[0] == "payload_bytes") {
      try {
        payload_bytes = static_cast<std::size_t>(std::stoull(f[1]));
      } catch (const std::exception&) {
        throw malformed("bad payload_bytes");
      }
      have_size = true;
      continue;
    }
    c.header_lines.push_back(line);
  }
  if (!ended) throw malformed("missing 'end' line");
  if (!have_size) throw malformed("missing payload_bytes");

  c.payload.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  if (c.payload.size() < payload_bytes) {
    throw FormatError(FormatError::Kind::kTruncated,
                      name + ": truncated payload: expected " + std::to_string(payload_bytes) +
                          " bytes, found " + std::to_string(c.payload.size()));
  }
  if (c.payload.size() > payload_bytes) throw malformed("trailing bytes after payload");
  return c;
}

}  // namespace rap::io
