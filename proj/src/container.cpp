#include "wave/container.hpp"

#include <openssl/evp.h>
#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "wave/error.hpp"

namespace wave {

namespace {

static_assert(std::endian::native == std::endian::little, "container I/O assumes little-endian");

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - off, 1u << 30);
    crc = crc32(crc, bytes.data() + off, static_cast<uInt>(n));
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> encode_container(const Container& c) {
  nlohmann::json meta = c.meta.is_null() ? nlohmann::json::object() : c.meta;
  meta["format_version"] = kFormatVersion;
  nlohmann::json manifest = nlohmann::json::array();
  std::size_t values = 0;
  for (const auto& t : c.tensors) {
    manifest.push_back({{"name", t.name}, {"rows", t.value.rows()}, {"cols", t.value.cols()}});
    values += t.value.size();
  }
  meta["manifest"] = std::move(manifest);
  const std::string text = meta.dump();

  std::vector<std::uint8_t> out;
  out.reserve(8 + 8 + text.size() + 4 * values + 4);
  out.insert(out.end(), std::begin(kContainerMagic), std::end(kContainerMagic));
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  const std::size_t payload_start = out.size();
  for (const auto& t : c.tensors) {
    for (double v : t.value.data()) {
      const float f = static_cast<float>(v);
      put_u32(out, std::bit_cast<std::uint32_t>(f));
    }
  }
  const std::uint32_t crc =
      crc32_of(std::span(out).subspan(payload_start, out.size() - payload_start));
  put_u32(out, crc);
  return out;
}

Container decode_container(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kContainerMagic, 8) != 0) {
    throw FormatError(FormatErrorKind::bad_magic, "not a WAVELGN1 container (bad magic)");
  }
  if (bytes.size() < 16) throw FormatError(FormatErrorKind::truncated, "truncated header");
  const std::uint64_t meta_len = get_u64(bytes.data() + 8);
  if (meta_len > bytes.size() - 16) {
    throw FormatError(FormatErrorKind::truncated, "truncated metadata block");
  }
  Container c;
  try {
    c.meta = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<long>(meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatErrorKind::malformed, std::string("metadata is not valid JSON: ") + e.what());
  }
  if (!c.meta.is_object() || !c.meta.contains("format_version") ||
      !c.meta["format_version"].is_number_integer()) {
    throw FormatError(FormatErrorKind::malformed, "metadata lacks format_version");
  }
  const int version = c.meta["format_version"].get<int>();
  if (version != kFormatVersion) {
    throw FormatError(FormatErrorKind::version, "unsupported container version " +
                                                    std::to_string(version) + " (expected " +
                                                    std::to_string(kFormatVersion) + ")");
  }
  if (!c.meta.contains("manifest") || !c.meta["manifest"].is_array()) {
    throw FormatError(FormatErrorKind::malformed, "metadata lacks a manifest");
  }

  std::size_t values = 0;
  std::vector<std::tuple<std::string, std::size_t, std::size_t>> entries;
  try {
    for (const auto& e : c.meta["manifest"]) {
      const auto rows = e.at("rows").get<std::size_t>();
      const auto cols = e.at("cols").get<std::size_t>();
      if (rows == 0 || cols == 0 || rows > (1u << 24) || cols > (1u << 24)) {
        throw FormatError(FormatErrorKind::malformed, "manifest entry with invalid shape");
      }
      entries.emplace_back(e.at("name").get<std::string>(), rows, cols);
      values += rows * cols;
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatErrorKind::malformed, std::string("bad manifest: ") + e.what());
  }

  const std::size_t payload_start = 16 + meta_len;
  const std::size_t available = bytes.size() - payload_start;
  if (values > available / 4 || available - 4 * values < 4) {
    throw FormatError(FormatErrorKind::truncated, "payload is truncated: manifest declares " +
                                                      std::to_string(values) + " values");
  }
  if (available - 4 * values != 4) {
    throw FormatError(FormatErrorKind::malformed, "trailing bytes after checksum");
  }
  const auto payload = bytes.subspan(payload_start, 4 * values);
  const std::uint32_t stored = get_u32(bytes.data() + payload_start + 4 * values);
  if (crc32_of(payload) != stored) {
    throw FormatError(FormatErrorKind::checksum, "payload checksum mismatch");
  }

  const std::uint8_t* p = payload.data();
  for (auto& [name, rows, cols] : entries) {
    std::vector<double> data(rows * cols);
    for (double& v : data) {
      v = static_cast<double>(std::bit_cast<float>(get_u32(p)));
      p += 4;
    }
    c.tensors.push_back({name, Matrix(rows, cols, std::move(data))});
  }
  c.meta.erase("manifest");
  c.meta.erase("format_version");
  return c;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_container(const std::filesystem::path& path, const Container& c) {
  write_file_atomic(path, encode_container(c));
}

Container read_container(const std::filesystem::path& path) { return decode_container(read_file(path)); }

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) {
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return os.str();
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

}  // namespace wave
