#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "wave/tensor.hpp"

namespace wave {

// WAVELGN1 container layout (all integers little-endian):
//
//   "WAVELGN1"                 8-byte magic
//   u64 metadata length
//   metadata                   UTF-8 JSON; carries "format_version" and a
//                              "manifest" of {name, rows, cols} entries
//   payload                    f32 IEEE values, tensors in manifest order,
//                              each row-major
//   u32 CRC-32 of the payload
//
// Values are stored at 32-bit precision; callers that need bit-exact round
// trips keep their parameters f32-representable (see round_to_f32).
inline constexpr char kContainerMagic[8] = {'W', 'A', 'V', 'E', 'L', 'G', 'N', '1'};
inline constexpr int kFormatVersion = 1;

struct NamedTensor {
  std::string name;
  Matrix value;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

struct Container {
  nlohmann::json meta;  // user metadata; manifest and format_version are managed here
  std::vector<NamedTensor> tensors;
};

std::vector<std::uint8_t> encode_container(const Container& c);
Container decode_container(std::span<const std::uint8_t> bytes);

// Atomic: writes a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

void write_container(const std::filesystem::path& path, const Container& c);
Container read_container(const std::filesystem::path& path);

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

inline constexpr const char* kHashAlgorithm = "sha256";
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace wave
