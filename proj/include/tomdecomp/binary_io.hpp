#pragma once

// Little-endian primitives shared by every on-disk format in the toolkit
// (ACTV1 datasets, probe and steering blobs, toy-model checkpoints).

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "tomdecomp/core.hpp"

namespace tomdecomp::binio {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint64_t get_u64(const unsigned char* p) {
  return static_cast<std::uint64_t>(get_u32(p)) | (static_cast<std::uint64_t>(get_u32(p + 4)) << 32);
}

inline float get_f32(const unsigned char* p) { return std::bit_cast<float>(get_u32(p)); }

inline std::string read_file(const std::filesystem::path& path, const char* module) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(module, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes, const char* module) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(module, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(module, "write failed for " + path.string());
}

/// Raw float32 blob: no header, `values.size()` little-endian floats.
inline std::string encode_f32(std::span<const double> values) {
  std::string out;
  out.reserve(values.size() * 4);
  for (double v : values) put_f32(out, static_cast<float>(v));
  return out;
}

inline Vector decode_f32(std::string_view bytes, std::size_t expected, const char* module) {
  if (bytes.size() != expected * 4)
    throw Error(module, "blob holds " + std::to_string(bytes.size()) + " bytes, expected " +
                            std::to_string(expected * 4));
  Vector out(expected);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t i = 0; i < expected; ++i) out[i] = get_f32(p + 4 * i);
  return out;
}

}  // namespace tomdecomp::binio
