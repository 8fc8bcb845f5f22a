#pragma once

#include "patchgen/core/point_cloud.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace patchgen::io {

// PCPF: "PCPF", u8 version (1), u32 count, count * (f32 x, f32 y, f32 z); little-endian.
inline constexpr char kCloudMagic[4] = {'P', 'C', 'P', 'F'};
inline constexpr std::uint8_t kCloudVersion = 1;
// PGID: "PGID", u32 count, count * u16.
inline constexpr char kPatchIdMagic[4] = {'P', 'G', 'I', 'D'};
// PGEM: "PGEM", u32 dim, dim * f32.
inline constexpr char kEmbeddingMagic[4] = {'P', 'G', 'E', 'M'};

enum class CloudFormat { binary, text };

/// `.pcpf` and `.bin` select the binary format; anything else is text.
CloudFormat format_for_path(const std::filesystem::path& path);

/// Coordinates are stored as f32, so a round trip is exact for clouds whose
/// values are already f32-representable (see PointCloud::rounded_to_f32).
std::vector<std::uint8_t> encode_cloud(const PointCloud& cloud);
PointCloud decode_cloud(std::span<const std::uint8_t> bytes);

std::string format_cloud_text(const PointCloud& cloud);
PointCloud parse_cloud_text(const std::string& text);

void write_cloud(const std::filesystem::path& path, const PointCloud& cloud);
void write_cloud(const std::filesystem::path& path, const PointCloud& cloud, CloudFormat format);
PointCloud read_cloud(const std::filesystem::path& path);
PointCloud read_cloud(const std::filesystem::path& path, CloudFormat format);

void write_patch_ids(const std::filesystem::path& path, std::span<const std::uint16_t> ids);
std::vector<std::uint16_t> read_patch_ids(const std::filesystem::path& path);

void write_embedding(const std::filesystem::path& path, std::span<const float> values);
std::vector<float> read_embedding(const std::filesystem::path& path);

/// OFF or OBJ by extension; only vertices and triangular faces are read.
TriangleMesh read_mesh(const std::filesystem::path& path);
TriangleMesh parse_off(const std::string& text);
TriangleMesh parse_obj(const std::string& text);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Sorted list of regular files in `dir` with the given extension.
std::vector<std::filesystem::path> list_files(const std::filesystem::path& dir, const std::string& extension);

// Little-endian primitives shared by the binary formats.
void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v);
void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v);
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v);
void put_f32(std::vector<std::uint8_t>& out, float v);

/// Bounds-checked little-endian reader; errors name the byte offset.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  std::span<const std::uint8_t> take(std::size_t n);
  void expect_magic(const char (&magic)[4]);

  std::size_t offset() const { return offset_; }
  std::size_t remaining() const { return bytes_.size() - offset_; }

 private:
  void need(std::size_t n) const;

  std::span<const std::uint8_t> bytes_;
  std::size_t offset_ = 0;
};

}  // namespace patchgen::io
