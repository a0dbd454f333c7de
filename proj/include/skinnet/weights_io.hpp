#pragma once

// Portable weight archive.
//
// Layout (all integers little-endian):
//   bytes 0..3   magic "DWT1"
//   bytes 4..11  u64 manifest length M
//   next M bytes UTF-8 JSON manifest {"version", "tensors", "metadata"}
//   remainder    blob of IEEE-754 binary32 values, little-endian
//
// Each manifest tensor carries {"name", "shape", "offset", "length", "crc32"}
// with offset/length in bytes relative to the blob start and the CRC-32
// (zlib polynomial) of those bytes. Conv kernels are [out, in, 3, 3] and
// dense weights [out, in], row-major. Tensor order follows the layer list.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "skinnet/network.hpp"

namespace skinnet {

inline constexpr int kArchiveVersion = 1;

struct ArchiveMetadata {
  std::string normalization = "scale01";
  std::vector<std::string> class_names;
  std::size_t input_size = 150;
  std::size_t width_divisor = 1;
  std::size_t num_classes = 0;  // taken from the graph on save
};

struct ManifestEntry {
  std::string name;
  Shape shape;
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
  std::uint32_t crc32 = 0;
};

struct WeightArchive {
  int version = kArchiveVersion;
  std::vector<ManifestEntry> tensors;
  ArchiveMetadata metadata;
  std::vector<std::uint8_t> blob;

  /// Decoded values of one tensor; throws kArchive if absent.
  Tensor tensor(const std::string& name) const;
  const ManifestEntry* find(const std::string& name) const;
};

enum class LoadScope { kBaseOnly, kAll };

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t size);

std::vector<std::uint8_t> encode_archive(const NetworkGraph<float>& graph, const ArchiveMetadata& metadata);
/// Parses and validates bounds and checksums.
WeightArchive decode_archive(const std::vector<std::uint8_t>& bytes);

/// Writes to a temporary sibling and renames it into place.
void save_weights(const NetworkGraph<float>& graph, const std::filesystem::path& path, const ArchiveMetadata& metadata);
WeightArchive read_archive(const std::filesystem::path& path);

/// Assigns archive tensors to the graph. base_only touches block*_conv*
/// tensors only. Either every tensor in scope is assigned or, on any error,
/// none is.
void load_weights(const WeightArchive& archive, NetworkGraph<float>& graph, LoadScope scope);
void load_weights(const std::filesystem::path& path, NetworkGraph<float>& graph, LoadScope scope);

/// Architecture recorded in an archive's metadata.
ArchConfig arch_from_metadata(const ArchiveMetadata& metadata);

}  // namespace skinnet
