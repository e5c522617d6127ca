#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "concad/tensor.hpp"

namespace concad {

/// Parameter checkpoint: an ordered list of named tensors plus free-form
/// metadata text. Layout (all integers little-endian, see docs/formats.md):
///
///   "CONCADCK"                    8-byte magic
///   u32 version                   Checkpoint::kVersion
///   u32 len, bytes                metadata (UTF-8, key = value lines)
///   u32 count
///   count x { u32 len, name bytes, u32 rank, rank x u64 extent,
///             product(extents) x f64 IEEE-754 }
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  struct Entry {
    std::string name;
    Tensor tensor;
  };

  std::uint32_t version = kVersion;
  std::string metadata;
  std::vector<Entry> tensors;

  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace concad
