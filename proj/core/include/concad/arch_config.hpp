#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace concad {

/// ConvBlock(filters, kernel, stride) followed by optional MaxPool and Dropout.
struct ConvBlockSpec {
  std::size_t filters = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t pool = 0;  // 0: no pooling
  double dropout = 0.0;  // 0: no dropout

  bool has_pool() const noexcept { return pool > 0; }
  bool has_dropout() const noexcept { return dropout > 0.0; }
  bool operator==(const ConvBlockSpec&) const = default;
};

/// Ordered block list written in the
///   ConvBlock(64,100,20)-MaxPool(2)-Dropout(0.5)-ConvBlock(64,8,4)-...
/// notation. MaxPool and Dropout attach to the preceding ConvBlock.
struct ExtractorSpec {
  std::vector<ConvBlockSpec> blocks;

  static ExtractorSpec parse(std::string_view text);
  std::string to_string() const;
  /// Throws std::invalid_argument when the block list is empty, a block is
  /// malformed or the final block carries pooling/dropout.
  void validate() const;

  /// (time steps m, channels n) of the extractor output for an input of
  /// `time` samples. Throws std::invalid_argument naming the block at which
  /// the time axis is exhausted.
  std::pair<std::size_t, std::size_t> output_shape(std::size_t time) const;

  bool operator==(const ExtractorSpec&) const = default;
};

/// Input time lengths for the three modalities.
struct InputDims {
  std::size_t ecg = 0;
  std::size_t rri = 0;
  std::size_t rpe = 0;

  bool operator==(const InputDims&) const = default;
};

/// Complete network architecture. Text form (one `key = value` per line,
/// '#' starts a comment):
///
///   ecg = ConvBlock(64,100,20)-MaxPool(2)-Dropout(0.5)-...
///   rri = ConvBlock(64,8,4)-MaxPool(2)-Dropout(0.5)-...
///   rpe = ConvBlock(64,8,4)-MaxPool(2)-Dropout(0.5)-...
///   k = 64
///   proj_dim = 32
///   clf_hidden = 64          (comma-separated widths; may be empty)
struct ArchConfig {
  ExtractorSpec ecg;
  ExtractorSpec rri;
  ExtractorSpec rpe;
  std::size_t k = 64;
  std::size_t proj_dim = 32;
  std::vector<std::size_t> clf_hidden{64};

  static ArchConfig parse(std::string_view text);
  static ArchConfig load(const std::filesystem::path& path);
  std::string to_text() const;
  void validate() const;

  bool operator==(const ArchConfig&) const = default;
};

}  // namespace concad
