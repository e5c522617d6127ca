#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "concad/segment.hpp"

namespace concad {

/// Output of `prepare`: bundles plus the counts and configuration that produced them.
struct PreparedDataset {
  static constexpr std::uint32_t kVersion = 1;

  double fs = 0.0;
  double epoch_length_s = 60.0;
  int context = 0;
  std::size_t resample_per_epoch = 180;
  /// Free-form `key = value` echo of the preparation settings.
  std::string config_text;

  std::size_t records = 0;
  std::size_t labeled_epochs = 0;
  std::size_t skipped_epochs = 0;
  std::size_t dropped_hr = 0;
  std::vector<SegmentBundle> bundles;

  std::size_t ecg_length() const;
  std::size_t feature_length() const { return resample_per_epoch * (2 * static_cast<std::size_t>(context) + 1); }
  /// Throws DataError if any bundle's array lengths disagree with the header.
  void validate() const;
  std::size_t count(Label label) const;
};

void write_prepared_dataset(const std::filesystem::path& path, const PreparedDataset& dataset);
PreparedDataset read_prepared_dataset(const std::filesystem::path& path);

}  // namespace concad
