#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace concad {

/// Binary per-epoch class. The numeric value is the classifier output index.
enum class Label : int { normal = 0, apnea = 1 };

constexpr int class_index(Label l) noexcept { return static_cast<int>(l); }
std::string_view label_name(Label l) noexcept;
Label label_from_index(int index);

/// One labeled training instance: the ECG window around an epoch plus the
/// resampled R-R interval (seconds) and R-peak amplitude series.
struct SegmentBundle {
  Label label = Label::normal;
  std::vector<double> ecg;
  std::vector<double> rri;
  std::vector<double> rpe;
  std::string record_id;
  std::int64_t epoch_index = 0;

  bool operator==(const SegmentBundle&) const = default;
};

}  // namespace concad
