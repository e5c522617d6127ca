#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "concad/qrs_detector.hpp"
#include "concad/rng.hpp"
#include "concad/segment.hpp"
#include "concad/wfdb.hpp"

namespace concad {

struct PrepConfig {
  double epoch_length_s = 60.0;
  /// Neighbor epochs on each side of the labeled one.
  int context = 0;
  std::size_t resample_per_epoch = 180;
  std::size_t median_window = 5;
  double min_hr_bpm = 20.0;
  double max_hr_bpm = 300.0;
  std::size_t min_peaks = 4;
  QrsDetectorConfig qrs;

  void validate() const;
  std::size_t window_epochs() const { return 2 * static_cast<std::size_t>(context) + 1; }
  std::size_t feature_length() const { return resample_per_epoch * window_epochs(); }
  /// Samples per epoch at `fs`; throws DataError if epoch_length_s * fs is not integral.
  std::size_t epoch_samples(double fs) const;
  std::string to_text() const;
};

/// A bundle before HR filtering, with the statistics the filter needs.
struct Segment {
  SegmentBundle bundle;
  std::size_t center_peaks = 0;
  /// 60 / mean RR over the center epoch; NaN with fewer than two peaks.
  double mean_hr_bpm = 0.0;
  /// False when RRI/RPE could not be derived (too few peaks); rri/rpe are then empty.
  bool features_valid = false;
};

struct Segmentation {
  std::vector<Segment> segments;
  /// Labeled epochs that lie beyond the end of the record.
  std::size_t skipped_epochs = 0;
};

/// One segment per labeled epoch. Neighbor epochs missing at the record edges
/// are replaced by the nearest available epoch. RRI/RPE are computed over the
/// contiguous span of real epochs and then laid out per window epoch.
Segmentation segment_with_context(const EcgRecord& record, const AnnotationSet& annotations,
                                  std::span<const std::size_t> peaks, const PrepConfig& config);
/// Runs the QRS detector first.
Segmentation segment_with_context(const EcgRecord& record, const AnnotationSet& annotations,
                                  const PrepConfig& config);

struct HrFilterResult {
  std::vector<SegmentBundle> kept;
  std::size_t dropped = 0;
};

/// Drops segments whose center epoch has fewer than min_peaks peaks, invalid
/// features, or a mean heart rate outside [min_hr_bpm, max_hr_bpm].
HrFilterResult filter_unreasonable_hr(std::vector<Segment> segments, const PrepConfig& config);

struct PreparedRecord {
  std::vector<SegmentBundle> bundles;
  std::size_t labeled_epochs = 0;
  std::size_t skipped_epochs = 0;
  std::size_t dropped_hr = 0;
  std::size_t peaks = 0;
};

PreparedRecord prepare_record(const EcgRecord& record, const AnnotationSet& annotations,
                              const PrepConfig& config);

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

enum class AugmentOp { time_shift, reverse };

struct AugmentationSpec {
  bool time_shift = true;
  bool reverse = true;
  double max_shift_fraction = 0.1;

  void validate() const;
  std::vector<AugmentOp> enabled() const;
};

/// out[i] = x[(i + t) mod n].
std::vector<double> circular_shift(std::span<const double> x, std::size_t t);

/// Shifts ECG by t samples and RRI/RPE by the same fraction of their length.
SegmentBundle shift_bundle(const SegmentBundle& bundle, std::size_t t);
SegmentBundle reverse_bundle(const SegmentBundle& bundle);

/// Applies one op drawn uniformly from the enabled set. The ECG shift is
/// t ~ U{1..max(1, floor(max_shift_fraction * len))}.
SegmentBundle augment(const SegmentBundle& bundle, const AugmentationSpec& spec, RngStream& rng);

}  // namespace concad
