#include "concad/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "concad/features.hpp"
#include "text_util.hpp"

namespace concad {

std::string_view label_name(Label l) noexcept { return l == Label::apnea ? "apnea" : "normal"; }

Label label_from_index(int index) {
  if (index == 0) return Label::normal;
  if (index == 1) return Label::apnea;
  throw DataError("label index out of range: " + std::to_string(index));
}

void PrepConfig::validate() const {
  if (!(epoch_length_s > 0.0)) throw std::invalid_argument("prep: epoch_length_s must be positive");
  if (context < 0) throw std::invalid_argument("prep: context must be >= 0");
  if (resample_per_epoch == 0) throw std::invalid_argument("prep: resample_per_epoch must be positive");
  if (median_window == 0 || median_window % 2 == 0) throw std::invalid_argument("prep: median_window must be odd");
  if (!(min_hr_bpm >= 0.0) || !(max_hr_bpm > min_hr_bpm)) throw std::invalid_argument("prep: bad HR bounds");
  if (min_peaks < 4) throw std::invalid_argument("prep: min_peaks must be >= 4");
}

std::size_t PrepConfig::epoch_samples(double fs) const {
  const double exact = epoch_length_s * fs;
  const double rounded = std::round(exact);
  if (rounded < 1.0 || std::abs(exact - rounded) > 1e-6) {
    throw DataError("prep: epoch length " + detail::format_double(epoch_length_s) + " s is not a whole number of samples at " +
                    detail::format_double(fs) + " Hz");
  }
  return static_cast<std::size_t>(rounded);
}

std::string PrepConfig::to_text() const {
  std::ostringstream os;
  os << "epoch_length_s = " << detail::format_double(epoch_length_s) << '\n'
     << "context = " << context << '\n'
     << "resample_per_epoch = " << resample_per_epoch << '\n'
     << "median_window = " << median_window << '\n'
     << "min_hr_bpm = " << detail::format_double(min_hr_bpm) << '\n'
     << "max_hr_bpm = " << detail::format_double(max_hr_bpm) << '\n'
     << "min_peaks = " << min_peaks << '\n';
  return os.str();
}

Segmentation segment_with_context(const EcgRecord& record, const AnnotationSet& annotations,
                                  std::span<const std::size_t> peaks, const PrepConfig& config) {
  config.validate();
  record.validate();
  if (std::abs(annotations.epoch_length_s - config.epoch_length_s) > 1e-9) {
    throw std::invalid_argument("segment_with_context: annotation epoch length differs from the configured one");
  }
  const std::size_t eps = config.epoch_samples(record.fs);
  const auto total_epochs = static_cast<std::int64_t>(record.samples.size() / eps);
  const auto c = static_cast<std::int64_t>(config.context);
  const std::size_t per = config.resample_per_epoch;
  const double len_s = config.epoch_length_s;

  Segmentation out;
  for (const auto& el : annotations.labels) {
    const std::int64_t e = el.epoch_index;
    if (e < 0 || e >= total_epochs) {
      ++out.skipped_epochs;
      continue;
    }
    Segment seg;
    seg.bundle.label = el.label;
    seg.bundle.record_id = record.record_id;
    seg.bundle.epoch_index = e;

    const std::int64_t lo = std::max<std::int64_t>(0, e - c);
    const std::int64_t hi = std::min<std::int64_t>(total_epochs - 1, e + c);
    seg.bundle.ecg.reserve(config.window_epochs() * eps);
    std::vector<std::int64_t> window;
    for (std::int64_t d = -c; d <= c; ++d) {
      const std::int64_t q = std::clamp<std::int64_t>(e + d, lo, hi);
      window.push_back(q);
      const auto begin = record.samples.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(q) * eps);
      seg.bundle.ecg.insert(seg.bundle.ecg.end(), begin, begin + static_cast<std::ptrdiff_t>(eps));
    }

    const auto span_epochs = static_cast<std::size_t>(hi - lo + 1);
    const auto feats = derive_rri_rpe(record, peaks, static_cast<double>(lo) * len_s,
                                      static_cast<double>(hi + 1) * len_s, per * span_epochs, config.median_window);
    if (feats) {
      seg.features_valid = true;
      for (std::int64_t q : window) {
        const auto off = static_cast<std::ptrdiff_t>(static_cast<std::size_t>(q - lo) * per);
        const auto n = static_cast<std::ptrdiff_t>(per);
        seg.bundle.rri.insert(seg.bundle.rri.end(), feats->rri.begin() + off, feats->rri.begin() + off + n);
        seg.bundle.rpe.insert(seg.bundle.rpe.end(), feats->rpe.begin() + off, feats->rpe.begin() + off + n);
      }
    }

    const std::size_t c0 = static_cast<std::size_t>(e) * eps;
    const auto first = std::lower_bound(peaks.begin(), peaks.end(), c0);
    const auto last = std::lower_bound(first, peaks.end(), c0 + eps);
    seg.center_peaks = static_cast<std::size_t>(last - first);
    if (seg.center_peaks >= 2) {
      const double mean_rr = static_cast<double>(*(last - 1) - *first) / record.fs /
                             static_cast<double>(seg.center_peaks - 1);
      seg.mean_hr_bpm = 60.0 / mean_rr;
    } else {
      seg.mean_hr_bpm = std::numeric_limits<double>::quiet_NaN();
    }
    out.segments.push_back(std::move(seg));
  }
  return out;
}

Segmentation segment_with_context(const EcgRecord& record, const AnnotationSet& annotations,
                                  const PrepConfig& config) {
  const auto peaks = detect_r_peaks(record, config.qrs);
  return segment_with_context(record, annotations, peaks, config);
}

HrFilterResult filter_unreasonable_hr(std::vector<Segment> segments, const PrepConfig& config) {
  HrFilterResult out;
  for (auto& s : segments) {
    const bool ok = s.features_valid && s.center_peaks >= config.min_peaks && s.mean_hr_bpm >= config.min_hr_bpm &&
                    s.mean_hr_bpm <= config.max_hr_bpm;
    if (ok) {
      out.kept.push_back(std::move(s.bundle));
    } else {
      ++out.dropped;
    }
  }
  return out;
}

PreparedRecord prepare_record(const EcgRecord& record, const AnnotationSet& annotations,
                              const PrepConfig& config) {
  const auto peaks = detect_r_peaks(record, config.qrs);
  auto seg = segment_with_context(record, annotations, peaks, config);
  PreparedRecord out;
  out.labeled_epochs = seg.segments.size();
  out.skipped_epochs = seg.skipped_epochs;
  out.peaks = peaks.size();
  auto filtered = filter_unreasonable_hr(std::move(seg.segments), config);
  out.bundles = std::move(filtered.kept);
  out.dropped_hr = filtered.dropped;
  return out;
}

void AugmentationSpec::validate() const {
  if (!time_shift && !reverse) throw std::invalid_argument("augmentation: no op enabled");
  if (!(max_shift_fraction > 0.0) || max_shift_fraction > 1.0) {
    throw std::invalid_argument("augmentation: max_shift_fraction must be in (0, 1]");
  }
}

std::vector<AugmentOp> AugmentationSpec::enabled() const {
  std::vector<AugmentOp> ops;
  if (time_shift) ops.push_back(AugmentOp::time_shift);
  if (reverse) ops.push_back(AugmentOp::reverse);
  return ops;
}

std::vector<double> circular_shift(std::span<const double> x, std::size_t t) {
  const std::size_t n = x.size();
  std::vector<double> out(n);
  if (n == 0) return out;
  for (std::size_t i = 0; i < n; ++i) out[i] = x[(i + t) % n];
  return out;
}

SegmentBundle shift_bundle(const SegmentBundle& bundle, std::size_t t) {
  SegmentBundle out = bundle;
  const std::size_t n = bundle.ecg.size();
  out.ecg = circular_shift(bundle.ecg, t);
  auto scaled = [&](std::size_t len) {
    return n == 0 ? std::size_t{0}
                  : static_cast<std::size_t>(std::llround(static_cast<double>(t) * static_cast<double>(len) /
                                                          static_cast<double>(n)));
  };
  out.rri = circular_shift(bundle.rri, scaled(bundle.rri.size()));
  out.rpe = circular_shift(bundle.rpe, scaled(bundle.rpe.size()));
  return out;
}

SegmentBundle reverse_bundle(const SegmentBundle& bundle) {
  SegmentBundle out = bundle;
  std::reverse(out.ecg.begin(), out.ecg.end());
  std::reverse(out.rri.begin(), out.rri.end());
  std::reverse(out.rpe.begin(), out.rpe.end());
  return out;
}

SegmentBundle augment(const SegmentBundle& bundle, const AugmentationSpec& spec, RngStream& rng) {
  spec.validate();
  const auto ops = spec.enabled();
  const auto op = ops[static_cast<std::size_t>(rng.uniform_int(0, ops.size() - 1))];
  if (op == AugmentOp::reverse) return reverse_bundle(bundle);
  const auto max_t = std::max<std::uint64_t>(
      1, static_cast<std::uint64_t>(std::floor(spec.max_shift_fraction * static_cast<double>(bundle.ecg.size()))));
  return shift_bundle(bundle, static_cast<std::size_t>(rng.uniform_int(1, max_t)));
}

}  // namespace concad
