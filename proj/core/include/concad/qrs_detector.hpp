#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "concad/wfdb.hpp"

namespace concad {

/// Offline Hamilton-style QRS detector settings.
struct QrsDetectorConfig {
  double band_low_hz = 8.0;
  double band_high_hz = 16.0;
  double integration_window_s = 0.08;
  double refractory_s = 0.2;
  /// Detection threshold = noise + coeff * (qrs - noise), using medians of the
  /// last eight QRS and noise peak heights.
  double threshold_coeff = 0.475;
  /// Search back once this many median RR intervals pass without a detection.
  double searchback_factor = 1.5;
  /// Peaks closer than this to the previous QRS are checked for T-wave slope.
  double t_wave_window_s = 0.36;
  /// Half-width of the raw-signal window used to place the R peak.
  double localize_window_s = 0.1;
  double min_duration_s = 2.0;
};

/// Sample indices of R peaks, strictly increasing with gaps of at least the
/// refractory period. Pipeline: zero-phase 8-16 Hz band-pass, derivative,
/// rectification, 80 ms moving average, adaptive peak/noise thresholding with
/// searchback, then R placement at the raw maximum near each detection.
std::vector<std::size_t> detect_r_peaks(const EcgRecord& record, const QrsDetectorConfig& config = {});

/// Zero-phase (forward-backward) Butterworth band-pass built from second-order
/// high-pass and low-pass sections.
std::vector<double> bandpass_filter(std::span<const double> x, double fs, double low_hz, double high_hz);

/// Centered moving average of width `window` samples (edges use the available part).
std::vector<double> moving_average(std::span<const double> x, std::size_t window);

}  // namespace concad
