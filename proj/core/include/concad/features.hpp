#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "concad/wfdb.hpp"

namespace concad {

/// Running median of odd width; the signal is extended by repeating its end values.
std::vector<double> median_filter(std::span<const double> x, std::size_t window);

/// Not-a-knot cubic spline through strictly increasing knots (at least four).
/// Evaluation outside [x.front(), x.back()] returns the nearest end value.
class CubicSpline {
 public:
  CubicSpline(std::vector<double> x, std::vector<double> y);

  double operator()(double t) const;
  std::size_t knots() const noexcept { return x_.size(); }

 private:
  std::vector<double> x_, y_, m_;  // m_: second derivatives at the knots
};

/// Evaluates a spline through (x, y) on `count` points t_j = t0 + j * (t1 - t0) / count.
std::vector<double> cubic_resample(std::span<const double> x, std::span<const double> y, double t0, double t1,
                                   std::size_t count);

/// R-R intervals in seconds between consecutive peaks.
std::vector<double> rr_intervals(std::span<const std::size_t> peaks, double fs);

struct RriRpe {
  std::vector<double> rri;
  std::vector<double> rpe;
};

/// RRI and RPE series over the window [t0, t1) seconds, resampled to
/// `resample_len` points.
///
/// Uses the peaks inside the window, the nearest peak after it and the two
/// nearest before it, so both series have knots on either side of the window.
/// Each interval is placed at the time of its later peak; amplitudes are the
/// raw samples at the peaks. Both series are median-filtered before
/// interpolation, and resampled values are clipped to the range of the knots
/// they were built from.
///
/// Returns nullopt when fewer than four peaks fall in the window or fewer than
/// four interval knots are available.
std::optional<RriRpe> derive_rri_rpe(const EcgRecord& record, std::span<const std::size_t> peaks, double t0,
                                     double t1, std::size_t resample_len, std::size_t median_window = 5);

}  // namespace concad
