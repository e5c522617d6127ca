#include "concad/qrs_detector.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>

#include "concad/tensor.hpp"

namespace concad {

namespace {

struct Biquad {
  double b0, b1, b2, a1, a2;  // normalized by a0

  std::vector<double> apply(std::span<const double> x) const {
    std::vector<double> y(x.size());
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
    for (std::size_t n = 0; n < x.size(); ++n) {
      const double v = b0 * x[n] + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
      x2 = x1;
      x1 = x[n];
      y2 = y1;
      y1 = v;
      y[n] = v;
    }
    return y;
  }
};

// Second-order Butterworth sections (Q = 1/sqrt(2)) via the bilinear transform.
Biquad butter_section(double cutoff_hz, double fs, bool highpass) {
  const double w0 = 2.0 * std::numbers::pi * cutoff_hz / fs;
  const double c = std::cos(w0);
  const double alpha = std::sin(w0) / (2.0 * std::numbers::sqrt2 / 2.0);
  const double a0 = 1.0 + alpha;
  Biquad q{};
  if (highpass) {
    q.b0 = (1.0 + c) / 2.0 / a0;
    q.b1 = -(1.0 + c) / a0;
  } else {
    q.b0 = (1.0 - c) / 2.0 / a0;
    q.b1 = (1.0 - c) / a0;
  }
  q.b2 = q.b0;
  q.a1 = -2.0 * c / a0;
  q.a2 = (1.0 - alpha) / a0;
  return q;
}

double median_of(std::array<double, 8> v, std::size_t count) {
  std::sort(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(count));
  if (count == 0) return 0.0;
  return count % 2 ? v[count / 2] : 0.5 * (v[count / 2 - 1] + v[count / 2]);
}

// Fixed-size history of the eight most recent values.
struct History {
  std::array<double, 8> values{};
  std::size_t count = 0;

  void push(double v) {
    std::rotate(values.rbegin(), values.rbegin() + 1, values.rend());
    values[0] = v;
    count = std::min<std::size_t>(count + 1, 8);
  }
  void reset(double v, std::size_t n) {
    values.fill(v);
    count = n;
  }
  double median() const { return median_of(values, count == 0 ? 8 : count); }
};

struct Candidate {
  std::size_t pos;
  double height;
};

}  // namespace

std::vector<double> bandpass_filter(std::span<const double> x, double fs, double low_hz, double high_hz) {
  if (!(low_hz > 0.0) || !(high_hz > low_hz) || !(high_hz < fs / 2.0)) {
    throw std::invalid_argument("bandpass_filter: need 0 < low < high < fs/2");
  }
  if (x.empty()) return {};
  const Biquad hp = butter_section(low_hz, fs, true);
  const Biquad lp = butter_section(high_hz, fs, false);

  // Odd reflection at both ends to limit start-up transients.
  const std::size_t pad = std::min<std::size_t>(x.size() - 1, static_cast<std::size_t>(std::ceil(fs)));
  std::vector<double> ext;
  ext.reserve(x.size() + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x.front() - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x.back() - x[x.size() - 1 - i]);

  auto y = lp.apply(hp.apply(ext));
  std::reverse(y.begin(), y.end());
  y = lp.apply(hp.apply(y));
  std::reverse(y.begin(), y.end());
  return std::vector<double>(y.begin() + static_cast<std::ptrdiff_t>(pad),
                             y.begin() + static_cast<std::ptrdiff_t>(pad + x.size()));
}

std::vector<double> moving_average(std::span<const double> x, std::size_t window) {
  if (window == 0) throw std::invalid_argument("moving_average: window must be >= 1");
  const std::size_t n = x.size();
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
  std::vector<double> y(n);
  const std::size_t half = window / 2;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n, i + window - half);
    y[i] = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
  }
  return y;
}

std::vector<std::size_t> detect_r_peaks(const EcgRecord& record, const QrsDetectorConfig& cfg) {
  record.validate();
  const double fs = record.fs;
  if (record.duration_s() < cfg.min_duration_s) {
    throw DataError("detect_r_peaks: record " + record.record_id + " shorter than " +
                    std::to_string(cfg.min_duration_s) + " s");
  }
  if (!(fs > 2.0 * cfg.band_high_hz)) throw DataError("detect_r_peaks: sampling rate too low for the band-pass");

  const std::span<const double> raw = record.samples;
  const std::size_t n = raw.size();
  const auto band = bandpass_filter(raw, fs, cfg.band_low_hz, cfg.band_high_hz);

  std::vector<double> slope(n, 0.0);
  for (std::size_t i = 1; i + 1 < n; ++i) slope[i] = std::abs(band[i + 1] - band[i - 1]) / 2.0;
  const auto window = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(cfg.integration_window_s * fs)));
  const auto integrated = moving_average(slope, window);

  const auto refractory = static_cast<std::size_t>(std::lround(cfg.refractory_s * fs));
  const auto t_window = static_cast<std::size_t>(std::lround(cfg.t_wave_window_s * fs));
  const auto one_second = static_cast<std::size_t>(std::lround(fs));

  // Local maxima of the integrated signal; within the refractory period only the
  // larger one survives (there can be only one QRS per 200 ms).
  std::vector<Candidate> cands;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double v = integrated[i];
    if (!(v > 0.0) || !(v > integrated[i - 1]) || v < integrated[i + 1]) continue;
    if (!cands.empty() && i - cands.back().pos < refractory) {
      if (v > cands.back().height) cands.back() = {i, v};
      continue;
    }
    cands.push_back({i, v});
  }

  auto max_in = [&](std::size_t lo, std::size_t hi) {
    double m = 0.0;
    for (std::size_t i = lo; i < std::min(hi, n); ++i) m = std::max(m, integrated[i]);
    return m;
  };
  auto max_slope_near = [&](std::size_t pos) {
    const std::size_t lo = pos >= window ? pos - window : 0;
    double m = 0.0;
    for (std::size_t i = lo; i < std::min(n, pos + window + 1); ++i) m = std::max(m, slope[i]);
    return m;
  };

  History qrs, noise, rr;
  auto init_from_window = [&](std::size_t end) {
    // Peak estimates from the eight one-second windows ending at `end`.
    const std::size_t seconds = std::min<std::size_t>(8, std::max<std::size_t>(1, end / one_second));
    qrs.count = 0;
    for (std::size_t s = seconds; s >= 1; --s) {
      const std::size_t lo = end >= s * one_second ? end - s * one_second : 0;
      qrs.push(max_in(lo, lo + one_second));
    }
    noise.reset(0.0, 8);
  };
  init_from_window(std::min(n, 8 * one_second));
  rr.reset(static_cast<double>(one_second), 8);

  auto threshold = [&]() {
    const double q = qrs.median(), nz = noise.median();
    return nz + cfg.threshold_coeff * (q - nz);
  };

  std::vector<std::size_t> detections;
  std::optional<Candidate> searchback;
  double last_slope = 0.0;
  bool have_last = false;
  std::size_t last_pos = 0;

  auto accept = [&](const Candidate& c) {
    qrs.push(c.height);
    if (have_last) rr.push(static_cast<double>(c.pos - last_pos));
    detections.push_back(c.pos);
    last_slope = max_slope_near(c.pos);
    last_pos = c.pos;
    have_last = true;
    searchback.reset();
  };
  auto try_searchback = [&](std::size_t now) {
    if (!have_last || !searchback) return;
    const double limit = cfg.searchback_factor * rr.median();
    if (static_cast<double>(now - last_pos) > limit && searchback->height > threshold() / 2.0) accept(*searchback);
  };

  for (const auto& c : cands) {
    try_searchback(c.pos);
    const std::size_t since = have_last ? c.pos - last_pos : c.pos;
    if (since > 8 * one_second) {
      // Eight seconds without a detection: re-estimate the threshold.
      init_from_window(c.pos);
      searchback.reset();
    }
    bool is_qrs = c.height > threshold() && (!have_last || c.pos - last_pos >= refractory);
    if (is_qrs && have_last && c.pos - last_pos < t_window && max_slope_near(c.pos) < 0.5 * last_slope) {
      is_qrs = false;  // T wave
    }
    if (is_qrs) {
      accept(c);
    } else {
      noise.push(c.height);
      if ((!have_last || c.pos - last_pos >= t_window) && (!searchback || c.height > searchback->height)) {
        searchback = c;
      }
    }
  }
  try_searchback(n);

  // Place each R peak at the raw maximum near the detection.
  const auto half = static_cast<std::size_t>(std::lround(cfg.localize_window_s * fs));
  std::vector<std::size_t> peaks;
  for (std::size_t d : detections) {
    const std::size_t lo = d >= half ? d - half : 0;
    const std::size_t hi = std::min(n - 1, d + half);
    std::size_t best = lo;
    for (std::size_t i = lo + 1; i <= hi; ++i)
      if (raw[i] > raw[best]) best = i;
    if (!peaks.empty() && best <= peaks.back()) continue;
    if (!peaks.empty() && best - peaks.back() < refractory) {
      if (raw[best] > raw[peaks.back()]) peaks.back() = best;
      continue;
    }
    peaks.push_back(best);
  }
  return peaks;
}

}  // namespace concad
