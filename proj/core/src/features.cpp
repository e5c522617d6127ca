#include "concad/features.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "concad/tensor.hpp"

namespace concad {

std::vector<double> median_filter(std::span<const double> x, std::size_t window) {
  if (window == 0 || window % 2 == 0) throw std::invalid_argument("median_filter: window must be odd");
  const std::size_t n = x.size();
  if (n == 0) return {};
  const auto half = static_cast<std::ptrdiff_t>(window / 2);
  std::vector<double> out(n), buf(window);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::ptrdiff_t d = -half; d <= half; ++d) {
      const auto j = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(i) + d, 0,
                                                static_cast<std::ptrdiff_t>(n) - 1);
      buf[static_cast<std::size_t>(d + half)] = x[static_cast<std::size_t>(j)];
    }
    std::nth_element(buf.begin(), buf.begin() + half, buf.end());
    out[i] = buf[static_cast<std::size_t>(half)];
  }
  return out;
}

CubicSpline::CubicSpline(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
  const std::size_t n = x_.size();
  if (n != y_.size()) throw std::invalid_argument("CubicSpline: x and y differ in length");
  if (n < 4) throw std::invalid_argument("CubicSpline: need at least 4 knots");
  for (std::size_t i = 1; i < n; ++i) {
    if (!(x_[i] > x_[i - 1])) throw std::invalid_argument("CubicSpline: knots must be strictly increasing");
  }

  std::vector<double> h(n - 1), d(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = x_[i + 1] - x_[i];
    d[i] = (y_[i + 1] - y_[i]) / h[i];
  }

  // Unknowns m_1..m_{n-2}; not-a-knot eliminates m_0 and m_{n-1}:
  //   m_0 = ((h0 + h1) m_1 - h0 m_2) / h1, and symmetrically at the right end.
  const std::size_t k = n - 2;
  std::vector<double> sub(k, 0.0), diag(k, 0.0), sup(k, 0.0), rhs(k, 0.0);
  for (std::size_t r = 0; r < k; ++r) {
    const std::size_t i = r + 1;
    sub[r] = h[i - 1];
    diag[r] = 2.0 * (h[i - 1] + h[i]);
    sup[r] = h[i];
    rhs[r] = 6.0 * (d[i] - d[i - 1]);
  }
  const double h0 = h[0], h1 = h[1];
  diag[0] += h0 * (h0 + h1) / h1;
  sup[0] -= h0 * h0 / h1;
  const double ha = h[n - 2], hb = h[n - 3];
  diag[k - 1] += ha * (ha + hb) / hb;
  sub[k - 1] -= ha * ha / hb;

  // Thomas algorithm.
  for (std::size_t r = 1; r < k; ++r) {
    const double w = sub[r] / diag[r - 1];
    diag[r] -= w * sup[r - 1];
    rhs[r] -= w * rhs[r - 1];
  }
  std::vector<double> inner(k);
  inner[k - 1] = rhs[k - 1] / diag[k - 1];
  for (std::size_t r = k - 1; r-- > 0;) inner[r] = (rhs[r] - sup[r] * inner[r + 1]) / diag[r];

  m_.assign(n, 0.0);
  for (std::size_t r = 0; r < k; ++r) m_[r + 1] = inner[r];
  m_[0] = ((h0 + h1) * m_[1] - h0 * m_[2]) / h1;
  m_[n - 1] = ((ha + hb) * m_[n - 2] - ha * m_[n - 3]) / hb;
}

double CubicSpline::operator()(double t) const {
  if (t <= x_.front()) return y_.front();
  if (t >= x_.back()) return y_.back();
  const auto it = std::upper_bound(x_.begin(), x_.end(), t);
  const auto i = static_cast<std::size_t>(it - x_.begin()) - 1;
  const double h = x_[i + 1] - x_[i];
  const double a = (x_[i + 1] - t) / h;
  const double b = (t - x_[i]) / h;
  return a * y_[i] + b * y_[i + 1] +
         ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
}

std::vector<double> cubic_resample(std::span<const double> x, std::span<const double> y, double t0, double t1,
                                   std::size_t count) {
  if (!(t1 > t0)) throw std::invalid_argument("cubic_resample: need t1 > t0");
  const CubicSpline spline({x.begin(), x.end()}, {y.begin(), y.end()});
  std::vector<double> out(count);
  const double step = (t1 - t0) / static_cast<double>(count);
  for (std::size_t j = 0; j < count; ++j) out[j] = spline(t0 + static_cast<double>(j) * step);
  return out;
}

std::vector<double> rr_intervals(std::span<const std::size_t> peaks, double fs) {
  if (!(fs > 0.0)) throw std::invalid_argument("rr_intervals: fs must be positive");
  std::vector<double> rr;
  for (std::size_t i = 1; i < peaks.size(); ++i) {
    if (peaks[i] <= peaks[i - 1]) throw std::invalid_argument("rr_intervals: peaks must be strictly increasing");
    rr.push_back(static_cast<double>(peaks[i] - peaks[i - 1]) / fs);
  }
  return rr;
}

namespace {

std::vector<double> clipped_resample(const std::vector<double>& t, const std::vector<double>& v, double t0,
                                     double t1, std::size_t count) {
  auto out = cubic_resample(t, v, t0, t1, count);
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  for (double& x : out) x = std::clamp(x, *lo, *hi);
  return out;
}

}  // namespace

std::optional<RriRpe> derive_rri_rpe(const EcgRecord& record, std::span<const std::size_t> peaks, double t0,
                                     double t1, std::size_t resample_len, std::size_t median_window) {
  if (!(t1 > t0)) throw std::invalid_argument("derive_rri_rpe: empty window");
  if (resample_len == 0) throw std::invalid_argument("derive_rri_rpe: resample length must be positive");
  if (median_window == 0 || median_window % 2 == 0) {
    throw std::invalid_argument("derive_rri_rpe: median window must be odd");
  }
  const double fs = record.fs;
  auto time_of = [fs](std::size_t p) { return static_cast<double>(p) / fs; };

  const auto first = std::lower_bound(peaks.begin(), peaks.end(), t0,
                                      [&](std::size_t p, double t) { return time_of(p) < t; });
  const auto last = std::lower_bound(first, peaks.end(), t1,
                                     [&](std::size_t p, double t) { return time_of(p) < t; });
  if (last - first < 4) return std::nullopt;

  const auto lo = first - std::min<std::ptrdiff_t>(2, first - peaks.begin());
  const auto hi = last == peaks.end() ? last : last + 1;
  const std::span<const std::size_t> used(lo, hi);

  std::vector<double> rr_t, rpe_t, rpe;
  for (std::size_t p : used) {
    if (p >= record.samples.size()) throw std::out_of_range("derive_rri_rpe: peak beyond record end");
    rpe_t.push_back(time_of(p));
    rpe.push_back(record.samples[p]);
  }
  auto rri = rr_intervals(used, fs);
  if (rri.size() < 4) return std::nullopt;
  rr_t.assign(rpe_t.begin() + 1, rpe_t.end());

  rri = median_filter(rri, median_window);
  rpe = median_filter(rpe, median_window);
  return RriRpe{clipped_resample(rr_t, rri, t0, t1, resample_len),
                clipped_resample(rpe_t, rpe, t0, t1, resample_len)};
}

}  // namespace concad
