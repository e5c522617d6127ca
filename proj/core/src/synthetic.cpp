#include "concad/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace concad {

namespace {

void add_pulse(std::vector<double>& x, double fs, double center_s, double amplitude, double width_s) {
  const double c = center_s * fs;
  const double w = width_s * fs;
  const auto reach = static_cast<std::ptrdiff_t>(std::ceil(6.0 * w));
  const auto mid = static_cast<std::ptrdiff_t>(std::llround(c));
  for (std::ptrdiff_t i = std::max<std::ptrdiff_t>(0, mid - reach);
       i <= std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(x.size()) - 1, mid + reach); ++i) {
    const double d = (static_cast<double>(i) - c) / w;
    x[static_cast<std::size_t>(i)] += amplitude * std::exp(-0.5 * d * d);
  }
}

}  // namespace

void add_noise(std::vector<double>& x, double snr_db, RngStream& rng) {
  if (std::isinf(snr_db) && snr_db > 0) return;
  if (x.empty()) return;
  double power = 0.0;
  for (double v : x) power += v * v;
  power /= static_cast<double>(x.size());
  const double sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
  for (double& v : x) v += sigma * rng.normal();
}

PulseTrain make_pulse_train(const PulseTrainSpec& spec, RngStream& rng) {
  if (!(spec.fs > 0.0) || !(spec.duration_s > 0.0) || !(spec.bpm > 0.0) || !(spec.width_s > 0.0)) {
    throw std::invalid_argument("pulse train: fs, duration, bpm and width must be positive");
  }
  PulseTrain out;
  out.record.record_id = "pulse";
  out.record.fs = spec.fs;
  const auto n = static_cast<std::size_t>(std::llround(spec.duration_s * spec.fs));
  out.record.samples.assign(n, 0.0);
  const double period = 60.0 / spec.bpm;
  std::size_t index = 0;
  for (double t = spec.first_pulse_s; t < spec.duration_s; t += period, ++index) {
    if (std::find(spec.omit.begin(), spec.omit.end(), index) != spec.omit.end()) continue;
    add_pulse(out.record.samples, spec.fs, t, spec.amplitude, spec.width_s);
    const auto c = static_cast<std::size_t>(std::llround(t * spec.fs));
    if (c < n) out.centers.push_back(c);
  }
  add_noise(out.record.samples, spec.snr_db, rng);
  return out;
}

std::vector<SyntheticRecord> make_synthetic_records(const SyntheticConfig& cfg) {
  if (cfg.records == 0 || cfg.epochs_per_record == 0) throw std::invalid_argument("synthetic: empty dataset");
  if (!(cfg.normal_bpm > 0.0) || !(cfg.apnea_bpm > 0.0)) throw std::invalid_argument("synthetic: bpm must be positive");
  if (cfg.apnea_fraction < 0.0 || cfg.apnea_fraction > 1.0) {
    throw std::invalid_argument("synthetic: apnea_fraction must be in [0, 1]");
  }
  const RngStream master(cfg.seed);
  std::vector<SyntheticRecord> out;
  for (std::size_t r = 0; r < cfg.records; ++r) {
    RngStream rng = master.derive("record").derive(r);
    SyntheticRecord rec;
    rec.record.record_id = "syn" + std::to_string(r);
    rec.record.fs = cfg.fs;
    const double duration = cfg.epoch_length_s * static_cast<double>(cfg.epochs_per_record);
    const auto n = static_cast<std::size_t>(std::llround(duration * cfg.fs));
    rec.record.samples.assign(n, 0.0);

    rec.annotations.epoch_length_s = cfg.epoch_length_s;
    for (std::size_t e = 0; e < cfg.epochs_per_record; ++e) {
      const Label l = rng.uniform() < cfg.apnea_fraction ? Label::apnea : Label::normal;
      rec.annotations.labels.push_back({static_cast<std::int64_t>(e), l});
    }

    double t = rng.uniform() * 60.0 / cfg.normal_bpm;
    while (t < duration) {
      const auto epoch = std::min(cfg.epochs_per_record - 1, static_cast<std::size_t>(t / cfg.epoch_length_s));
      const double bpm =
          rec.annotations.labels[epoch].label == Label::apnea ? cfg.apnea_bpm : cfg.normal_bpm;
      const double amp = 1.0 + cfg.amplitude_jitter * (2.0 * rng.uniform() - 1.0);
      add_pulse(rec.record.samples, cfg.fs, t, amp, 0.015);
      rec.beats.push_back(static_cast<std::size_t>(std::llround(t * cfg.fs)));
      t += 60.0 / bpm * (1.0 + cfg.rr_jitter * (2.0 * rng.uniform() - 1.0));
    }
    add_noise(rec.record.samples, cfg.snr_db, rng);
    out.push_back(std::move(rec));
  }
  return out;
}

PreparedDataset make_synthetic_dataset(const SyntheticConfig& cfg, const PrepConfig& prep) {
  PreparedDataset ds;
  ds.fs = cfg.fs;
  ds.epoch_length_s = prep.epoch_length_s;
  ds.context = prep.context;
  ds.resample_per_epoch = prep.resample_per_epoch;
  ds.config_text = prep.to_text();
  for (const auto& rec : make_synthetic_records(cfg)) {
    auto prepared = prepare_record(rec.record, rec.annotations, prep);
    ++ds.records;
    ds.labeled_epochs += prepared.labeled_epochs;
    ds.skipped_epochs += prepared.skipped_epochs;
    ds.dropped_hr += prepared.dropped_hr;
    for (auto& b : prepared.bundles) ds.bundles.push_back(std::move(b));
  }
  return ds;
}

}  // namespace concad
