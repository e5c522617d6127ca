#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "concad/dataset.hpp"
#include "concad/prepared_dataset.hpp"
#include "concad/rng.hpp"
#include "concad/wfdb.hpp"

namespace concad {

/// Gaussian pulses at fixed rate plus white noise.
struct PulseTrainSpec {
  double fs = 100.0;
  double duration_s = 60.0;
  double bpm = 60.0;
  /// Time of the first pulse; later pulses follow every 60 / bpm seconds.
  double first_pulse_s = 0.5;
  double amplitude = 1.0;
  double width_s = 0.015;
  /// Signal-to-noise ratio against the mean power of the clean signal; +inf disables noise.
  double snr_db = std::numeric_limits<double>::infinity();
  /// Pulse indices (0-based) to leave out.
  std::vector<std::size_t> omit;
};

struct PulseTrain {
  EcgRecord record;
  /// Sample index nearest to each emitted pulse center.
  std::vector<std::size_t> centers;
};

PulseTrain make_pulse_train(const PulseTrainSpec& spec, RngStream& rng);

/// Adds zero-mean Gaussian noise at the given SNR (dB, relative to mean power of x).
void add_noise(std::vector<double>& x, double snr_db, RngStream& rng);

/// Records whose heart rate depends on each epoch's label.
struct SyntheticConfig {
  std::size_t records = 10;
  std::size_t epochs_per_record = 20;
  double fs = 100.0;
  double epoch_length_s = 60.0;
  double normal_bpm = 90.0;
  double apnea_bpm = 50.0;
  /// Relative beat-to-beat jitter of the RR interval (uniform, +-).
  double rr_jitter = 0.03;
  /// Relative beat-to-beat jitter of the pulse amplitude (uniform, +-).
  double amplitude_jitter = 0.1;
  double snr_db = 20.0;
  double apnea_fraction = 0.5;
  std::uint64_t seed = 1;
};

struct SyntheticRecord {
  EcgRecord record;
  AnnotationSet annotations;
  std::vector<std::size_t> beats;
};

std::vector<SyntheticRecord> make_synthetic_records(const SyntheticConfig& config);

/// Synthetic records run through the regular preparation pipeline.
PreparedDataset make_synthetic_dataset(const SyntheticConfig& config, const PrepConfig& prep);

}  // namespace concad
