#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "concad/segment.hpp"

namespace concad {

/// Single-lead ECG in physical units (mV).
struct EcgRecord {
  std::string record_id;
  double fs = 0.0;
  std::vector<double> samples;

  double duration_s() const noexcept { return fs > 0.0 ? static_cast<double>(samples.size()) / fs : 0.0; }
  /// Throws DataError unless fs > 0, samples are non-empty and all finite.
  void validate() const;

  bool operator==(const EcgRecord&) const = default;
};

enum class RecordFormat { wfdb16, wfdb212, csv };

/// Reads one ECG signal.
///
/// WFDB formats: `path` is the header (`.hea`) or the record base path. Gain
/// and baseline come from the header; physical = (adc - baseline) / gain.
/// The requested format must match the header's storage format. `signal`
/// selects the channel in multi-signal records.
///
/// CSV: first line `fs=<Hz>`, then one sample (mV) per line.
EcgRecord read_record(const std::filesystem::path& path, RecordFormat format, std::size_t signal = 0);

/// Reads a WFDB record in whatever storage format its header declares.
EcgRecord read_wfdb_record(const std::filesystem::path& path, std::size_t signal = 0);

/// Index of the first signal whose description contains "ECG" (case-insensitive), or 0.
std::size_t find_ecg_signal(const std::filesystem::path& header_path);

/// Writes `<base>.hea` and `<base>.dat` for a single-signal record. Samples are
/// quantized as round(x * gain + baseline).
void write_wfdb_record(const std::filesystem::path& base, const EcgRecord& record, RecordFormat format,
                       double gain = 200.0, int baseline = 0);

void write_csv_record(const std::filesystem::path& path, const EcgRecord& record);

/// Packs 12-bit two's-complement values pairwise as in WFDB format 212.
std::vector<std::uint8_t> encode_format212(const std::vector<int>& values);
/// Inverse of encode_format212; an odd trailing byte pair yields one value.
std::vector<int> decode_format212(const std::vector<std::uint8_t>& bytes, std::size_t count);

// ---------------------------------------------------------------------------
// Annotations
// ---------------------------------------------------------------------------

struct EpochLabel {
  std::int64_t epoch_index = 0;
  Label label = Label::normal;

  bool operator==(const EpochLabel&) const = default;
};

/// Per-epoch labels with strictly increasing epoch indices.
struct AnnotationSet {
  double epoch_length_s = 60.0;
  std::vector<EpochLabel> labels;
  /// Annotations dropped in lenient mode (unmapped code or duplicate epoch).
  std::size_t skipped = 0;
};

/// Maps annotation mnemonics / aux strings to classes.
struct LabelMapping {
  std::map<std::string, Label> codes;
  /// When set, the aux string decides: apnea if any whitespace-separated token
  /// is listed in `apnea_aux_tokens`, otherwise normal.
  bool use_aux = false;
  std::vector<std::string> apnea_aux_tokens;

  /// Apnea-ECG minute labels: A -> apnea, N -> normal.
  static LabelMapping apnea_ecg();
  /// MIT-BIH PSG: aux containing any of H, HA, OA, CA, CAA, X, XA -> apnea.
  static LabelMapping mit_bih_psg();

  std::optional<Label> map(const std::string& code, const std::string& aux) const;
};

/// One raw annotation as stored on disk.
struct RawAnnotation {
  std::int64_t sample = 0;
  std::string code;  // mnemonic, e.g. "N", "A", "\""
  std::string aux;

  bool operator==(const RawAnnotation&) const = default;
};

enum class AnnotationFormat { wfdb_ann, text };

struct AnnotationOptions {
  double fs = 100.0;
  double epoch_length_s = 60.0;
  LabelMapping mapping = LabelMapping::apnea_ecg();
  /// Strict: unmapped codes and duplicate epochs are errors. Lenient: skipped and counted.
  bool strict = true;
};

/// Text format: `<sample_index> <code> [aux...]` per line; blank lines and
/// lines starting with '#' are ignored. Binary: MIT annotation format.
AnnotationSet read_annotations(const std::filesystem::path& path, AnnotationFormat format,
                               const AnnotationOptions& options);

std::vector<RawAnnotation> read_raw_annotations(const std::filesystem::path& path, AnnotationFormat format);
/// Converts raw annotations to epoch labels (epoch = floor(sample / (fs * epoch_length))).
AnnotationSet annotations_to_epochs(const std::vector<RawAnnotation>& raw, const AnnotationOptions& options);

void write_text_annotations(const std::filesystem::path& path, const std::vector<RawAnnotation>& annotations);
void write_mit_annotations(const std::filesystem::path& path, const std::vector<RawAnnotation>& annotations);

/// WFDB mnemonic for an annotation code (0..49) and back; unknown -> empty / nullopt.
std::string annotation_mnemonic(int code);
std::optional<int> annotation_code(const std::string& mnemonic);

}  // namespace concad
