#include "concad/prepared_dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "binary_io.hpp"
#include "concad/tensor.hpp"

namespace concad {

namespace {
constexpr char kMagic[8] = {'C', 'O', 'N', 'C', 'A', 'D', 'D', 'S'};
}

std::size_t PreparedDataset::ecg_length() const {
  return static_cast<std::size_t>(std::llround(epoch_length_s * fs)) * (2 * static_cast<std::size_t>(context) + 1);
}

void PreparedDataset::validate() const {
  if (!(fs > 0.0)) throw DataError("prepared dataset: fs must be positive");
  if (context < 0) throw DataError("prepared dataset: negative context");
  const std::size_t ne = ecg_length(), nf = feature_length();
  for (const auto& b : bundles) {
    if (b.ecg.size() != ne || b.rri.size() != nf || b.rpe.size() != nf) {
      throw DataError("prepared dataset: bundle " + b.record_id + "/" + std::to_string(b.epoch_index) +
                      " has inconsistent array lengths");
    }
  }
}

std::size_t PreparedDataset::count(Label label) const {
  return static_cast<std::size_t>(
      std::count_if(bundles.begin(), bundles.end(), [label](const SegmentBundle& b) { return b.label == label; }));
}

void write_prepared_dataset(const std::filesystem::path& path, const PreparedDataset& ds) {
  ds.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  using namespace detail;
  os.write(kMagic, sizeof kMagic);
  put_u32(os, PreparedDataset::kVersion);
  put_f64(os, ds.fs);
  put_f64(os, ds.epoch_length_s);
  put_u32(os, static_cast<std::uint32_t>(ds.context));
  put_u64(os, ds.resample_per_epoch);
  put_string(os, ds.config_text);
  put_u64(os, ds.records);
  put_u64(os, ds.labeled_epochs);
  put_u64(os, ds.skipped_epochs);
  put_u64(os, ds.dropped_hr);
  put_u64(os, ds.bundles.size());
  for (const auto& b : ds.bundles) {
    put_string(os, b.record_id);
    put_u64(os, static_cast<std::uint64_t>(b.epoch_index));
    put_u32(os, static_cast<std::uint32_t>(class_index(b.label)));
    put_f64_array(os, b.ecg);
    put_f64_array(os, b.rri);
    put_f64_array(os, b.rpe);
  }
  if (!os) throw DataError("write failed: " + path.string());
}

PreparedDataset read_prepared_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open prepared dataset " + path.string());
  detail::Reader r(is, "prepared dataset " + path.string());
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (!std::equal(magic, magic + 8, kMagic)) throw DataError(path.string() + " is not a prepared dataset");
  const auto version = r.u32();
  if (version != PreparedDataset::kVersion) {
    throw DataError("prepared dataset version " + std::to_string(version) + " is not supported");
  }
  PreparedDataset ds;
  ds.fs = r.f64();
  ds.epoch_length_s = r.f64();
  ds.context = static_cast<int>(r.u32());
  ds.resample_per_epoch = r.u64();
  ds.config_text = r.string();
  ds.records = r.u64();
  ds.labeled_epochs = r.u64();
  ds.skipped_epochs = r.u64();
  ds.dropped_hr = r.u64();
  const auto n = r.u64();
  if (n > (1u << 26)) throw DataError("prepared dataset: implausible bundle count");
  ds.bundles.resize(n);
  for (auto& b : ds.bundles) {
    b.record_id = r.string(4096);
    b.epoch_index = static_cast<std::int64_t>(r.u64());
    b.label = label_from_index(static_cast<int>(r.u32()));
    b.ecg = r.f64_array();
    b.rri = r.f64_array();
    b.rpe = r.f64_array();
  }
  ds.validate();
  return ds;
}

}  // namespace concad
