#include "concad/wfdb.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "concad/tensor.hpp"
#include "text_util.hpp"

namespace concad {

namespace fs = std::filesystem;
using detail::parse_number;
using detail::trim;

namespace {

struct SignalSpec {
  std::string file;
  int format = 0;
  double gain = 200.0;
  double baseline = 0.0;
  std::string description;
};

struct Header {
  std::string record;
  double fs = 250.0;
  std::size_t nsamples = 0;
  std::vector<SignalSpec> signals;
};

fs::path header_path_for(const fs::path& path) {
  if (path.extension() == ".hea") return path;
  fs::path p = path;
  p += ".hea";
  return p;
}

Header parse_header(const fs::path& hea) {
  std::ifstream is(hea);
  if (!is) throw DataError("wfdb: cannot open header " + hea.string());
  Header h;
  bool have_record_line = false;
  std::size_t nsig = 0;
  for (std::string line; std::getline(is, line);) {
    auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto f = detail::split_ws(t);
    if (!have_record_line) {
      if (f.size() < 2) throw DataError("wfdb: malformed record line in " + hea.string());
      h.record = std::string(f[0]);
      if (h.record.find('/') != std::string::npos) {
        throw DataError("wfdb: multi-segment records are not supported (" + h.record + ")");
      }
      const auto n = parse_number<std::size_t>(f[1]);
      if (!n) throw DataError("wfdb: bad signal count in " + hea.string());
      nsig = *n;
      if (f.size() >= 3) {
        // "fs[/counter_freq[(base)]]"
        auto fs_text = f[2].substr(0, f[2].find('/'));
        const auto v = parse_number<double>(fs_text);
        if (!v) throw DataError("wfdb: bad sampling frequency in " + hea.string());
        h.fs = *v;
      }
      if (f.size() >= 4) {
        const auto v = parse_number<std::size_t>(f[3]);
        if (!v) throw DataError("wfdb: bad sample count in " + hea.string());
        h.nsamples = *v;
      }
      have_record_line = true;
      continue;
    }
    if (h.signals.size() == nsig) break;
    if (f.size() < 2) throw DataError("wfdb: malformed signal line in " + hea.string());
    SignalSpec s;
    s.file = std::string(f[0]);
    // format may carry "xN", ":skew" or "+offset" suffixes
    auto fmt_text = f[1];
    fmt_text = fmt_text.substr(0, fmt_text.find_first_of("x:+"));
    const auto fmt = parse_number<int>(fmt_text);
    if (!fmt) throw DataError("wfdb: bad storage format '" + std::string(f[1]) + "'");
    s.format = *fmt;
    bool baseline_given = false;
    if (f.size() >= 3) {
      // "gain[(baseline)][/units]"
      auto g = f[2].substr(0, f[2].find('/'));
      const auto paren = g.find('(');
      if (paren != std::string_view::npos) {
        const auto close = g.find(')', paren);
        const auto b = parse_number<double>(g.substr(paren + 1, close - paren - 1));
        if (!b) throw DataError("wfdb: bad baseline in '" + std::string(f[2]) + "'");
        s.baseline = *b;
        baseline_given = true;
        g = g.substr(0, paren);
      }
      const auto gain = parse_number<double>(g);
      if (!gain) throw DataError("wfdb: bad gain '" + std::string(f[2]) + "'");
      s.gain = *gain == 0.0 ? 200.0 : *gain;
    }
    if (f.size() >= 5 && !baseline_given) {
      const auto adczero = parse_number<double>(f[4]);
      if (adczero) s.baseline = *adczero;
    }
    if (f.size() >= 9) {
      std::string desc;
      for (std::size_t i = 8; i < f.size(); ++i) {
        if (!desc.empty()) desc += ' ';
        desc += f[i];
      }
      s.description = desc;
    }
    h.signals.push_back(std::move(s));
  }
  if (!have_record_line) throw DataError("wfdb: empty header " + hea.string());
  if (h.signals.size() != nsig) throw DataError("wfdb: header declares more signals than it lists");
  if (!(h.fs > 0.0)) throw DataError("wfdb: sampling frequency must be > 0");
  return h;
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw DataError("wfdb: cannot open signal file " + p.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

// ecgcodes.h mnemonics, indexed by annotation code.
constexpr std::array<const char*, 42> kMnemonics{
    "",  "N", "L", "R", "a", "V", "F", "J", "A", "S", "E", "j", "/", "Q", "~", "",  "|", "",  "s", "T", "*",
    "D", "\"", "=", "p", "B", "^", "t", "+", "u", "?", "!", "[", "]", "e", "n", "@", "x", "f", "(", ")", "r"};

constexpr int kSkip = 59, kNum = 60, kSub = 61, kChn = 62, kAux = 63;

}  // namespace

void EcgRecord::validate() const {
  if (!(fs > 0.0)) throw DataError("record " + record_id + ": sampling frequency must be > 0");
  if (samples.empty()) throw DataError("record " + record_id + ": no samples");
  for (double v : samples)
    if (!std::isfinite(v)) throw DataError("record " + record_id + ": non-finite sample");
}

std::vector<std::uint8_t> encode_format212(const std::vector<int>& values) {
  std::vector<std::uint8_t> out;
  out.reserve(values.size() * 3 / 2 + 2);
  for (std::size_t i = 0; i < values.size(); i += 2) {
    const int a = values[i];
    if (a < -2048 || a > 2047) throw std::out_of_range("format 212: value out of 12-bit range");
    out.push_back(static_cast<std::uint8_t>(a & 0xFF));
    if (i + 1 < values.size()) {
      const int b = values[i + 1];
      if (b < -2048 || b > 2047) throw std::out_of_range("format 212: value out of 12-bit range");
      out.push_back(static_cast<std::uint8_t>(((a >> 8) & 0x0F) | (((b >> 8) & 0x0F) << 4)));
      out.push_back(static_cast<std::uint8_t>(b & 0xFF));
    } else {
      out.push_back(static_cast<std::uint8_t>((a >> 8) & 0x0F));
    }
  }
  return out;
}

std::vector<int> decode_format212(const std::vector<std::uint8_t>& bytes, std::size_t count) {
  auto sign12 = [](int v) { return v >= 2048 ? v - 4096 : v; };
  std::vector<int> out;
  out.reserve(count);
  std::size_t i = 0;
  while (out.size() < count) {
    if (i + 1 >= bytes.size()) throw DataError("format 212: truncated signal file");
    out.push_back(sign12(bytes[i] | ((bytes[i + 1] & 0x0F) << 8)));
    if (out.size() == count) break;
    if (i + 2 >= bytes.size()) throw DataError("format 212: truncated signal file");
    out.push_back(sign12(bytes[i + 2] | ((bytes[i + 1] & 0xF0) << 4)));
    i += 3;
  }
  return out;
}

std::size_t find_ecg_signal(const fs::path& header_path) {
  const Header h = parse_header(header_path_for(header_path));
  for (std::size_t i = 0; i < h.signals.size(); ++i) {
    if (lower(h.signals[i].description).find("ecg") != std::string::npos) return i;
  }
  return 0;
}

EcgRecord read_wfdb_record(const fs::path& path, std::size_t signal) {
  const fs::path hea = header_path_for(path);
  const Header h = parse_header(hea);
  if (signal >= h.signals.size()) throw DataError("wfdb: record has no signal " + std::to_string(signal));
  const SignalSpec& sel = h.signals[signal];

  // Signals stored in the same file are interleaved frame by frame.
  std::size_t frame = 0, column = 0;
  for (std::size_t i = 0; i < h.signals.size(); ++i) {
    if (h.signals[i].file != sel.file) continue;
    if (h.signals[i].format != sel.format) throw DataError("wfdb: mixed formats within one signal file");
    if (i == signal) column = frame;
    ++frame;
  }

  const auto bytes = read_bytes(hea.parent_path() / sel.file);
  std::vector<int> raw;
  int invalid = 0;
  if (sel.format == 16) {
    const std::size_t available = bytes.size() / 2;
    const std::size_t total = h.nsamples ? h.nsamples * frame : available - available % frame;
    if (total > available) throw DataError("wfdb: truncated signal file for " + h.record);
    raw.resize(total);
    for (std::size_t i = 0; i < total; ++i) {
      raw[i] = static_cast<std::int16_t>(static_cast<std::uint16_t>(bytes[2 * i] | (bytes[2 * i + 1] << 8)));
    }
    invalid = -32768;
  } else if (sel.format == 212) {
    const std::size_t available = bytes.size() / 3 * 2 + (bytes.size() % 3 == 2 ? 1 : 0);
    const std::size_t total = h.nsamples ? h.nsamples * frame : available - available % frame;
    if (total > available) throw DataError("wfdb: truncated signal file for " + h.record);
    raw = decode_format212(bytes, total);
    invalid = -2048;
  } else {
    throw DataError("wfdb: unsupported storage format " + std::to_string(sel.format));
  }

  EcgRecord rec;
  rec.record_id = h.record;
  rec.fs = h.fs;
  const std::size_t n = raw.size() / frame;
  rec.samples.resize(n);
  double last = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int adc = raw[i * frame + column];
    // WFDB marks missing samples with the most negative code; hold the last value.
    if (adc != invalid) last = (adc - sel.baseline) / sel.gain;
    rec.samples[i] = last;
  }
  rec.validate();
  return rec;
}

EcgRecord read_record(const fs::path& path, RecordFormat format, std::size_t signal) {
  if (format == RecordFormat::csv) {
    std::ifstream is(path);
    if (!is) throw DataError("csv: cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line)) throw DataError("csv: empty file " + path.string());
    auto head = trim(line);
    if (!head.starts_with("fs=")) throw DataError("csv: first line must be fs=<Hz>");
    const auto fs_value = parse_number<double>(head.substr(3));
    if (!fs_value || !(*fs_value > 0.0)) throw DataError("csv: sampling frequency must be > 0");
    EcgRecord rec;
    rec.record_id = path.stem().string();
    rec.fs = *fs_value;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
      ++line_no;
      auto t = trim(line);
      if (t.empty()) continue;
      const auto v = parse_number<double>(t);
      if (!v) throw DataError("csv: bad sample on line " + std::to_string(line_no));
      rec.samples.push_back(*v);
    }
    rec.validate();
    return rec;
  }

  const Header h = parse_header(header_path_for(path));
  if (signal >= h.signals.size()) throw DataError("wfdb: record has no signal " + std::to_string(signal));
  const int want = format == RecordFormat::wfdb16 ? 16 : 212;
  if (h.signals[signal].format != want) {
    throw DataError("wfdb: header declares format " + std::to_string(h.signals[signal].format) + ", requested " +
                    std::to_string(want));
  }
  return read_wfdb_record(path, signal);
}

void write_wfdb_record(const fs::path& base, const EcgRecord& record, RecordFormat format, double gain,
                       int baseline) {
  if (format == RecordFormat::csv) throw std::invalid_argument("write_wfdb_record: csv is not a WFDB format");
  record.validate();
  const int fmt = format == RecordFormat::wfdb16 ? 16 : 212;
  const int lo = fmt == 16 ? -32767 : -2047;
  const int hi = fmt == 16 ? 32767 : 2047;
  std::vector<int> adc(record.samples.size());
  for (std::size_t i = 0; i < adc.size(); ++i) {
    const double q = std::round(record.samples[i] * gain + baseline);
    adc[i] = static_cast<int>(std::clamp(q, static_cast<double>(lo), static_cast<double>(hi)));
  }

  const std::string name = base.filename().string();
  fs::path dat = base;
  dat += ".dat";
  fs::path hea = base;
  hea += ".hea";
  {
    std::ofstream os(dat, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("wfdb: cannot write " + dat.string());
    if (fmt == 16) {
      for (int v : adc) {
        const auto u = static_cast<std::uint16_t>(static_cast<std::int16_t>(v));
        os.put(static_cast<char>(u & 0xFF));
        os.put(static_cast<char>(u >> 8));
      }
    } else {
      const auto bytes = encode_format212(adc);
      os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
  }
  std::ofstream os(hea, std::ios::trunc);
  if (!os) throw DataError("wfdb: cannot write " + hea.string());
  os << name << " 1 " << detail::format_double(record.fs) << ' ' << adc.size() << '\n';
  os << name << ".dat " << fmt << ' ' << detail::format_double(gain) << '(' << baseline << ")/mV 12 " << baseline
     << ' ' << (adc.empty() ? 0 : adc.front()) << " 0 0 ECG\n";
}

void write_csv_record(const fs::path& path, const EcgRecord& record) {
  record.validate();
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("csv: cannot write " + path.string());
  os << "fs=" << detail::format_double(record.fs) << '\n';
  for (double v : record.samples) os << detail::format_double(v) << '\n';
}

// ---------------------------------------------------------------------------
// Annotations
// ---------------------------------------------------------------------------

std::string annotation_mnemonic(int code) {
  if (code < 0 || code >= static_cast<int>(kMnemonics.size())) return {};
  return kMnemonics[static_cast<std::size_t>(code)];
}

std::optional<int> annotation_code(const std::string& mnemonic) {
  if (mnemonic.empty()) return std::nullopt;
  for (std::size_t i = 0; i < kMnemonics.size(); ++i)
    if (mnemonic == kMnemonics[i]) return static_cast<int>(i);
  return std::nullopt;
}

LabelMapping LabelMapping::apnea_ecg() {
  LabelMapping m;
  m.codes = {{"A", Label::apnea}, {"N", Label::normal}};
  return m;
}

LabelMapping LabelMapping::mit_bih_psg() {
  LabelMapping m;
  m.use_aux = true;
  m.apnea_aux_tokens = {"H", "HA", "OA", "CA", "CAA", "X", "XA"};
  return m;
}

std::optional<Label> LabelMapping::map(const std::string& code, const std::string& aux) const {
  if (use_aux) {
    for (auto tok : detail::split_ws(aux)) {
      if (std::find(apnea_aux_tokens.begin(), apnea_aux_tokens.end(), tok) != apnea_aux_tokens.end()) {
        return Label::apnea;
      }
    }
    return Label::normal;
  }
  auto it = codes.find(code);
  if (it == codes.end()) return std::nullopt;
  return it->second;
}

std::vector<RawAnnotation> read_raw_annotations(const fs::path& path, AnnotationFormat format) {
  std::vector<RawAnnotation> out;
  if (format == AnnotationFormat::text) {
    std::ifstream is(path);
    if (!is) throw DataError("annotations: cannot open " + path.string());
    std::size_t line_no = 0;
    for (std::string line; std::getline(is, line);) {
      ++line_no;
      auto t = trim(line);
      if (t.empty() || t.front() == '#') continue;
      auto f = detail::split_ws(t);
      if (f.size() < 2) throw DataError("annotations: line " + std::to_string(line_no) + " needs sample and code");
      const auto sample = parse_number<std::int64_t>(f[0]);
      if (!sample || *sample < 0) throw DataError("annotations: bad sample index on line " + std::to_string(line_no));
      RawAnnotation a;
      a.sample = *sample;
      a.code = std::string(f[1]);
      for (std::size_t i = 2; i < f.size(); ++i) {
        if (!a.aux.empty()) a.aux += ' ';
        a.aux += f[i];
      }
      out.push_back(std::move(a));
    }
    return out;
  }

  const auto bytes = read_bytes(path);
  std::size_t pos = 0;
  auto word = [&]() -> std::uint16_t {
    if (pos + 2 > bytes.size()) throw DataError("annotations: truncated MIT annotation file " + path.string());
    const auto w = static_cast<std::uint16_t>(bytes[pos] | (bytes[pos + 1] << 8));
    pos += 2;
    return w;
  };
  std::int64_t time = 0;
  while (pos + 2 <= bytes.size()) {
    const std::uint16_t w = word();
    const int code = w >> 10;
    const int interval = w & 0x3FF;
    if (code == 0 && interval == 0) break;
    if (code == kSkip) {
      const std::uint32_t hi = word();
      const std::uint32_t lo = word();
      time += static_cast<std::int32_t>((hi << 16) | lo);
    } else if (code == kNum || code == kSub || code == kChn) {
      continue;
    } else if (code == kAux) {
      if (pos + static_cast<std::size_t>(interval) > bytes.size()) throw DataError("annotations: truncated aux field");
      std::string aux(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                      bytes.begin() + static_cast<std::ptrdiff_t>(pos + interval));
      if (auto nul = aux.find('\0'); nul != std::string::npos) aux.resize(nul);
      pos += static_cast<std::size_t>(interval + (interval & 1));
      if (!out.empty()) out.back().aux = aux;
    } else {
      time += interval;
      RawAnnotation a;
      a.sample = time;
      a.code = annotation_mnemonic(code);
      if (a.code.empty()) a.code = "#" + std::to_string(code);
      out.push_back(std::move(a));
    }
  }
  return out;
}

AnnotationSet annotations_to_epochs(const std::vector<RawAnnotation>& raw, const AnnotationOptions& o) {
  if (!(o.fs > 0.0) || !(o.epoch_length_s > 0.0)) {
    throw std::invalid_argument("annotations: fs and epoch length must be > 0");
  }
  AnnotationSet set;
  set.epoch_length_s = o.epoch_length_s;
  const double epoch_samples = o.fs * o.epoch_length_s;
  for (const auto& a : raw) {
    const auto label = o.mapping.map(a.code, a.aux);
    if (!label) {
      if (o.strict) throw DataError("annotations: unmapped code '" + a.code + "' at sample " + std::to_string(a.sample));
      ++set.skipped;
      continue;
    }
    const auto epoch = static_cast<std::int64_t>(std::floor(static_cast<double>(a.sample) / epoch_samples));
    if (!set.labels.empty() && epoch <= set.labels.back().epoch_index) {
      if (o.strict) {
        throw DataError("annotations: epoch " + std::to_string(epoch) + " is not after epoch " +
                        std::to_string(set.labels.back().epoch_index));
      }
      ++set.skipped;
      continue;
    }
    set.labels.push_back({epoch, *label});
  }
  if (set.labels.empty()) throw DataError("annotations: no labels");
  return set;
}

AnnotationSet read_annotations(const fs::path& path, AnnotationFormat format, const AnnotationOptions& options) {
  return annotations_to_epochs(read_raw_annotations(path, format), options);
}

void write_text_annotations(const fs::path& path, const std::vector<RawAnnotation>& annotations) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("annotations: cannot write " + path.string());
  for (const auto& a : annotations) {
    os << a.sample << ' ' << a.code;
    if (!a.aux.empty()) os << ' ' << a.aux;
    os << '\n';
  }
}

void write_mit_annotations(const fs::path& path, const std::vector<RawAnnotation>& annotations) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("annotations: cannot write " + path.string());
  auto put = [&](std::uint16_t w) {
    os.put(static_cast<char>(w & 0xFF));
    os.put(static_cast<char>(w >> 8));
  };
  std::int64_t time = 0;
  for (const auto& a : annotations) {
    const auto code = annotation_code(a.code);
    if (!code) throw std::invalid_argument("annotations: no MIT code for mnemonic '" + a.code + "'");
    std::int64_t delta = a.sample - time;
    if (delta < 0) throw std::invalid_argument("annotations: samples must be non-decreasing");
    if (delta > 0x3FF) {
      put(static_cast<std::uint16_t>(kSkip << 10));
      const auto d = static_cast<std::uint32_t>(delta);
      put(static_cast<std::uint16_t>(d >> 16));
      put(static_cast<std::uint16_t>(d & 0xFFFF));
      delta = 0;
    }
    put(static_cast<std::uint16_t>((*code << 10) | static_cast<int>(delta)));
    time = a.sample;
    if (!a.aux.empty()) {
      if (a.aux.size() > 255) throw std::invalid_argument("annotations: aux string too long");
      put(static_cast<std::uint16_t>((kAux << 10) | static_cast<int>(a.aux.size())));
      os.write(a.aux.data(), static_cast<std::streamsize>(a.aux.size()));
      if (a.aux.size() & 1) os.put('\0');
    }
  }
  put(0);
}

}  // namespace concad
