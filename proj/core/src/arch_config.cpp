#include "concad/arch_config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "text_util.hpp"

namespace concad {

namespace {

using detail::parse_number;
using detail::trim;

// "Name(a,b,c)" -> ("Name", {"a","b","c"})
std::pair<std::string_view, std::vector<std::string_view>> parse_call(std::string_view token) {
  const auto open = token.find('(');
  const auto close = token.rfind(')');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open || close != token.size() - 1) {
    throw std::invalid_argument("extractor spec: malformed layer '" + std::string(token) + "'");
  }
  std::vector<std::string_view> args;
  for (auto a : detail::split(token.substr(open + 1, close - open - 1), ',')) args.push_back(trim(a));
  return {trim(token.substr(0, open)), args};
}

std::size_t positive_arg(std::string_view s, std::string_view layer) {
  const auto v = parse_number<std::size_t>(s);
  if (!v || *v == 0) {
    throw std::invalid_argument("extractor spec: " + std::string(layer) + " argument '" + std::string(s) +
                                "' is not a positive integer");
  }
  return *v;
}

}  // namespace

ExtractorSpec ExtractorSpec::parse(std::string_view text) {
  ExtractorSpec spec;
  // A '-' may only separate layers, so split at depth 0 and skip empty pieces
  // ("--MaxPool" appears in hand-written tables).
  std::vector<std::string_view> tokens;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    const char c = i < text.size() ? text[i] : '-';
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (c == '-' && depth == 0) {
      auto tok = trim(text.substr(start, i - start));
      if (!tok.empty()) tokens.push_back(tok);
      start = i + 1;
    }
  }
  for (auto tok : tokens) {
    auto [name, args] = parse_call(tok);
    if (name == "ConvBlock") {
      if (args.size() != 3) throw std::invalid_argument("extractor spec: ConvBlock takes (filters, kernel, stride)");
      ConvBlockSpec b;
      b.filters = positive_arg(args[0], name);
      b.kernel = positive_arg(args[1], name);
      b.stride = positive_arg(args[2], name);
      spec.blocks.push_back(b);
    } else if (name == "MaxPool") {
      if (spec.blocks.empty()) throw std::invalid_argument("extractor spec: MaxPool before any ConvBlock");
      if (args.size() != 1) throw std::invalid_argument("extractor spec: MaxPool takes (pool)");
      if (spec.blocks.back().has_pool()) throw std::invalid_argument("extractor spec: repeated MaxPool on one block");
      spec.blocks.back().pool = positive_arg(args[0], name);
    } else if (name == "Dropout") {
      if (spec.blocks.empty()) throw std::invalid_argument("extractor spec: Dropout before any ConvBlock");
      if (args.size() != 1) throw std::invalid_argument("extractor spec: Dropout takes (rate)");
      const auto rate = parse_number<double>(args[0]);
      if (!rate || !(*rate >= 0.0 && *rate < 1.0)) {
        throw std::invalid_argument("extractor spec: dropout rate must lie in [0, 1)");
      }
      spec.blocks.back().dropout = *rate;
    } else {
      throw std::invalid_argument("extractor spec: unknown layer '" + std::string(name) + "'");
    }
  }
  spec.validate();
  return spec;
}

std::string ExtractorSpec::to_string() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    if (i) os << '-';
    os << "ConvBlock(" << b.filters << ',' << b.kernel << ',' << b.stride << ')';
    if (b.has_pool()) os << "-MaxPool(" << b.pool << ')';
    if (b.has_dropout()) os << "-Dropout(" << detail::format_double(b.dropout) << ')';
  }
  return os.str();
}

void ExtractorSpec::validate() const {
  if (blocks.empty()) throw std::invalid_argument("extractor spec: needs at least one ConvBlock");
  for (const auto& b : blocks) {
    if (b.filters == 0 || b.kernel == 0 || b.stride == 0) {
      throw std::invalid_argument("extractor spec: ConvBlock arguments must be positive");
    }
    if (!(b.dropout >= 0.0 && b.dropout < 1.0)) throw std::invalid_argument("extractor spec: bad dropout rate");
  }
  const auto& last = blocks.back();
  if (last.has_pool() || last.has_dropout()) {
    throw std::invalid_argument("extractor spec: the final ConvBlock must not have MaxPool or Dropout");
  }
}

std::pair<std::size_t, std::size_t> ExtractorSpec::output_shape(std::size_t time) const {
  std::size_t t = time;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    if (t < b.kernel) {
      throw std::invalid_argument("extractor spec: time axis exhausted at block " + std::to_string(i) +
                                  " (ConvBlock kernel " + std::to_string(b.kernel) + " > length " +
                                  std::to_string(t) + ")");
    }
    t = (t - b.kernel) / b.stride + 1;
    if (b.has_pool()) {
      if (t < b.pool) {
        throw std::invalid_argument("extractor spec: time axis exhausted at block " + std::to_string(i) +
                                    " (MaxPool " + std::to_string(b.pool) + " > length " + std::to_string(t) + ")");
      }
      t /= b.pool;
    }
  }
  return {t, blocks.back().filters};
}

ArchConfig ArchConfig::parse(std::string_view text) {
  ArchConfig cfg;
  bool seen_ecg = false, seen_rri = false, seen_rpe = false;
  std::size_t line_no = 0;
  for (auto line : detail::split(text, '\n')) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("architecture config line " + std::to_string(line_no) + ": expected key = value");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    auto size_value = [&]() {
      const auto v = parse_number<std::size_t>(value);
      if (!v || *v == 0) {
        throw std::invalid_argument("architecture config: '" + std::string(key) + "' must be a positive integer");
      }
      return *v;
    };
    if (key == "ecg") {
      cfg.ecg = ExtractorSpec::parse(value);
      seen_ecg = true;
    } else if (key == "rri") {
      cfg.rri = ExtractorSpec::parse(value);
      seen_rri = true;
    } else if (key == "rpe") {
      cfg.rpe = ExtractorSpec::parse(value);
      seen_rpe = true;
    } else if (key == "k") {
      cfg.k = size_value();
    } else if (key == "proj_dim") {
      cfg.proj_dim = size_value();
    } else if (key == "clf_hidden") {
      cfg.clf_hidden.clear();
      if (!value.empty()) {
        for (auto w : detail::split(value, ',')) {
          const auto v = parse_number<std::size_t>(w);
          if (!v || *v == 0) throw std::invalid_argument("architecture config: bad clf_hidden width");
          cfg.clf_hidden.push_back(*v);
        }
      }
    } else {
      throw std::invalid_argument("architecture config: unknown key '" + std::string(key) + "'");
    }
  }
  if (!seen_ecg || !seen_rri || !seen_rpe) {
    throw std::invalid_argument("architecture config: ecg, rri and rpe extractors are all required");
  }
  cfg.validate();
  return cfg;
}

ArchConfig ArchConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("architecture config: cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse(ss.str());
}

std::string ArchConfig::to_text() const {
  std::ostringstream os;
  os << "ecg = " << ecg.to_string() << '\n';
  os << "rri = " << rri.to_string() << '\n';
  os << "rpe = " << rpe.to_string() << '\n';
  os << "k = " << k << '\n';
  os << "proj_dim = " << proj_dim << '\n';
  os << "clf_hidden = ";
  for (std::size_t i = 0; i < clf_hidden.size(); ++i) os << (i ? "," : "") << clf_hidden[i];
  os << '\n';
  return os.str();
}

void ArchConfig::validate() const {
  ecg.validate();
  rri.validate();
  rpe.validate();
  if (k == 0 || proj_dim == 0) throw std::invalid_argument("architecture config: k and proj_dim must be positive");
  for (auto w : clf_hidden)
    if (w == 0) throw std::invalid_argument("architecture config: clf_hidden widths must be positive");
}

}  // namespace concad
