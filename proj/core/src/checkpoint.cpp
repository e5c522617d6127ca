#include "concad/checkpoint.hpp"

#include <algorithm>
#include <fstream>

#include "binary_io.hpp"

namespace concad {

namespace {
constexpr char kMagic[8] = {'C', 'O', 'N', 'C', 'A', 'D', 'C', 'K'};
}

const Tensor& Checkpoint::get(const std::string& name) const {
  auto it = std::find_if(tensors.begin(), tensors.end(), [&](const Entry& e) { return e.name == name; });
  if (it == tensors.end()) throw DataError("checkpoint: missing tensor '" + name + "'");
  return it->tensor;
}

bool Checkpoint::contains(const std::string& name) const {
  return std::any_of(tensors.begin(), tensors.end(), [&](const Entry& e) { return e.name == name; });
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("checkpoint: cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof kMagic);
  detail::put_u32(os, ck.version);
  detail::put_string(os, ck.metadata);
  detail::put_u32(os, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& e : ck.tensors) {
    detail::put_string(os, e.name);
    detail::put_u32(os, static_cast<std::uint32_t>(e.tensor.rank()));
    for (auto d : e.tensor.shape()) detail::put_u64(os, d);
    for (double v : e.tensor.data()) detail::put_f64(os, v);
  }
  if (!os) throw DataError("checkpoint: write failed for " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint: cannot open " + path.string());
  detail::Reader in(is, "checkpoint " + path.string());
  char magic[8];
  in.bytes(magic, sizeof magic);
  if (!std::equal(std::begin(magic), std::end(magic), std::begin(kMagic))) {
    throw DataError("checkpoint: " + path.string() + " is not a checkpoint file");
  }
  Checkpoint ck;
  ck.version = in.u32();
  if (ck.version != Checkpoint::kVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(ck.version));
  }
  ck.metadata = in.string();
  const std::uint32_t count = in.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    Checkpoint::Entry e;
    e.name = in.string(4096);
    const std::uint32_t rank = in.u32();
    if (rank > 8) throw DataError("checkpoint: implausible rank for '" + e.name + "'");
    Shape shape(rank);
    for (auto& d : shape) d = in.u64();
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = in.f64();
    e.tensor = Tensor(std::move(shape), std::move(data));
    ck.tensors.push_back(std::move(e));
  }
  return ck;
}

}  // namespace concad
