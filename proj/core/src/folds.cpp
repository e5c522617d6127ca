#include "concad/folds.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

#include "concad/rng.hpp"

namespace concad {

namespace {

template <typename T>
void shuffle(std::vector<T>& v, RngStream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, i - 1));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

FoldMode parse_fold_mode(std::string_view text) {
  if (text == "segment") return FoldMode::segment;
  if (text == "recording") return FoldMode::recording;
  throw std::invalid_argument("unknown fold mode '" + std::string(text) + "' (expected segment or recording)");
}

std::string_view fold_mode_name(FoldMode mode) noexcept {
  return mode == FoldMode::segment ? "segment" : "recording";
}

Fold FoldPlan::fold(std::size_t i) const {
  if (i >= folds.size()) throw std::out_of_range("fold index out of range");
  Fold f;
  f.eval = folds[i];
  for (std::size_t j = 0; j < folds.size(); ++j) {
    if (j != i) f.train.insert(f.train.end(), folds[j].begin(), folds[j].end());
  }
  std::sort(f.train.begin(), f.train.end());
  return f;
}

FoldPlan kfold_split(std::span<const SegmentBundle> bundles, std::size_t k, FoldMode mode, std::uint64_t seed) {
  const std::size_t n = bundles.size();
  if (k < 2) throw std::invalid_argument("kfold_split: k must be >= 2");
  if (k > n) throw std::invalid_argument("kfold_split: k exceeds the number of bundles");
  RngStream rng = RngStream(seed).derive("kfold");
  FoldPlan plan;
  plan.mode = mode;
  plan.seed = seed;
  plan.folds.assign(k, {});

  if (mode == FoldMode::segment) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    shuffle(order, rng);
    for (std::size_t i = 0; i < n; ++i) plan.folds[i % k].push_back(order[i]);
  } else {
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < n; ++i) groups[bundles[i].record_id].push_back(i);
    if (groups.size() < k) {
      throw std::invalid_argument("kfold_split: recording-level folds need at least " + std::to_string(k) +
                                  " recordings, found " + std::to_string(groups.size()));
    }
    std::vector<const std::vector<std::size_t>*> order;
    for (const auto& [id, members] : groups) order.push_back(&members);
    shuffle(order, rng);
    for (const auto* members : order) {
      auto& target = *std::min_element(plan.folds.begin(), plan.folds.end(),
                                       [](const auto& a, const auto& b) { return a.size() < b.size(); });
      target.insert(target.end(), members->begin(), members->end());
    }
  }
  for (auto& f : plan.folds) std::sort(f.begin(), f.end());
  return plan;
}

SubsetResult subset_fraction(std::span<const SegmentBundle> bundles, double fraction, std::uint64_t seed,
                             bool stratified) {
  if (!(fraction > 0.0) || fraction > 1.0) throw std::invalid_argument("subset_fraction: fraction must be in (0, 1]");
  if (bundles.empty()) throw std::invalid_argument("subset_fraction: empty input");
  RngStream rng = RngStream(seed).derive("subset");
  SubsetResult out;

  std::map<int, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    strata[stratified ? class_index(bundles[i].label) : 0].push_back(i);
  }
  for (auto& [cls, members] : strata) {
    auto want = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(members.size())));
    if (want == 0) {
      want = 1;
      ++out.raised_classes;
    }
    shuffle(members, rng);
    out.indices.insert(out.indices.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(want));
  }
  std::sort(out.indices.begin(), out.indices.end());
  return out;
}

}  // namespace concad
