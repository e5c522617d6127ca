#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "concad/segment.hpp"

namespace concad {

enum class FoldMode { segment, recording };

FoldMode parse_fold_mode(std::string_view text);
std::string_view fold_mode_name(FoldMode mode) noexcept;

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> eval;
};

struct FoldPlan {
  FoldMode mode = FoldMode::segment;
  std::uint64_t seed = 0;
  /// Each fold's eval indices; together they partition 0..n-1. Sorted ascending.
  std::vector<std::vector<std::size_t>> folds;

  std::size_t size() const noexcept { return folds.size(); }
  /// Train = all indices outside fold `i`, ascending.
  Fold fold(std::size_t i) const;
};

/// Segment mode deals a seeded shuffle round-robin, so fold sizes differ by at
/// most one. Recording mode shuffles the distinct record ids and deals whole
/// recordings to the currently smallest fold.
FoldPlan kfold_split(std::span<const SegmentBundle> bundles, std::size_t k, FoldMode mode, std::uint64_t seed);

struct SubsetResult {
  std::vector<std::size_t> indices;  // ascending
  /// Classes that would have received zero samples and were given one.
  std::size_t raised_classes = 0;
};

/// Deterministic sample of about `fraction` of the bundles. Stratified: each
/// present class keeps max(1, round(fraction * n_class)) members.
SubsetResult subset_fraction(std::span<const SegmentBundle> bundles, double fraction, std::uint64_t seed,
                             bool stratified = true);

}  // namespace concad
