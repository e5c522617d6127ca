#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "concad/folds.hpp"
#include "concad/training.hpp"

namespace concad {

/// Experiment description, stored as JSON:
///
///   {
///     "data": "train.cds",            prepared dataset (relative to the manifest)
///     "eval_data": "test.cds",        optional held-out set
///     "arch": "toy.arch",
///     "train": { "epochs": 50, "lambda": 0.5, "tau": 0.1, ... },
///     "folds": 10, "fold_mode": "segment", "fraction": 1.0
///   }
///
/// `epochs`, `lambda` and `tau` are required; unknown keys are rejected.
struct ExperimentManifest {
  std::string text;  // verbatim source
  std::filesystem::path base_dir;
  std::string data;
  std::string eval_data;
  std::string arch;
  TrainConfig train;
  std::size_t folds = 10;
  FoldMode fold_mode = FoldMode::segment;
  double fraction = 1.0;

  static ExperimentManifest parse(const std::string& text, const std::filesystem::path& base_dir = {});
  static ExperimentManifest load(const std::filesystem::path& path);

  /// Relative paths resolve against base_dir.
  std::filesystem::path resolve(const std::string& relative) const;
  /// Canonical JSON (sorted keys, defaults filled in).
  std::string canonical() const;
};

/// 16 hex digits of FNV-1a over the canonical manifest and the architecture text.
std::string config_hash(const ExperimentManifest& manifest, const std::string& arch_text);

}  // namespace concad
