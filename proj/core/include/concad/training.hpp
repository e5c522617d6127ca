#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "concad/checkpoint.hpp"
#include "concad/dataset.hpp"
#include "concad/losses.hpp"
#include "concad/metrics.hpp"
#include "concad/model.hpp"
#include "concad/rng.hpp"

namespace concad {

struct TrainConfig {
  std::size_t batch_size = 64;
  /// Required; zero is rejected by validate().
  std::size_t epochs = 0;
  double lr_initial = 0.005;
  double lr_after = 0.001;
  /// First (0-based) epoch trained at lr_after; equal to `epochs` means no drop.
  std::size_t drop_epoch = 200;
  LossConfig loss;
  /// L2 coefficient on extractor conv kernels.
  double l2_coeff = 1e-4;
  bool augment = true;
  AugmentationSpec augmentation;
  /// When false the projection head and contrastive term are never computed
  /// and the objective is plain cross-entropy.
  bool contrastive = true;
  std::uint64_t seed = 0;
  /// Evaluate every this many epochs (and always after the last); 0 = only after the last.
  std::size_t eval_every = 1;

  void validate() const;
  double lr_at(std::size_t epoch) const noexcept { return epoch < drop_epoch ? lr_initial : lr_after; }
};

struct Batch {
  std::vector<SegmentBundle> items;
  /// Index into the source set for every item (augmented views repeat their original's index).
  std::vector<std::size_t> source;
  std::size_t originals = 0;
};

enum class BatchMode { train, eval };

/// Train mode shuffles with `rng` and, when `augmentation` is given, appends
/// one augmented view per original, doubling each batch. Eval mode keeps the
/// input order and never augments. A batch_size larger than the set yields a
/// single smaller batch.
std::vector<Batch> make_batches(std::span<const SegmentBundle> bundles, std::size_t batch_size,
                                const AugmentationSpec* augmentation, RngStream& rng, BatchMode mode);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;
  double ce = 0.0;
  /// Mean over batches with at least one positive pair; 0 if none had one.
  double sc = 0.0;
  double lr = 0.0;
  std::size_t batches = 0;
  std::size_t degenerate_batches = 0;
  std::optional<MetricsReport> eval;
  double wall_s = 0.0;
};

struct TrainHooks {
  std::function<void(const EpochLog&)> on_epoch;
  std::function<void(const std::string&)> on_warning;
  /// Appended to checkpoint metadata.
  std::string checkpoint_metadata;
};

struct TrainResult {
  std::vector<EpochLog> logs;
  /// Model state at the best evaluated macro F1 (ties keep the earlier epoch).
  Checkpoint best;
  std::size_t best_epoch = 0;
  MetricsReport best_metrics;
  Checkpoint final_checkpoint;
};

/// Trains in place. The input scaler is fitted on `train_set`. Evaluation (and
/// best-checkpoint selection) uses `eval_set`, or `train_set` when it is empty.
TrainResult train(ConcadModel& model, std::span<const SegmentBundle> train_set,
                  std::span<const SegmentBundle> eval_set, const TrainConfig& config, const TrainHooks& hooks = {});

struct Predictions {
  std::vector<int> labels;
  std::vector<int> predicted;
  Tensor probs;    // [n, 2]
  Tensor context;  // [n, k]
};

Predictions predict(ConcadModel& model, std::span<const SegmentBundle> bundles, std::size_t batch_size = 128);
MetricsReport evaluate(ConcadModel& model, std::span<const SegmentBundle> bundles);

/// CSV with header `record_id,epoch_index,label,c1..ck`, one row per bundle.
void export_embeddings(ConcadModel& model, std::span<const SegmentBundle> bundles,
                       const std::filesystem::path& path);

void write_epoch_log_csv(const std::filesystem::path& path, std::span<const EpochLog> logs);

}  // namespace concad
