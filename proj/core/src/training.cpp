#include "concad/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "text_util.hpp"

namespace concad {

void TrainConfig::validate() const {
  if (batch_size < 2) throw std::invalid_argument("train: batch_size must be >= 2");
  if (epochs == 0) throw std::invalid_argument("train: epochs must be set");
  if (drop_epoch > epochs) throw std::invalid_argument("train: drop_epoch must not exceed epochs");
  if (!(lr_initial > 0.0) || !(lr_after > 0.0)) throw std::invalid_argument("train: learning rates must be positive");
  if (!(l2_coeff >= 0.0)) throw std::invalid_argument("train: l2_coeff must be >= 0");
  loss.validate();
  if (augment) augmentation.validate();
}

std::vector<Batch> make_batches(std::span<const SegmentBundle> bundles, std::size_t batch_size,
                                const AugmentationSpec* augmentation, RngStream& rng, BatchMode mode) {
  if (bundles.empty()) throw std::invalid_argument("make_batches: no bundles");
  if (batch_size == 0) throw std::invalid_argument("make_batches: batch_size must be positive");
  std::vector<std::size_t> order(bundles.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (mode == BatchMode::train) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, i - 1))]);
    }
  }
  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    Batch b;
    const std::size_t end = std::min(order.size(), start + batch_size);
    for (std::size_t i = start; i < end; ++i) {
      b.items.push_back(bundles[order[i]]);
      b.source.push_back(order[i]);
    }
    b.originals = b.items.size();
    if (mode == BatchMode::train && augmentation) {
      for (std::size_t i = 0; i < b.originals; ++i) {
        b.items.push_back(augment(b.items[i], *augmentation, rng));
        b.source.push_back(b.source[i]);
      }
    }
    out.push_back(std::move(b));
  }
  return out;
}

Predictions predict(ConcadModel& model, std::span<const SegmentBundle> bundles, std::size_t batch_size) {
  if (bundles.empty()) throw std::invalid_argument("predict: empty set");
  const std::size_t n = bundles.size();
  const std::size_t k = model.arch().k;
  Predictions p;
  p.probs = Tensor({n, kNumClasses});
  p.context = Tensor({n, k});
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t count = std::min(batch_size, n - start);
    const auto out = model.forward(bundles.subspan(start, count), ForwardOptions::predict());
    for (std::size_t r = 0; r < count; ++r) {
      for (std::size_t c = 0; c < kNumClasses; ++c) p.probs.at(start + r, c) = out.probs.at(r, c);
      for (std::size_t c = 0; c < k; ++c) p.context.at(start + r, c) = out.attention.context.at(r, c);
      p.predicted.push_back(out.probs.at(r, 1) > out.probs.at(r, 0) ? 1 : 0);
    }
  }
  for (const auto& b : bundles) p.labels.push_back(class_index(b.label));
  return p;
}

MetricsReport evaluate(ConcadModel& model, std::span<const SegmentBundle> bundles) {
  if (bundles.empty()) throw std::invalid_argument("evaluate: empty evaluation set");
  const auto p = predict(model, bundles);
  return compute_metrics(p.labels, p.predicted);
}

TrainResult train(ConcadModel& model, std::span<const SegmentBundle> train_set,
                  std::span<const SegmentBundle> eval_set, const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  if (config.batch_size > train_set.size() && hooks.on_warning) {
    hooks.on_warning("batch_size " + std::to_string(config.batch_size) + " exceeds the training set (" +
                     std::to_string(train_set.size()) + "); using a single batch");
  }
  const auto selection = eval_set.empty() ? train_set : eval_set;
  model.scaler() = InputScaler::fit(train_set);
  const RngStream master(config.seed);
  auto params = config.contrastive ? model.parameters() : model.prediction_parameters();

  TrainResult result;
  bool have_best = false;
  for (std::size_t e = 0; e < config.epochs; ++e) {
    const auto t_start = std::chrono::steady_clock::now();
    const RngStream epoch_rng = master.derive("epoch").derive(e);
    RngStream batch_rng = epoch_rng.derive("batches");
    RngStream dropout_rng = epoch_rng.derive("dropout");
    const auto batches = make_batches(train_set, config.batch_size, config.augment ? &config.augmentation : nullptr,
                                      batch_rng, BatchMode::train);

    EpochLog log;
    log.epoch = e + 1;
    log.lr = config.lr_at(e);
    std::size_t sc_batches = 0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& batch = batches[bi];
      model.zero_grad();
      ForwardOptions opts = ForwardOptions::train(dropout_rng);
      opts.projection = config.contrastive;
      const auto inputs = make_inputs(batch.items, model.scaler());
      const auto out = model.forward(inputs, opts);
      const auto ce = cross_entropy_with_logits(out.logits, inputs.labels, config.loss.class_weights);

      double loss = ce.value, sc_value = 0.0;
      bool degenerate = false;
      if (config.contrastive) {
        const auto sc = supervised_contrastive(out.z, inputs.labels, config.loss.tau, config.loss.sc_include_anchor);
        const auto h = hybrid(ce, sc, config.loss.lambda);
        loss = h.value;
        sc_value = sc.value;
        degenerate = sc.degenerate;
        if (!std::isfinite(loss)) {
          throw NumericError("train: non-finite loss at epoch " + std::to_string(e + 1) + ", batch " +
                             std::to_string(bi) + " (ce " + detail::format_double(ce.value) + ", sc " +
                             detail::format_double(sc.value) + ")");
        }
        model.backward(h.grad_sc_input, h.grad_ce_input);
      } else {
        if (!std::isfinite(loss)) {
          throw NumericError("train: non-finite loss at epoch " + std::to_string(e + 1) + ", batch " +
                             std::to_string(bi) + " (ce " + detail::format_double(ce.value) + ")");
        }
        model.backward(Tensor{}, ce.grad);
      }
      amsgrad_step(params, AmsGradOptions{log.lr, 0.9, 0.999, 1e-7, config.l2_coeff});

      log.loss += loss;
      log.ce += ce.value;
      if (config.contrastive && !degenerate) {
        log.sc += sc_value;
        ++sc_batches;
      }
      if (degenerate) ++log.degenerate_batches;
    }
    log.batches = batches.size();
    log.loss /= static_cast<double>(batches.size());
    log.ce /= static_cast<double>(batches.size());
    if (sc_batches) log.sc /= static_cast<double>(sc_batches);

    const bool last = e + 1 == config.epochs;
    if (last || (config.eval_every && (e + 1) % config.eval_every == 0)) {
      log.eval = evaluate(model, selection);
      if (!have_best || log.eval->macro_f1 > result.best_metrics.macro_f1) {
        have_best = true;
        result.best_metrics = *log.eval;
        result.best_epoch = e + 1;
        result.best = model.to_checkpoint(hooks.checkpoint_metadata + "epoch = " + std::to_string(e + 1) + '\n');
      }
    }
    log.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    if (hooks.on_epoch) hooks.on_epoch(log);
    result.logs.push_back(std::move(log));
  }
  result.final_checkpoint =
      model.to_checkpoint(hooks.checkpoint_metadata + "epoch = " + std::to_string(config.epochs) + '\n');
  return result;
}

void export_embeddings(ConcadModel& model, std::span<const SegmentBundle> bundles,
                       const std::filesystem::path& path) {
  const auto p = predict(model, bundles);
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  const std::size_t k = p.context.dim(1);
  os << "record_id,epoch_index,label";
  for (std::size_t c = 0; c < k; ++c) os << ",c" << c + 1;
  os << '\n';
  for (std::size_t r = 0; r < bundles.size(); ++r) {
    os << bundles[r].record_id << ',' << bundles[r].epoch_index << ',' << label_name(bundles[r].label);
    for (std::size_t c = 0; c < k; ++c) os << ',' << detail::format_double(p.context.at(r, c));
    os << '\n';
  }
  if (!os) throw DataError("write failed: " + path.string());
}

void write_epoch_log_csv(const std::filesystem::path& path, std::span<const EpochLog> logs) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << "epoch,loss,ce,sc,lr,batches,degenerate_batches,eval_accuracy,eval_macro_f1,wall_s\n";
  for (const auto& l : logs) {
    os << l.epoch << ',' << detail::format_double(l.loss) << ',' << detail::format_double(l.ce) << ','
       << detail::format_double(l.sc) << ',' << detail::format_double(l.lr) << ',' << l.batches << ','
       << l.degenerate_batches << ',';
    if (l.eval) {
      os << detail::format_double(l.eval->accuracy) << ',' << detail::format_double(l.eval->macro_f1);
    } else {
      os << ',';
    }
    os << ',' << detail::format_double(l.wall_s) << '\n';
  }
}

}  // namespace concad
