#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "concad/arch_config.hpp"
#include "concad/checkpoint.hpp"
#include "concad/ops.hpp"
#include "concad/optimizer.hpp"
#include "concad/rng.hpp"
#include "concad/segment.hpp"

namespace concad {

/// Modality order used throughout the model and in attention weights.
enum Modality : std::size_t { kEcg = 0, kRri = 1, kRpe = 2 };
inline constexpr std::array<const char*, 3> kModalityNames{"ecg", "rri", "rpe"};

/// Conv -> BatchNorm -> ReLU [-> MaxPool] [-> Dropout].
class ConvBlock {
 public:
  ConvBlock(const ConvBlockSpec& spec, std::size_t in_channels, const std::string& prefix, RngStream& rng);

  Tensor forward(const Tensor& input, Mode mode, RngStream* rng);
  /// Accumulates parameter gradients and returns dL/dinput.
  Tensor backward(const Tensor& grad_out);

  const ConvBlockSpec& spec() const noexcept { return spec_; }
  std::vector<Parameter*> parameters();
  BatchNormState& bn_state() noexcept { return bn_; }
  const BatchNormState& bn_state() const noexcept { return bn_; }

  Parameter kernel;  // [k, in, filters]
  Parameter bias;    // [filters]
  Parameter gamma;   // [filters]
  Parameter beta;    // [filters]

 private:
  ConvBlockSpec spec_;
  BatchNormState bn_;
  Tensor input_;
  BatchNormCache bn_cache_;
  Tensor bn_out_;
  MaxPoolCache pool_cache_;
  Tensor dropout_mask_;
};

/// Stack of ConvBlocks mapping [batch, time, 1] to [batch, m, n].
class Extractor {
 public:
  Extractor(const ExtractorSpec& spec, const std::string& prefix, RngStream& rng);

  Tensor forward(const Tensor& input, Mode mode, RngStream* rng);
  Tensor backward(const Tensor& grad_out);

  std::vector<Parameter*> parameters();
  std::vector<ConvBlock>& blocks() noexcept { return blocks_; }
  const std::vector<ConvBlock>& blocks() const noexcept { return blocks_; }

 private:
  std::vector<ConvBlock> blocks_;
};

struct AttentionOutput {
  Tensor alpha;                      // [batch, 3]
  Tensor context;                    // [batch, k]
  std::array<Tensor, 3> projected;   // x''_i, each [batch, k]
};

/// Three-way softmax gate over per-modality projections:
///   x''_i = u_i^T x'_i V_i,  alpha = softmax_i(w_i . x''_i + b_i),  c = sum_i alpha_i x''_i
/// where x'_i is [m_i time steps, n_i channels], u_i in R^{m_i}, V_i in R^{n_i x k}.
class CrossAttention {
 public:
  struct ModalityParams {
    Parameter u;  // [m]
    Parameter v;  // [n, k]
    Parameter w;  // [k]
    Parameter b;  // [1]
  };

  CrossAttention(const std::array<std::pair<std::size_t, std::size_t>, 3>& feature_shapes, std::size_t k,
                 RngStream& rng);

  AttentionOutput forward(const std::array<Tensor, 3>& features);
  /// Given dL/dc (and optionally dL/dalpha), returns dL/dx'_i for each modality.
  std::array<Tensor, 3> backward(const Tensor& grad_context, const Tensor* grad_alpha = nullptr);

  std::vector<Parameter*> parameters();
  std::size_t k() const noexcept { return k_; }

  std::array<ModalityParams, 3> modality;

 private:
  std::size_t k_;
  std::array<Tensor, 3> features_;
  std::array<Tensor, 3> pooled_;  // u^T x', [batch, n]
  AttentionOutput out_;
};

/// Per-modality z-score applied to raw bundle arrays before the extractors.
struct InputScaler {
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> stddev{1.0, 1.0, 1.0};

  static InputScaler fit(std::span<const SegmentBundle> bundles);
};

/// Network inputs, each [batch, time, 1].
struct ModelInputs {
  std::array<Tensor, 3> x;
  std::vector<int> labels;
};

ModelInputs make_inputs(std::span<const SegmentBundle> bundles, const InputScaler& scaler);

struct ForwardOptions {
  Mode mode = Mode::infer;
  /// Compute the projection head (required for the contrastive loss).
  bool projection = false;
  RngStream* rng = nullptr;  // dropout stream, required in train mode

  static ForwardOptions train(RngStream& rng) { return {Mode::train, true, &rng}; }
  static ForwardOptions predict() { return {Mode::infer, false, nullptr}; }
};

struct ModelOutput {
  Tensor z;       // [batch, proj_dim], unit rows; empty when the projection head is skipped
  Tensor logits;  // [batch, 2]
  Tensor probs;   // [batch, 2]
  AttentionOutput attention;
};

/// Extractors, cross attention, projection head and classifier head.
class ConcadModel {
 public:
  ConcadModel(const ArchConfig& arch, const InputDims& dims, RngStream& rng);

  ModelOutput forward(const ModelInputs& inputs, const ForwardOptions& options);
  ModelOutput forward(std::span<const SegmentBundle> bundles, const ForwardOptions& options);

  /// Backpropagates dL/dz (may be empty if no projection was computed) and
  /// dL/dlogits from the most recent forward call, accumulating into every
  /// parameter's grad.
  void backward(const Tensor& grad_z, const Tensor& grad_logits);
  void zero_grad();

  std::vector<Parameter*> parameters();
  /// Parameters used at prediction time (everything except the projection head).
  std::vector<Parameter*> prediction_parameters();
  std::size_t parameter_count();
  std::size_t prediction_parameter_count();

  Checkpoint to_checkpoint(const std::string& extra_metadata = {}) const;
  static ConcadModel from_checkpoint(const Checkpoint& checkpoint);

  const ArchConfig& arch() const noexcept { return arch_; }
  const InputDims& dims() const noexcept { return dims_; }
  InputScaler& scaler() noexcept { return scaler_; }
  const InputScaler& scaler() const noexcept { return scaler_; }

  std::array<Extractor, 3> extractors;
  CrossAttention attention;
  Parameter proj_weight;  // [k, proj_dim]
  Parameter proj_bias;    // [proj_dim]
  std::vector<Parameter> clf_weights;
  std::vector<Parameter> clf_biases;

 private:
  static std::array<std::pair<std::size_t, std::size_t>, 3> feature_shapes(const ArchConfig& arch,
                                                                           const InputDims& dims);

  ArchConfig arch_;
  InputDims dims_;
  InputScaler scaler_;

  // forward caches
  bool last_projection_ = false;
  Tensor proj_pre_;
  Tensor z_;
  std::vector<Tensor> clf_inputs_;  // input of each dense layer
  std::vector<Tensor> clf_pre_;     // pre-activation of each hidden layer
};

/// Closed-form trainable parameter count for an architecture.
std::size_t expected_parameter_count(const ArchConfig& arch, const InputDims& dims, bool include_projection = true);

}  // namespace concad
