#pragma once

#include <cstddef>
#include <vector>

#include "concad/rng.hpp"
#include "concad/tensor.hpp"

namespace concad {

enum class Mode { train, infer };

// ---------------------------------------------------------------------------
// 1-D convolution over [batch, time, channels] tensors.
//
// Cross-correlation (the kernel is not flipped) with valid padding:
//   out[b, t, o] = bias[o] + sum_{j, c} in[b, t*stride + j, c] * kernel[j, c, o]
//   time_out = (time - k) / stride + 1
// ---------------------------------------------------------------------------

std::size_t conv1d_output_length(std::size_t time, std::size_t kernel, std::size_t stride);

Tensor conv1d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride);

struct Conv1dGrads {
  Tensor input;
  Tensor kernel;
  Tensor bias;
};

Conv1dGrads conv1d_backward(const Tensor& input, const Tensor& kernel, std::size_t stride,
                            const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Batch normalization over the last (channel) axis; every other axis is
// reduced when computing batch statistics.
// ---------------------------------------------------------------------------

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.9;
  double epsilon = 1e-5;

  static BatchNormState for_channels(std::size_t channels);
};

/// Saved forward intermediates needed by the backward pass.
struct BatchNormCache {
  Mode mode = Mode::infer;
  Tensor normalized;             // x_hat, same shape as the input
  std::vector<double> inv_std;   // per channel
};

/// Train mode normalizes with batch statistics (biased variance) and folds them
/// into the running averages: running = momentum * running + (1 - momentum) * batch.
/// Infer mode is the affine map given by the running statistics.
Tensor batchnorm1d(const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                   Mode mode, BatchNormCache* cache = nullptr);

struct BatchNormGrads {
  Tensor input;
  Tensor gamma;
  Tensor beta;
};

BatchNormGrads batchnorm1d_backward(const BatchNormCache& cache, const Tensor& gamma, const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Non-overlapping max pooling along time; a trailing remainder is dropped.
// ---------------------------------------------------------------------------

struct MaxPoolCache {
  Shape input_shape;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

Tensor maxpool1d(const Tensor& input, std::size_t pool, MaxPoolCache* cache = nullptr);
/// Routes each output gradient to the first maximal input of its window.
Tensor maxpool1d_backward(const MaxPoolCache& cache, const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Inverted dropout.
// ---------------------------------------------------------------------------

/// Train mode zeroes each element with probability `rate` and scales survivors
/// by 1 / (1 - rate). `mask` (if given) receives the per-element multiplier.
Tensor dropout(const Tensor& input, double rate, Mode mode, RngStream* rng, Tensor* mask = nullptr);
Tensor dropout_backward(const Tensor& mask, const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Affine map [batch, n] x [n, m] + [m].
// ---------------------------------------------------------------------------

Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias);

struct DenseGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
};

DenseGrads dense_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Elementwise and axis-wise activations.
// ---------------------------------------------------------------------------

Tensor relu(const Tensor& input);
Tensor relu_backward(const Tensor& input, const Tensor& grad_out);

Tensor softmax(const Tensor& input, std::size_t axis);
/// Backward from the softmax *output*.
Tensor softmax_backward(const Tensor& output, const Tensor& grad_out, std::size_t axis);

/// Scales every slice along `axis` to unit Euclidean norm; a zero slice is an error.
Tensor l2_normalize(const Tensor& input, std::size_t axis);
Tensor l2_normalize_backward(const Tensor& input, const Tensor& output, const Tensor& grad_out, std::size_t axis);

}  // namespace concad
