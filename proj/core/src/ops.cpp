#include "concad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace concad {

namespace {

struct AxisLayout {
  std::size_t outer = 1;
  std::size_t length = 1;
  std::size_t inner = 1;

  std::size_t index(std::size_t o, std::size_t i, std::size_t in) const { return (o * length + i) * inner + in; }
};

AxisLayout layout_for(const Shape& shape, std::size_t axis, const char* what) {
  if (axis >= shape.size()) {
    throw std::invalid_argument(std::string(what) + ": axis " + std::to_string(axis) + " out of range for " +
                                shape_to_string(shape));
  }
  AxisLayout l;
  for (std::size_t a = 0; a < axis; ++a) l.outer *= shape[a];
  l.length = shape[axis];
  for (std::size_t a = axis + 1; a < shape.size(); ++a) l.inner *= shape[a];
  return l;
}

}  // namespace

std::size_t conv1d_output_length(std::size_t time, std::size_t kernel, std::size_t stride) {
  if (stride == 0) throw std::invalid_argument("conv1d: stride must be >= 1");
  if (kernel == 0) throw std::invalid_argument("conv1d: kernel size must be >= 1");
  if (time < kernel) {
    throw std::invalid_argument("conv1d: input length " + std::to_string(time) + " shorter than kernel " +
                                std::to_string(kernel));
  }
  return (time - kernel) / stride + 1;
}

Tensor conv1d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride) {
  require_rank(input, 3, "conv1d input");
  require_rank(kernel, 3, "conv1d kernel");
  require_rank(bias, 1, "conv1d bias");
  const std::size_t batch = input.dim(0), time = input.dim(1), cin = input.dim(2);
  const std::size_t k = kernel.dim(0), cout = kernel.dim(2);
  if (kernel.dim(1) != cin) {
    throw std::invalid_argument("conv1d: kernel expects " + std::to_string(kernel.dim(1)) +
                                " input channels, input has " + std::to_string(cin));
  }
  if (bias.dim(0) != cout) throw std::invalid_argument("conv1d: bias length does not match output channels");
  const std::size_t tout = conv1d_output_length(time, k, stride);

  Tensor out({batch, tout, cout});
  const double* x = input.data().data();
  const double* w = kernel.data().data();
  double* y = out.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < tout; ++t) {
      double* yrow = y + (b * tout + t) * cout;
      std::copy(bias.data().begin(), bias.data().end(), yrow);
      // The receptive field is contiguous in memory: k * cin values.
      const double* xwin = x + (b * time + t * stride) * cin;
      const std::size_t field = k * cin;
      for (std::size_t r = 0; r < field; ++r) {
        const double xv = xwin[r];
        const double* wrow = w + r * cout;
        for (std::size_t o = 0; o < cout; ++o) yrow[o] += xv * wrow[o];
      }
    }
  }
  return out;
}

Conv1dGrads conv1d_backward(const Tensor& input, const Tensor& kernel, std::size_t stride, const Tensor& grad_out) {
  const std::size_t batch = input.dim(0), time = input.dim(1), cin = input.dim(2);
  const std::size_t k = kernel.dim(0), cout = kernel.dim(2);
  const std::size_t tout = conv1d_output_length(time, k, stride);
  if (grad_out.shape() != Shape{batch, tout, cout}) {
    throw std::invalid_argument("conv1d_backward: grad shape " + shape_to_string(grad_out.shape()) +
                                " does not match output shape");
  }

  Conv1dGrads g{Tensor::like(input), Tensor::like(kernel), Tensor({cout})};
  const double* x = input.data().data();
  const double* w = kernel.data().data();
  const double* dy = grad_out.data().data();
  double* dx = g.input.data().data();
  double* dw = g.kernel.data().data();
  double* db = g.bias.data().data();
  const std::size_t field = k * cin;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < tout; ++t) {
      const double* dyrow = dy + (b * tout + t) * cout;
      for (std::size_t o = 0; o < cout; ++o) db[o] += dyrow[o];
      const std::size_t base = (b * time + t * stride) * cin;
      for (std::size_t r = 0; r < field; ++r) {
        const double* wrow = w + r * cout;
        double* dwrow = dw + r * cout;
        const double xv = x[base + r];
        double acc = 0.0;
        for (std::size_t o = 0; o < cout; ++o) {
          acc += dyrow[o] * wrow[o];
          dwrow[o] += dyrow[o] * xv;
        }
        dx[base + r] += acc;
      }
    }
  }
  return g;
}

BatchNormState BatchNormState::for_channels(std::size_t channels) {
  BatchNormState s;
  s.running_mean = Tensor({channels}, 0.0);
  s.running_var = Tensor({channels}, 1.0);
  return s;
}

Tensor batchnorm1d(const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormState& state, Mode mode,
                   BatchNormCache* cache) {
  if (input.rank() < 2) throw std::invalid_argument("batchnorm1d: input needs a channel axis");
  const std::size_t channels = input.shape().back();
  const std::size_t rows = input.size() / channels;
  if (gamma.shape() != Shape{channels} || beta.shape() != Shape{channels}) {
    throw std::invalid_argument("batchnorm1d: gamma/beta must have " + std::to_string(channels) + " elements");
  }
  if (state.running_mean.shape() != Shape{channels} || state.running_var.shape() != Shape{channels}) {
    throw std::invalid_argument("batchnorm1d: running statistics have wrong shape");
  }
  if (!(state.epsilon > 0.0)) throw std::invalid_argument("batchnorm1d: epsilon must be > 0");

  std::vector<double> mean(channels, 0.0), var(channels, 0.0);
  if (mode == Mode::train) {
    if (rows < 2) throw std::invalid_argument("batchnorm1d: train mode needs more than one value per channel");
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < channels; ++c) mean[c] += input[r * channels + c];
    for (auto& m : mean) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < channels; ++c) {
        const double d = input[r * channels + c] - mean[c];
        var[c] += d * d;
      }
    }
    for (auto& v : var) v /= static_cast<double>(rows);
    for (std::size_t c = 0; c < channels; ++c) {
      state.running_mean[c] = state.momentum * state.running_mean[c] + (1.0 - state.momentum) * mean[c];
      state.running_var[c] = state.momentum * state.running_var[c] + (1.0 - state.momentum) * var[c];
    }
  } else {
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = state.running_mean[c];
      var[c] = state.running_var[c];
    }
  }

  std::vector<double> inv_std(channels);
  for (std::size_t c = 0; c < channels; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + state.epsilon);

  Tensor out = Tensor::like(input);
  Tensor normalized = Tensor::like(input);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t i = r * channels + c;
      normalized[i] = (input[i] - mean[c]) * inv_std[c];
      out[i] = gamma[c] * normalized[i] + beta[c];
    }
  }
  if (cache) {
    cache->mode = mode;
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

BatchNormGrads batchnorm1d_backward(const BatchNormCache& cache, const Tensor& gamma, const Tensor& grad_out) {
  require_same_shape(cache.normalized, grad_out, "batchnorm1d_backward");
  const std::size_t channels = gamma.size();
  const std::size_t rows = grad_out.size() / channels;
  const Tensor& xhat = cache.normalized;

  BatchNormGrads g{Tensor::like(grad_out), Tensor({channels}), Tensor({channels})};
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t i = r * channels + c;
      g.beta[c] += grad_out[i];
      g.gamma[c] += grad_out[i] * xhat[i];
    }
  }
  if (cache.mode == Mode::train) {
    // dx = gamma * inv_std / N * (N * dy - sum(dy) - x_hat * sum(dy * x_hat))
    const double n = static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t i = r * channels + c;
        g.input[i] = gamma[c] * cache.inv_std[c] / n * (n * grad_out[i] - g.beta[c] - xhat[i] * g.gamma[c]);
      }
    }
  } else {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t i = r * channels + c;
        g.input[i] = grad_out[i] * gamma[c] * cache.inv_std[c];
      }
  }
  return g;
}

Tensor maxpool1d(const Tensor& input, std::size_t pool, MaxPoolCache* cache) {
  require_rank(input, 3, "maxpool1d input");
  if (pool == 0) throw std::invalid_argument("maxpool1d: pool must be >= 1");
  const std::size_t batch = input.dim(0), time = input.dim(1), ch = input.dim(2);
  if (time < pool) {
    throw std::invalid_argument("maxpool1d: input length " + std::to_string(time) + " shorter than pool " +
                                std::to_string(pool));
  }
  const std::size_t tout = time / pool;
  Tensor out({batch, tout, ch});
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < tout; ++t) {
      for (std::size_t c = 0; c < ch; ++c) {
        std::size_t best = (b * time + t * pool) * ch + c;
        for (std::size_t j = 1; j < pool; ++j) {
          const std::size_t idx = (b * time + t * pool + j) * ch + c;
          if (input[idx] > input[best]) best = idx;  // strict: first maximum wins ties
        }
        const std::size_t o = (b * tout + t) * ch + c;
        out[o] = input[best];
        argmax[o] = best;
      }
    }
  }
  if (cache) {
    cache->input_shape = input.shape();
    cache->argmax = std::move(argmax);
  }
  return out;
}

Tensor maxpool1d_backward(const MaxPoolCache& cache, const Tensor& grad_out) {
  if (grad_out.size() != cache.argmax.size()) throw std::invalid_argument("maxpool1d_backward: grad size mismatch");
  Tensor dx(cache.input_shape);
  for (std::size_t o = 0; o < cache.argmax.size(); ++o) dx[cache.argmax[o]] += grad_out[o];
  return dx;
}

Tensor dropout(const Tensor& input, double rate, Mode mode, RngStream* rng, Tensor* mask) {
  if (!(rate >= 0.0) || rate >= 1.0) throw std::invalid_argument("dropout: rate must lie in [0, 1)");
  if (mode == Mode::infer || rate == 0.0) {
    if (mask) *mask = Tensor::like(input, 1.0);
    return input;
  }
  if (!rng) throw std::invalid_argument("dropout: train mode requires an rng stream");
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor m = Tensor::like(input);
  Tensor out = Tensor::like(input);
  for (std::size_t i = 0; i < input.size(); ++i) {
    m[i] = rng->bernoulli(rate) ? 0.0 : keep_scale;
    out[i] = input[i] * m[i];
  }
  if (mask) *mask = std::move(m);
  return out;
}

Tensor dropout_backward(const Tensor& mask, const Tensor& grad_out) {
  require_same_shape(mask, grad_out, "dropout_backward");
  Tensor dx = grad_out;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= mask[i];
  return dx;
}

Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank(input, 2, "dense input");
  require_rank(weight, 2, "dense weight");
  require_rank(bias, 1, "dense bias");
  const std::size_t batch = input.dim(0), n = input.dim(1), m = weight.dim(1);
  if (weight.dim(0) != n) {
    throw std::invalid_argument("dense: input width " + std::to_string(n) + " does not match weight " +
                                shape_to_string(weight.shape()));
  }
  if (bias.dim(0) != m) throw std::invalid_argument("dense: bias length does not match output width");
  Tensor out({batch, m});
  for (std::size_t b = 0; b < batch; ++b) {
    double* row = &out.at(b, 0);
    for (std::size_t j = 0; j < m; ++j) row[j] = bias[j];
    for (std::size_t i = 0; i < n; ++i) {
      const double xv = input.at(b, i);
      const double* wrow = &weight.data()[i * m];
      for (std::size_t j = 0; j < m; ++j) row[j] += xv * wrow[j];
    }
  }
  return out;
}

DenseGrads dense_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out) {
  const std::size_t batch = input.dim(0), n = input.dim(1), m = weight.dim(1);
  if (grad_out.shape() != Shape{batch, m}) throw std::invalid_argument("dense_backward: grad shape mismatch");
  DenseGrads g{Tensor::like(input), Tensor::like(weight), Tensor({m})};
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < m; ++j) g.bias[j] += grad_out.at(b, j);
    for (std::size_t i = 0; i < n; ++i) {
      const double xv = input.at(b, i);
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        acc += grad_out.at(b, j) * weight.at(i, j);
        g.weight.at(i, j) += xv * grad_out.at(b, j);
      }
      g.input.at(b, i) = acc;
    }
  }
  return g;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
  require_same_shape(input, grad_out, "relu_backward");
  Tensor dx = grad_out;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (!(input[i] > 0.0)) dx[i] = 0.0;
  return dx;
}

Tensor softmax(const Tensor& input, std::size_t axis) {
  const AxisLayout l = layout_for(input.shape(), axis, "softmax");
  Tensor out = Tensor::like(input);
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t in = 0; in < l.inner; ++in) {
      double mx = input[l.index(o, 0, in)];
      for (std::size_t i = 1; i < l.length; ++i) mx = std::max(mx, input[l.index(o, i, in)]);
      double sum = 0.0;
      for (std::size_t i = 0; i < l.length; ++i) {
        const double e = std::exp(input[l.index(o, i, in)] - mx);
        out[l.index(o, i, in)] = e;
        sum += e;
      }
      for (std::size_t i = 0; i < l.length; ++i) out[l.index(o, i, in)] /= sum;
    }
  }
  return out;
}

Tensor softmax_backward(const Tensor& output, const Tensor& grad_out, std::size_t axis) {
  require_same_shape(output, grad_out, "softmax_backward");
  const AxisLayout l = layout_for(output.shape(), axis, "softmax_backward");
  Tensor dx = Tensor::like(output);
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t in = 0; in < l.inner; ++in) {
      double dot = 0.0;
      for (std::size_t i = 0; i < l.length; ++i) dot += output[l.index(o, i, in)] * grad_out[l.index(o, i, in)];
      for (std::size_t i = 0; i < l.length; ++i) {
        const std::size_t idx = l.index(o, i, in);
        dx[idx] = output[idx] * (grad_out[idx] - dot);
      }
    }
  }
  return dx;
}

Tensor l2_normalize(const Tensor& input, std::size_t axis) {
  const AxisLayout l = layout_for(input.shape(), axis, "l2_normalize");
  Tensor out = Tensor::like(input);
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t in = 0; in < l.inner; ++in) {
      double sq = 0.0;
      for (std::size_t i = 0; i < l.length; ++i) sq += input[l.index(o, i, in)] * input[l.index(o, i, in)];
      const double norm = std::sqrt(sq);
      if (!(norm > 0.0)) throw NumericError("l2_normalize: zero-norm vector");
      for (std::size_t i = 0; i < l.length; ++i) out[l.index(o, i, in)] = input[l.index(o, i, in)] / norm;
    }
  }
  return out;
}

Tensor l2_normalize_backward(const Tensor& input, const Tensor& output, const Tensor& grad_out, std::size_t axis) {
  require_same_shape(input, grad_out, "l2_normalize_backward");
  const AxisLayout l = layout_for(input.shape(), axis, "l2_normalize_backward");
  Tensor dx = Tensor::like(input);
  // y = x / |x|  =>  dx = (dy - y (y . dy)) / |x|
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t in = 0; in < l.inner; ++in) {
      double sq = 0.0, dot = 0.0;
      for (std::size_t i = 0; i < l.length; ++i) {
        const std::size_t idx = l.index(o, i, in);
        sq += input[idx] * input[idx];
        dot += output[idx] * grad_out[idx];
      }
      const double norm = std::sqrt(sq);
      for (std::size_t i = 0; i < l.length; ++i) {
        const std::size_t idx = l.index(o, i, in);
        dx[idx] = (grad_out[idx] - output[idx] * dot) / norm;
      }
    }
  }
  return dx;
}

}  // namespace concad
