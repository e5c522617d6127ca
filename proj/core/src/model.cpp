#include "concad/model.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "text_util.hpp"

namespace concad {

// ---------------------------------------------------------------------------
// ConvBlock / Extractor
// ---------------------------------------------------------------------------

ConvBlock::ConvBlock(const ConvBlockSpec& spec, std::size_t in_channels, const std::string& prefix, RngStream& rng)
    : kernel(prefix + ".kernel", he_normal_init({spec.kernel, in_channels, spec.filters}, spec.kernel * in_channels, rng),
             true),
      bias(prefix + ".bias", Tensor({spec.filters})),
      gamma(prefix + ".bn.gamma", Tensor({spec.filters}, 1.0)),
      beta(prefix + ".bn.beta", Tensor({spec.filters})),
      spec_(spec),
      bn_(BatchNormState::for_channels(spec.filters)) {}

Tensor ConvBlock::forward(const Tensor& input, Mode mode, RngStream* rng) {
  input_ = input;
  Tensor y = conv1d(input, kernel.value, bias.value, spec_.stride);
  bn_out_ = batchnorm1d(y, gamma.value, beta.value, bn_, mode, &bn_cache_);
  y = relu(bn_out_);
  if (spec_.has_pool()) y = maxpool1d(y, spec_.pool, &pool_cache_);
  if (spec_.has_dropout()) y = dropout(y, spec_.dropout, mode, rng, &dropout_mask_);
  return y;
}

Tensor ConvBlock::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  if (spec_.has_dropout()) g = dropout_backward(dropout_mask_, g);
  if (spec_.has_pool()) g = maxpool1d_backward(pool_cache_, g);
  g = relu_backward(bn_out_, g);
  auto bn_grads = batchnorm1d_backward(bn_cache_, gamma.value, g);
  gamma.grad += bn_grads.gamma;
  beta.grad += bn_grads.beta;
  auto conv_grads = conv1d_backward(input_, kernel.value, spec_.stride, bn_grads.input);
  kernel.grad += conv_grads.kernel;
  bias.grad += conv_grads.bias;
  return std::move(conv_grads.input);
}

std::vector<Parameter*> ConvBlock::parameters() { return {&kernel, &bias, &gamma, &beta}; }

Extractor::Extractor(const ExtractorSpec& spec, const std::string& prefix, RngStream& rng) {
  spec.validate();
  std::size_t channels = 1;
  for (std::size_t i = 0; i < spec.blocks.size(); ++i) {
    blocks_.emplace_back(spec.blocks[i], channels, prefix + ".block" + std::to_string(i), rng);
    channels = spec.blocks[i].filters;
  }
}

Tensor Extractor::forward(const Tensor& input, Mode mode, RngStream* rng) {
  Tensor x = input;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto& s = blocks_[i].spec();
    if (x.dim(1) < s.kernel || (s.has_pool() && conv1d_output_length(x.dim(1), s.kernel, s.stride) < s.pool)) {
      throw std::invalid_argument("extractor: time axis exhausted at block " + std::to_string(i) + " (length " +
                                  std::to_string(x.dim(1)) + ")");
    }
    x = blocks_[i].forward(x, mode, rng);
  }
  return x;
}

Tensor Extractor::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = it->backward(g);
  return g;
}

std::vector<Parameter*> Extractor::parameters() {
  std::vector<Parameter*> out;
  for (auto& b : blocks_)
    for (auto* p : b.parameters()) out.push_back(p);
  return out;
}

// ---------------------------------------------------------------------------
// CrossAttention
// ---------------------------------------------------------------------------

CrossAttention::CrossAttention(const std::array<std::pair<std::size_t, std::size_t>, 3>& shapes, std::size_t k,
                               RngStream& rng)
    : k_(k) {
  if (k == 0) throw std::invalid_argument("cross attention: k must be positive");
  for (std::size_t i = 0; i < 3; ++i) {
    const auto [m, n] = shapes[i];
    const std::string p = std::string("attention.") + kModalityNames[i];
    modality[i].u = Parameter(p + ".u", he_normal_init({m}, m, rng));
    modality[i].v = Parameter(p + ".V", he_normal_init({n, k}, n, rng));
    modality[i].w = Parameter(p + ".w", he_normal_init({k}, k, rng));
    modality[i].b = Parameter(p + ".b", Tensor({1}));
  }
}

AttentionOutput CrossAttention::forward(const std::array<Tensor, 3>& features) {
  const std::size_t batch = features[0].dim(0);
  AttentionOutput out;
  Tensor logits({batch, 3});
  for (std::size_t i = 0; i < 3; ++i) {
    const Tensor& x = features[i];
    require_rank(x, 3, "cross attention features");
    const auto& P = modality[i];
    const std::size_t m = x.dim(1), n = x.dim(2);
    if (x.dim(0) != batch) throw std::invalid_argument("cross attention: batch size differs across modalities");
    if (P.u.value.dim(0) != m || P.v.value.dim(0) != n) {
      throw std::invalid_argument(std::string("cross attention: ") + kModalityNames[i] + " features " +
                                  shape_to_string(x.shape()) + " do not match u " +
                                  shape_to_string(P.u.value.shape()) + " / V " + shape_to_string(P.v.value.shape()));
    }
    if (P.v.value.dim(1) != k_ || P.w.value.dim(0) != k_) {
      throw std::invalid_argument("cross attention: projection width k differs across modalities");
    }
    // pooled[b, c] = sum_t u[t] x[b, t, c]
    Tensor pooled({batch, n});
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t t = 0; t < m; ++t) {
        const double ut = P.u.value[t];
        for (std::size_t c = 0; c < n; ++c) pooled.at(b, c) += ut * x.at(b, t, c);
      }
    Tensor proj = dense(pooled, P.v.value, Tensor({k_}));
    for (std::size_t b = 0; b < batch; ++b) {
      double s = P.b.value[0];
      for (std::size_t j = 0; j < k_; ++j) s += P.w.value[j] * proj.at(b, j);
      logits.at(b, i) = s;
    }
    features_[i] = x;
    pooled_[i] = std::move(pooled);
    out.projected[i] = std::move(proj);
  }
  out.alpha = softmax(logits, 1);
  out.context = Tensor({batch, k_});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < k_; ++j) out.context.at(b, j) += out.alpha.at(b, i) * out.projected[i].at(b, j);
  out_ = out;
  return out;
}

std::array<Tensor, 3> CrossAttention::backward(const Tensor& grad_context, const Tensor* grad_alpha) {
  const std::size_t batch = grad_context.dim(0);
  if (grad_context.shape() != Shape{batch, k_} || batch != out_.alpha.dim(0)) {
    throw std::invalid_argument("cross attention backward: gradient shape mismatch");
  }
  // dL/dalpha_i = dc . x''_i (+ any direct alpha gradient)
  Tensor d_alpha({batch, 3});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < 3; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < k_; ++j) s += grad_context.at(b, j) * out_.projected[i].at(b, j);
      d_alpha.at(b, i) = s + (grad_alpha ? grad_alpha->at(b, i) : 0.0);
    }
  const Tensor d_logits = softmax_backward(out_.alpha, d_alpha, 1);

  std::array<Tensor, 3> d_features;
  for (std::size_t i = 0; i < 3; ++i) {
    auto& P = modality[i];
    const Tensor& x = features_[i];
    const std::size_t m = x.dim(1), n = x.dim(2);
    Tensor d_proj({batch, k_});
    for (std::size_t b = 0; b < batch; ++b) {
      const double a = out_.alpha.at(b, i);
      const double dl = d_logits.at(b, i);
      P.b.grad[0] += dl;
      for (std::size_t j = 0; j < k_; ++j) {
        d_proj.at(b, j) = a * grad_context.at(b, j) + dl * P.w.value[j];
        P.w.grad[j] += dl * out_.projected[i].at(b, j);
      }
    }
    auto dg = dense_backward(pooled_[i], P.v.value, d_proj);
    P.v.grad += dg.weight;
    Tensor dx({batch, m, n});
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t t = 0; t < m; ++t) {
        const double ut = P.u.value[t];
        double du = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
          du += dg.input.at(b, c) * x.at(b, t, c);
          dx.at(b, t, c) = ut * dg.input.at(b, c);
        }
        P.u.grad[t] += du;
      }
    d_features[i] = std::move(dx);
  }
  return d_features;
}

std::vector<Parameter*> CrossAttention::parameters() {
  std::vector<Parameter*> out;
  for (auto& P : modality) {
    out.push_back(&P.u);
    out.push_back(&P.v);
    out.push_back(&P.w);
    out.push_back(&P.b);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Input handling
// ---------------------------------------------------------------------------

InputScaler InputScaler::fit(std::span<const SegmentBundle> bundles) {
  InputScaler s;
  if (bundles.empty()) return s;
  for (std::size_t i = 0; i < 3; ++i) {
    double sum = 0.0, sq = 0.0;
    std::size_t count = 0;
    for (const auto& b : bundles) {
      const auto& arr = i == kEcg ? b.ecg : (i == kRri ? b.rri : b.rpe);
      for (double v : arr) {
        sum += v;
        ++count;
      }
    }
    const double mean = count ? sum / static_cast<double>(count) : 0.0;
    for (const auto& b : bundles) {
      const auto& arr = i == kEcg ? b.ecg : (i == kRri ? b.rri : b.rpe);
      for (double v : arr) sq += (v - mean) * (v - mean);
    }
    const double sd = count ? std::sqrt(sq / static_cast<double>(count)) : 1.0;
    s.mean[i] = mean;
    s.stddev[i] = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

ModelInputs make_inputs(std::span<const SegmentBundle> bundles, const InputScaler& scaler) {
  if (bundles.empty()) throw std::invalid_argument("make_inputs: empty batch");
  ModelInputs in;
  const std::size_t batch = bundles.size();
  for (std::size_t i = 0; i < 3; ++i) {
    auto pick = [i](const SegmentBundle& b) -> const std::vector<double>& {
      return i == kEcg ? b.ecg : (i == kRri ? b.rri : b.rpe);
    };
    const std::size_t len = pick(bundles[0]).size();
    if (len == 0) throw DataError(std::string("make_inputs: empty ") + kModalityNames[i] + " array");
    Tensor x({batch, len, 1});
    for (std::size_t b = 0; b < batch; ++b) {
      const auto& arr = pick(bundles[b]);
      if (arr.size() != len) {
        throw DataError(std::string("make_inputs: inconsistent ") + kModalityNames[i] + " lengths in batch");
      }
      for (std::size_t t = 0; t < len; ++t) x[b * len + t] = (arr[t] - scaler.mean[i]) / scaler.stddev[i];
    }
    in.x[i] = std::move(x);
  }
  in.labels.reserve(batch);
  for (const auto& b : bundles) in.labels.push_back(class_index(b.label));
  return in;
}

// ---------------------------------------------------------------------------
// ConcadModel
// ---------------------------------------------------------------------------

std::array<std::pair<std::size_t, std::size_t>, 3> ConcadModel::feature_shapes(const ArchConfig& arch,
                                                                                const InputDims& dims) {
  return {arch.ecg.output_shape(dims.ecg), arch.rri.output_shape(dims.rri), arch.rpe.output_shape(dims.rpe)};
}

ConcadModel::ConcadModel(const ArchConfig& arch, const InputDims& dims, RngStream& rng)
    : extractors{Extractor(arch.ecg, "ecg", rng), Extractor(arch.rri, "rri", rng), Extractor(arch.rpe, "rpe", rng)},
      attention(feature_shapes(arch, dims), arch.k, rng),
      proj_weight("proj.weight", he_normal_init({arch.k, arch.proj_dim}, arch.k, rng)),
      proj_bias("proj.bias", Tensor({arch.proj_dim})),
      arch_(arch),
      dims_(dims) {
  arch_.validate();
  std::size_t width = arch.k;
  for (std::size_t i = 0; i <= arch.clf_hidden.size(); ++i) {
    const std::size_t out = i < arch.clf_hidden.size() ? arch.clf_hidden[i] : 2;
    const std::string p = "clf." + std::to_string(i);
    clf_weights.emplace_back(p + ".weight", he_normal_init({width, out}, width, rng));
    clf_biases.emplace_back(p + ".bias", Tensor({out}));
    width = out;
  }
}

ModelOutput ConcadModel::forward(std::span<const SegmentBundle> bundles, const ForwardOptions& options) {
  return forward(make_inputs(bundles, scaler_), options);
}

ModelOutput ConcadModel::forward(const ModelInputs& inputs, const ForwardOptions& options) {
  if (options.mode == Mode::train && !options.rng) throw std::invalid_argument("model forward: train mode needs rng");
  const std::array<std::size_t, 3> expected{dims_.ecg, dims_.rri, dims_.rpe};
  for (std::size_t i = 0; i < 3; ++i) {
    if (inputs.x[i].rank() != 3 || inputs.x[i].dim(1) != expected[i] || inputs.x[i].dim(2) != 1) {
      throw std::invalid_argument(std::string("model forward: ") + kModalityNames[i] + " input " +
                                  shape_to_string(inputs.x[i].shape()) + " does not match configured length " +
                                  std::to_string(expected[i]));
    }
  }
  std::array<Tensor, 3> features;
  for (std::size_t i = 0; i < 3; ++i) features[i] = extractors[i].forward(inputs.x[i], options.mode, options.rng);

  ModelOutput out;
  out.attention = attention.forward(features);
  const Tensor& c = out.attention.context;

  last_projection_ = options.projection;
  if (options.projection) {
    proj_pre_ = dense(c, proj_weight.value, proj_bias.value);
    z_ = l2_normalize(proj_pre_, 1);
    out.z = z_;
  }

  clf_inputs_.clear();
  clf_pre_.clear();
  Tensor h = c;
  for (std::size_t i = 0; i < clf_weights.size(); ++i) {
    clf_inputs_.push_back(h);
    Tensor pre = dense(h, clf_weights[i].value, clf_biases[i].value);
    if (i + 1 < clf_weights.size()) {
      h = relu(pre);
      clf_pre_.push_back(std::move(pre));
    } else {
      out.logits = std::move(pre);
    }
  }
  out.probs = softmax(out.logits, 1);
  out.logits.require_finite("model logits");
  return out;
}

void ConcadModel::backward(const Tensor& grad_z, const Tensor& grad_logits) {
  Tensor g = grad_logits;
  for (std::size_t i = clf_weights.size(); i-- > 0;) {
    if (i + 1 < clf_weights.size()) g = relu_backward(clf_pre_[i], g);
    auto dg = dense_backward(clf_inputs_[i], clf_weights[i].value, g);
    clf_weights[i].grad += dg.weight;
    clf_biases[i].grad += dg.bias;
    g = std::move(dg.input);
  }
  Tensor grad_c = std::move(g);

  if (!grad_z.empty()) {
    if (!last_projection_) throw std::logic_error("model backward: projection gradient without projection forward");
    Tensor d_pre = l2_normalize_backward(proj_pre_, z_, grad_z, 1);
    auto dg = dense_backward(clf_inputs_[0], proj_weight.value, d_pre);
    proj_weight.grad += dg.weight;
    proj_bias.grad += dg.bias;
    grad_c += dg.input;
  }

  auto d_features = attention.backward(grad_c);
  for (std::size_t i = 0; i < 3; ++i) extractors[i].backward(d_features[i]);
}

void ConcadModel::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

std::vector<Parameter*> ConcadModel::parameters() {
  auto out = prediction_parameters();
  out.push_back(&proj_weight);
  out.push_back(&proj_bias);
  return out;
}

std::vector<Parameter*> ConcadModel::prediction_parameters() {
  std::vector<Parameter*> out;
  for (auto& e : extractors)
    for (auto* p : e.parameters()) out.push_back(p);
  for (auto* p : attention.parameters()) out.push_back(p);
  for (std::size_t i = 0; i < clf_weights.size(); ++i) {
    out.push_back(&clf_weights[i]);
    out.push_back(&clf_biases[i]);
  }
  return out;
}

std::size_t ConcadModel::parameter_count() {
  std::size_t n = 0;
  for (auto* p : parameters()) n += p->value.size();
  return n;
}

std::size_t ConcadModel::prediction_parameter_count() {
  std::size_t n = 0;
  for (auto* p : prediction_parameters()) n += p->value.size();
  return n;
}

Checkpoint ConcadModel::to_checkpoint(const std::string& extra_metadata) const {
  Checkpoint ck;
  std::ostringstream meta;
  meta << "kind = concad-model\n";
  meta << "input.ecg = " << dims_.ecg << "\ninput.rri = " << dims_.rri << "\ninput.rpe = " << dims_.rpe << '\n';
  std::istringstream arch_text(arch_.to_text());
  for (std::string line; std::getline(arch_text, line);) meta << "arch." << line << '\n';
  meta << extra_metadata;
  ck.metadata = meta.str();

  auto& self = const_cast<ConcadModel&>(*this);
  for (auto* p : self.parameters()) ck.tensors.push_back({p->name, p->value});
  for (std::size_t i = 0; i < 3; ++i) {
    for (const auto& block : extractors[i].blocks()) {
      const std::string prefix = block.kernel.name.substr(0, block.kernel.name.rfind('.'));
      ck.tensors.push_back({prefix + ".bn.running_mean", block.bn_state().running_mean});
      ck.tensors.push_back({prefix + ".bn.running_var", block.bn_state().running_var});
    }
  }
  ck.tensors.push_back({"scaler.mean", Tensor({3}, {scaler_.mean[0], scaler_.mean[1], scaler_.mean[2]})});
  ck.tensors.push_back({"scaler.std", Tensor({3}, {scaler_.stddev[0], scaler_.stddev[1], scaler_.stddev[2]})});
  return ck;
}

ConcadModel ConcadModel::from_checkpoint(const Checkpoint& ck) {
  std::ostringstream arch_text;
  InputDims dims;
  bool is_model = false;
  for (auto line : detail::split(ck.metadata, '\n')) {
    line = detail::trim(line);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) continue;
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    auto dim = [&]() {
      const auto v = detail::parse_number<std::size_t>(value);
      if (!v) throw DataError("checkpoint: bad input length '" + std::string(value) + "'");
      return *v;
    };
    if (key == "kind") is_model = value == "concad-model";
    if (key == "input.ecg") dims.ecg = dim();
    if (key == "input.rri") dims.rri = dim();
    if (key == "input.rpe") dims.rpe = dim();
    if (key.starts_with("arch.")) arch_text << key.substr(5) << " = " << value << '\n';
  }
  if (!is_model) throw DataError("checkpoint: not a model checkpoint");

  ArchConfig arch;
  try {
    arch = ArchConfig::parse(arch_text.str());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("checkpoint: bad architecture: ") + e.what());
  }
  RngStream rng(0);
  ConcadModel model(arch, dims, rng);
  auto load = [&](const std::string& name, Tensor& dst) {
    const Tensor& src = ck.get(name);
    if (src.shape() != dst.shape()) throw DataError("checkpoint: tensor '" + name + "' has wrong shape");
    dst = src;
  };
  for (auto* p : model.parameters()) load(p->name, p->value);
  for (auto& e : model.extractors) {
    for (auto& block : e.blocks()) {
      const std::string prefix = block.kernel.name.substr(0, block.kernel.name.rfind('.'));
      load(prefix + ".bn.running_mean", block.bn_state().running_mean);
      load(prefix + ".bn.running_var", block.bn_state().running_var);
    }
  }
  const Tensor& mean = ck.get("scaler.mean");
  const Tensor& sd = ck.get("scaler.std");
  if (mean.size() != 3 || sd.size() != 3) throw DataError("checkpoint: bad scaler tensors");
  for (std::size_t i = 0; i < 3; ++i) {
    model.scaler_.mean[i] = mean[i];
    model.scaler_.stddev[i] = sd[i];
  }
  return model;
}

std::size_t expected_parameter_count(const ArchConfig& arch, const InputDims& dims, bool include_projection) {
  std::size_t n = 0;
  const std::array<const ExtractorSpec*, 3> specs{&arch.ecg, &arch.rri, &arch.rpe};
  const std::array<std::size_t, 3> lengths{dims.ecg, dims.rri, dims.rpe};
  for (std::size_t i = 0; i < 3; ++i) {
    std::size_t cin = 1;
    for (const auto& b : specs[i]->blocks) {
      n += b.kernel * cin * b.filters + b.filters;  // conv
      n += 2 * b.filters;                           // bn gamma, beta
      cin = b.filters;
    }
    const auto [m, ch] = specs[i]->output_shape(lengths[i]);
    n += m + ch * arch.k + arch.k + 1;  // u, V, w, b
  }
  if (include_projection) n += arch.k * arch.proj_dim + arch.proj_dim;
  std::size_t width = arch.k;
  for (auto h : arch.clf_hidden) {
    n += width * h + h;
    width = h;
  }
  n += width * 2 + 2;
  return n;
}

}  // namespace concad
