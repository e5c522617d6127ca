#include "concad/model_gradcheck.hpp"

#include <algorithm>
#include <set>
#include <vector>

#include "concad/losses.hpp"
#include "concad/model.hpp"

namespace concad {

ArchConfig toy_gradcheck_arch() {
  return ArchConfig::parse(
      "ecg = ConvBlock(4,5,2)-MaxPool(2)-Dropout(0.25)-ConvBlock(4,3,1)\n"
      "rri = ConvBlock(3,3,1)-MaxPool(2)-ConvBlock(3,3,1)\n"
      "rpe = ConvBlock(3,3,1)-MaxPool(2)-Dropout(0.25)-ConvBlock(3,3,1)\n"
      "k = 6\n"
      "proj_dim = 4\n"
      "clf_hidden = 5\n");
}

InputDims toy_gradcheck_dims() { return {48, 20, 20}; }

double ModelGradCheckResult::max_rel_error() const noexcept {
  return std::max(train.report.max_rel_error, infer.report.max_rel_error);
}

namespace {

struct Coordinate {
  Parameter* param;
  std::size_t offset;
};

ModelGradCheckPass check(ConcadModel& model, const ModelInputs& inputs, const ForwardOptions& base,
                         const RngStream& dropout_seed, const std::set<const Parameter*>& skip,
                         const ModelGradCheckOptions& o) {
  auto loss_of = [&](bool with_backward) {
    RngStream rng = dropout_seed;
    ForwardOptions opts = base;
    if (opts.mode == Mode::train) opts.rng = &rng;
    const auto out = model.forward(inputs, opts);
    const auto ce = cross_entropy_with_logits(out.logits, inputs.labels);
    const auto sc = supervised_contrastive(out.z, inputs.labels, o.tau, o.sc_include_anchor);
    const auto h = hybrid(ce, sc, o.lambda);
    if (with_backward) {
      model.zero_grad();
      model.backward(h.grad_sc_input, h.grad_ce_input);
    }
    return h.value;
  };

  loss_of(true);
  std::vector<Coordinate> coords;
  std::vector<double> analytic;
  for (auto* p : model.parameters()) {
    if (skip.count(p)) continue;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      coords.push_back({p, i});
      analytic.push_back(p->grad[i]);
    }
  }

  ModelGradCheckPass pass;
  pass.coordinates = coords.size();
  pass.report = grad_check_inplace(
      coords.size(), [&](std::size_t i, double delta) { coords[i].param->value[coords[i].offset] += delta; },
      [&] { return loss_of(false); }, [&](std::size_t i) { return analytic[i]; }, o.step);
  if (!coords.empty()) pass.worst_parameter = coords[pass.report.worst_index].param->name;
  return pass;
}

}  // namespace

ModelGradCheckResult run_model_gradcheck(const ArchConfig& arch, const InputDims& dims,
                                         const ModelGradCheckOptions& o) {
  if (o.batch < 2) throw std::invalid_argument("gradcheck: batch must be >= 2");
  RngStream master(o.seed);
  RngStream init_rng = master.derive("init");
  ConcadModel model(arch, dims, init_rng);

  RngStream data_rng = master.derive("data");
  ModelInputs inputs;
  const std::array<std::size_t, 3> lengths{dims.ecg, dims.rri, dims.rpe};
  for (std::size_t m = 0; m < 3; ++m) {
    inputs.x[m] = Tensor({o.batch, lengths[m], 1});
    for (auto& v : inputs.x[m].data()) v = data_rng.normal();
  }
  for (std::size_t b = 0; b < o.batch; ++b) inputs.labels.push_back(static_cast<int>(b % 2));

  ModelGradCheckResult result;
  std::set<const Parameter*> conv_biases;
  for (auto& e : model.extractors)
    for (auto& block : e.blocks()) conv_biases.insert(&block.bias);
  result.train = check(model, inputs, ForwardOptions{Mode::train, true, nullptr}, master.derive("dropout"),
                       conv_biases, o);

  // Nontrivial running statistics so the infer-mode normalization is not the identity.
  RngStream stats_rng = master.derive("stats");
  for (auto& e : model.extractors) {
    for (auto& block : e.blocks()) {
      for (auto& v : block.bn_state().running_mean.data()) v = 0.3 * stats_rng.normal();
      for (auto& v : block.bn_state().running_var.data()) v = 0.5 + stats_rng.uniform();
    }
  }
  result.infer = check(model, inputs, ForwardOptions{Mode::infer, true, nullptr}, master, {}, o);
  return result;
}

}  // namespace concad
