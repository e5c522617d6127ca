#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "concad/arch_config.hpp"
#include "concad/model.hpp"
#include "concad/model_gradcheck.hpp"
#include "test_util.hpp"

using namespace concad;
using concad::test_util::dot;
using concad::test_util::random_tensor;

namespace {

ModelInputs random_inputs(const InputDims& dims, std::size_t batch, RngStream& rng) {
  ModelInputs in;
  in.x[kEcg] = random_tensor({batch, dims.ecg, 1}, rng);
  in.x[kRri] = random_tensor({batch, dims.rri, 1}, rng);
  in.x[kRpe] = random_tensor({batch, dims.rpe, 1}, rng);
  for (std::size_t b = 0; b < batch; ++b) in.labels.push_back(static_cast<int>(b % 2));
  return in;
}

ModelInputs slice_rows(const ModelInputs& in, const std::vector<std::size_t>& rows) {
  ModelInputs out;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& x = in.x[i];
    out.x[i] = Tensor({rows.size(), x.dim(1), 1});
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t t = 0; t < x.dim(1); ++t) out.x[i].at(r, t, 0) = x.at(rows[r], t, 0);
  }
  for (auto r : rows) out.labels.push_back(in.labels[r]);
  return out;
}

}  // namespace

TEST(ArchConfig, ParseRoundTrip) {
  const auto spec = ExtractorSpec::parse("ConvBlock(64,100,20)-MaxPool(2)-Dropout(0.5)-ConvBlock(64,8,4)");
  ASSERT_EQ(spec.blocks.size(), 2u);
  EXPECT_EQ(spec.blocks[0].filters, 64u);
  EXPECT_EQ(spec.blocks[0].kernel, 100u);
  EXPECT_EQ(spec.blocks[0].stride, 20u);
  EXPECT_EQ(spec.blocks[0].pool, 2u);
  EXPECT_EQ(spec.blocks[0].dropout, 0.5);
  EXPECT_FALSE(spec.blocks[1].has_pool());
  EXPECT_EQ(ExtractorSpec::parse(spec.to_string()), spec);

  const auto arch = toy_gradcheck_arch();
  EXPECT_EQ(ArchConfig::parse(arch.to_text()), arch);
}

TEST(ArchConfig, RejectsMalformed) {
  EXPECT_THROW(ExtractorSpec::parse("ConvBlock(4,3)"), std::invalid_argument);
  EXPECT_THROW(ExtractorSpec::parse("MaxPool(2)-ConvBlock(4,3,1)"), std::invalid_argument);
  EXPECT_THROW(ExtractorSpec::parse("ConvBlock(4,3,1)-MaxPool(2)").validate(), std::invalid_argument);
  EXPECT_THROW(ExtractorSpec::parse("ConvBlock(4,3,1)-Dropout(1.5)-ConvBlock(4,3,1)").validate(),
               std::invalid_argument);
  EXPECT_THROW(ArchConfig::parse("ecg = ConvBlock(4,3,1)\nk = 4\n"), std::invalid_argument);
  EXPECT_THROW(ArchConfig::parse("bogus = 1\n"), std::invalid_argument);
}

TEST(ArchConfig, ApneaEcgShapes) {
  const auto arch = ArchConfig::load(CONCAD_CONFIG_DIR "/apnea_ecg.arch");
  // 6000 -> conv 296 -> pool 148 -> conv 36 -> pool 18 -> conv 8 -> pool 4 -> conv 1
  EXPECT_EQ(arch.ecg.output_shape(6000), (std::pair<std::size_t, std::size_t>{1, 128}));
  // 30000 -> 1496 -> 748 -> 186 -> 93 -> 45 -> 22 -> 10
  EXPECT_EQ(arch.ecg.output_shape(30000).first, 10u);
  // 180 -> 44 -> 22 -> 10 -> 5 -> 4 -> 2 -> 1
  EXPECT_EQ(arch.rri.output_shape(180), (std::pair<std::size_t, std::size_t>{1, 128}));
  EXPECT_THROW(arch.ecg.output_shape(500), std::invalid_argument);
}

TEST(ArchConfig, MitBihPsgShapes) {
  const auto arch = ArchConfig::load(CONCAD_CONFIG_DIR "/mitbih_psg.arch");
  ASSERT_EQ(arch.ecg.blocks.size(), 7u);
  // Five 30 s epochs at 250 Hz: 37500 -> 7489 -> 3744 -> 1246 -> 413 -> 206 -> 102 -> 50 -> 25 -> 22 -> 19
  EXPECT_EQ(arch.ecg.output_shape(37500), (std::pair<std::size_t, std::size_t>{19, 128}));
  // A single epoch exhausts the time axis before the last block.
  EXPECT_THROW(arch.ecg.output_shape(7500), std::invalid_argument);
}

TEST(Extractor, ConstantInputGivesTimeInvariantOutput) {
  RngStream rng(1);
  Extractor ex(ExtractorSpec::parse("ConvBlock(4,5,2)-MaxPool(2)-ConvBlock(3,3,1)"), "ecg", rng);
  for (auto& blk : ex.blocks()) {
    blk.beta.value = random_tensor({blk.spec().filters}, rng);
    blk.bn_state().running_mean = random_tensor({blk.spec().filters}, rng, 0.2);
  }
  const auto y = ex.forward(Tensor({2, 40, 1}), Mode::infer, nullptr);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t t = 1; t < y.dim(1); ++t)
      for (std::size_t c = 0; c < y.dim(2); ++c) EXPECT_DOUBLE_EQ(y.at(b, t, c), y.at(b, 0, c));
  // First block: conv of zeros is 0, so the output is relu(beta - gamma * mean / sqrt(var + eps)).
  Extractor single(ExtractorSpec::parse("ConvBlock(3,3,1)"), "x", rng);
  auto& blk = single.blocks()[0];
  blk.beta.value = Tensor::from({0.5, -0.5, 0.2});
  const auto z = single.forward(Tensor({1, 6, 1}), Mode::infer, nullptr);
  EXPECT_DOUBLE_EQ(z.at(0, 2, 0), 0.5);
  EXPECT_DOUBLE_EQ(z.at(0, 2, 1), 0.0);
  EXPECT_DOUBLE_EQ(z.at(0, 2, 2), 0.2);
}

TEST(Extractor, GradientCheckTwoBlocks) {
  RngStream rng(2);
  Extractor ex(ExtractorSpec::parse("ConvBlock(3,4,2)-MaxPool(2)-ConvBlock(2,3,1)"), "rri", rng);
  auto x = random_tensor({3, 30, 1}, rng);
  const auto y0 = ex.forward(x, Mode::train, nullptr);
  const auto r = random_tensor(y0.shape(), rng);
  const auto snapshot = ex.blocks();
  auto reset_bn = [&] {
    for (std::size_t i = 0; i < snapshot.size(); ++i) ex.blocks()[i].bn_state() = snapshot[i].bn_state();
  };
  auto loss = [&] {
    reset_bn();
    return dot(ex.forward(x, Mode::train, nullptr), r);
  };

  for (auto* p : ex.parameters()) p->zero_grad();
  loss();
  const auto dx = ex.backward(r);
  const auto input_report = grad_check(
      [&](const Tensor& p) {
        reset_bn();
        return dot(ex.forward(p, Mode::train, nullptr), r);
      },
      x, dx);
  EXPECT_LT(input_report.max_rel_error, 1e-5);

  for (auto* p : ex.parameters()) {
    if (p->name.find(".bias") != std::string::npos) {
      // Batch statistics remove any constant per-channel shift.
      for (double g : p->grad.data()) EXPECT_NEAR(g, 0.0, 1e-10);
      continue;
    }
    const Tensor analytic = p->grad;
    const auto report = grad_check_inplace(
        p->value.size(), [&](std::size_t i, double d) { p->value[i] += d; }, loss,
        [&](std::size_t i) { return analytic[i]; });
    EXPECT_LT(report.max_rel_error, 1e-5) << p->name;
  }
}

TEST(Attention, EqualLogitsAverage) {
  RngStream rng(3);
  CrossAttention att({{{2, 3}, {4, 2}, {3, 3}}}, 5, rng);
  for (auto& P : att.modality) {
    P.w.value.fill(0.0);
    P.b.value.fill(0.0);
  }
  const std::array<Tensor, 3> f{random_tensor({2, 2, 3}, rng), random_tensor({2, 4, 2}, rng),
                                random_tensor({2, 3, 3}, rng)};
  const auto out = att.forward(f);
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(out.alpha.at(b, i), 1.0 / 3.0, 1e-15);
    for (std::size_t j = 0; j < 5; ++j) {
      const double mean = (out.projected[0].at(b, j) + out.projected[1].at(b, j) + out.projected[2].at(b, j)) / 3.0;
      EXPECT_NEAR(out.context.at(b, j), mean, 1e-12);
    }
  }
}

TEST(Attention, BiasShiftsWeights) {
  RngStream rng(4);
  CrossAttention att({{{2, 2}, {2, 2}, {2, 2}}}, 3, rng);
  for (auto& P : att.modality) P.w.value.fill(0.0);
  att.modality[0].b.value[0] = std::log(2.0);
  att.modality[1].b.value[0] = 0.0;
  att.modality[2].b.value[0] = 0.0;
  const std::array<Tensor, 3> f{random_tensor({1, 2, 2}, rng), random_tensor({1, 2, 2}, rng),
                                random_tensor({1, 2, 2}, rng)};
  const auto out = att.forward(f);
  EXPECT_NEAR(out.alpha.at(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(out.alpha.at(0, 1), 0.25, 1e-15);
  EXPECT_NEAR(out.alpha.at(0, 2), 0.25, 1e-15);
}

TEST(Attention, MatchesScalarLoopAndGradients) {
  RngStream rng(5);
  const std::size_t k = 2, m = 3, n = 2, batch = 2;
  CrossAttention att({{{m, n}, {m, n}, {m, n}}}, k, rng);
  for (auto& P : att.modality) P.b.value[0] = rng.normal();
  const std::array<Tensor, 3> f{random_tensor({batch, m, n}, rng), random_tensor({batch, m, n}, rng),
                                random_tensor({batch, m, n}, rng)};
  const auto out = att.forward(f);

  for (std::size_t b = 0; b < batch; ++b) {
    double proj[3][2] = {};
    double logit[3] = {};
    for (std::size_t i = 0; i < 3; ++i) {
      const auto& P = att.modality[i];
      for (std::size_t j = 0; j < k; ++j)
        for (std::size_t t = 0; t < m; ++t)
          for (std::size_t c = 0; c < n; ++c) proj[i][j] += P.u.value[t] * f[i].at(b, t, c) * P.v.value.at(c, j);
      logit[i] = P.b.value[0];
      for (std::size_t j = 0; j < k; ++j) logit[i] += P.w.value[j] * proj[i][j];
    }
    const double z = std::exp(logit[0]) + std::exp(logit[1]) + std::exp(logit[2]);
    for (std::size_t j = 0; j < k; ++j) {
      double c = 0.0;
      for (std::size_t i = 0; i < 3; ++i) c += std::exp(logit[i]) / z * proj[i][j];
      EXPECT_NEAR(out.context.at(b, j), c, 1e-12);
    }
  }

  const auto r = random_tensor({batch, k}, rng);
  for (auto* p : att.parameters()) p->zero_grad();
  const auto d = att.backward(r);
  for (std::size_t i = 0; i < 3; ++i) {
    auto fi = f;
    const auto numeric = test_util::numeric_gradient(
        [&](const Tensor& p) {
          fi[i] = p;
          return dot(att.forward(fi).context, r);
        },
        f[i]);
    // Finite differences resolve ~1e-10 absolute, so tiny coordinates are compared absolutely.
    EXPECT_TRUE(test_util::gradients_agree(d[i], numeric, 1e-6, 1e-4, 1e-9));
  }
  for (auto* p : att.parameters()) {
    const Tensor analytic = p->grad;
    const auto report = grad_check_inplace(
        p->value.size(), [&](std::size_t i, double dd) { p->value[i] += dd; },
        [&] { return dot(att.forward(f).context, r); }, [&](std::size_t i) { return analytic[i]; });
    EXPECT_LT(report.max_rel_error, 1e-6) << p->name << " " << report.worst_analytic << " " << report.worst_numeric;
  }
}

TEST(Model, OutputsAreNormalized) {
  RngStream init(6);
  ConcadModel model(toy_gradcheck_arch(), toy_gradcheck_dims(), init);
  RngStream rng(7);
  const auto in = random_inputs(toy_gradcheck_dims(), 5, rng);
  RngStream drop(8);
  const auto out = model.forward(in, ForwardOptions::train(drop));
  for (std::size_t b = 0; b < 5; ++b) {
    EXPECT_NEAR(out.probs.at(b, 0) + out.probs.at(b, 1), 1.0, 1e-12);
    EXPECT_GT(out.probs.at(b, 0), 0.0);
    EXPECT_LT(out.probs.at(b, 0), 1.0);
    double sq = 0.0;
    for (std::size_t c = 0; c < out.z.dim(1); ++c) sq += out.z.at(b, c) * out.z.at(b, c);
    EXPECT_NEAR(std::sqrt(sq), 1.0, 1e-12);
    double a = 0.0;
    for (std::size_t i = 0; i < 3; ++i) a += out.attention.alpha.at(b, i);
    EXPECT_NEAR(a, 1.0, 1e-12);
  }
  EXPECT_TRUE(model.forward(in, ForwardOptions::predict()).z.empty());
}

TEST(Model, ParameterCensus) {
  const auto arch = toy_gradcheck_arch();
  const auto dims = toy_gradcheck_dims();
  RngStream init(9);
  ConcadModel model(arch, dims, init);
  // Hand count. ecg: conv 5*1*4+4, bn 8, conv 3*4*4+4, bn 8 -> 24+8+52+8 = 92.
  // rri/rpe: conv 3*1*3+3, bn 6, conv 3*3*3+3, bn 6 -> 12+6+30+6 = 54 each.
  // Feature shapes: ecg 48 -> 22 -> 11 -> 9 (m 9, n 4); rri 20 -> 18 -> 9 -> 7 (m 7, n 3).
  // attention: ecg 9+4*6+6+1 = 40, rri/rpe 7+3*6+6+1 = 32 each.
  // projection 6*4+4 = 28; classifier 6*5+5 + 5*2+2 = 47.
  const std::size_t extractors = 92 + 54 + 54, attention = 40 + 32 + 32, projection = 28, classifier = 47;
  EXPECT_EQ(model.parameter_count(), extractors + attention + projection + classifier);
  EXPECT_EQ(model.prediction_parameter_count(), model.parameter_count() - projection);
  EXPECT_EQ(expected_parameter_count(arch, dims), model.parameter_count());
  EXPECT_EQ(expected_parameter_count(arch, dims, false), model.prediction_parameter_count());

  const auto apnea = ArchConfig::load(CONCAD_CONFIG_DIR "/apnea_ecg.arch");
  RngStream init2(1);
  ConcadModel big(apnea, {6000, 180, 180}, init2);
  EXPECT_EQ(big.parameter_count(), expected_parameter_count(apnea, {6000, 180, 180}));
  EXPECT_EQ(big.parameter_count() - big.prediction_parameter_count(), 64u * 32u + 32u);
}

TEST(Model, SameSeedSameModel) {
  RngStream a(11), b(11);
  ConcadModel m1(toy_gradcheck_arch(), toy_gradcheck_dims(), a);
  ConcadModel m2(toy_gradcheck_arch(), toy_gradcheck_dims(), b);
  const auto c1 = m1.to_checkpoint(), c2 = m2.to_checkpoint();
  ASSERT_EQ(c1.tensors.size(), c2.tensors.size());
  for (std::size_t i = 0; i < c1.tensors.size(); ++i) EXPECT_EQ(c1.tensors[i].tensor, c2.tensors[i].tensor);
}

TEST(Model, InferModeIsBatchIndependent) {
  RngStream init(12);
  ConcadModel model(toy_gradcheck_arch(), toy_gradcheck_dims(), init);
  RngStream rng(13);
  const auto in = random_inputs(toy_gradcheck_dims(), 4, rng);
  ForwardOptions opts = ForwardOptions::predict();
  opts.projection = true;
  const auto base = model.forward(in, opts);

  const auto dup = slice_rows(in, {2, 2, 0});
  const auto d = model.forward(dup, opts);
  for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(d.probs.at(0, c), d.probs.at(1, c));
  for (std::size_t c = 0; c < d.z.dim(1); ++c) EXPECT_EQ(d.z.at(0, c), d.z.at(1, c));

  const std::vector<std::size_t> perm{3, 1, 0, 2};
  const auto p = model.forward(slice_rows(in, perm), opts);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(p.probs.at(r, c), base.probs.at(perm[r], c), 1e-14);
    for (std::size_t c = 0; c < p.z.dim(1); ++c) EXPECT_NEAR(p.z.at(r, c), base.z.at(perm[r], c), 1e-14);
  }
}

TEST(Model, EndToEndGradientCheck) {
  const auto result = run_model_gradcheck();
  EXPECT_LT(result.train.report.max_rel_error, 1e-4) << result.train.worst_parameter;
  EXPECT_LT(result.infer.report.max_rel_error, 1e-4) << result.infer.worst_parameter;
  RngStream init(0);
  ConcadModel model(toy_gradcheck_arch(), toy_gradcheck_dims(), init);
  EXPECT_EQ(result.infer.coordinates, model.parameter_count());
}

TEST(Model, EndToEndGradientCheckLiteralLoss) {
  ModelGradCheckOptions o;
  o.sc_include_anchor = true;
  o.seed = 3;
  EXPECT_LT(run_model_gradcheck(o).max_rel_error(), 1e-4);
}

TEST(Model, CheckpointRestoresPredictions) {
  RngStream init(14);
  ConcadModel model(toy_gradcheck_arch(), toy_gradcheck_dims(), init);
  RngStream rng(15);
  const auto in = random_inputs(toy_gradcheck_dims(), 3, rng);
  RngStream drop(1);
  model.forward(in, ForwardOptions::train(drop));  // moves the running statistics
  model.scaler().mean = {0.1, 0.9, 1.2};
  model.scaler().stddev = {2.0, 0.1, 0.3};

  const auto path = std::filesystem::temp_directory_path() / "concad_test_model.ckpt";
  write_checkpoint(path, model.to_checkpoint("note = x\n"));
  auto restored = ConcadModel::from_checkpoint(read_checkpoint(path));
  std::filesystem::remove(path);
  EXPECT_EQ(restored.arch(), model.arch());
  EXPECT_EQ(restored.dims(), model.dims());
  EXPECT_EQ(restored.scaler().stddev, model.scaler().stddev);
  EXPECT_EQ(restored.forward(in, ForwardOptions::predict()).probs, model.forward(in, ForwardOptions::predict()).probs);
}

TEST(Model, RejectsWrongInputLength) {
  RngStream init(16);
  ConcadModel model(toy_gradcheck_arch(), toy_gradcheck_dims(), init);
  RngStream rng(17);
  const auto in = random_inputs({50, 20, 20}, 2, rng);
  EXPECT_THROW(model.forward(in, ForwardOptions::predict()), std::invalid_argument);
}
