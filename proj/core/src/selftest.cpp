#include "concad/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <sstream>

#include "concad/dataset.hpp"
#include "concad/features.hpp"
#include "concad/folds.hpp"
#include "concad/gradcheck.hpp"
#include "concad/losses.hpp"
#include "concad/metrics.hpp"
#include "concad/model.hpp"
#include "concad/model_gradcheck.hpp"
#include "concad/ops.hpp"
#include "concad/optimizer.hpp"
#include "concad/synthetic.hpp"
#include "concad/training.hpp"
#include "concad/wfdb.hpp"

namespace concad {

namespace {

struct Failure {
  std::string what;
};

void expect(bool ok, const std::string& what) {
  if (!ok) throw Failure{what};
}

void expect_near(double got, double want, double tol, const std::string& what) {
  if (!(std::abs(got - want) <= tol)) {
    std::ostringstream os;
    os.precision(12);
    os << what << ": got " << got << ", want " << want << " (tol " << tol << ")";
    throw Failure{os.str()};
  }
}

template <typename F>
void expect_throws(F&& f, const std::string& what) {
  try {
    f();
  } catch (const Failure&) {
    throw;
  } catch (...) {
    return;
  }
  throw Failure{what + ": no error raised"};
}

Tensor random_tensor(Shape shape, RngStream& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

double dot(const Tensor& a, const Tensor& b) {
  return std::inner_product(a.data().begin(), a.data().end(), b.data().begin(), 0.0);
}

/// Checks d(sum r * f(x))/dx against `grad` via finite differences.
double layer_error(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, const Tensor& r,
                   const Tensor& grad) {
  return grad_check([&](const Tensor& p) { return dot(f(p), r); }, x, grad).max_rel_error;
}

std::string join(const std::vector<double>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

using Check = std::pair<std::string, std::function<void()>>;

std::vector<Check> tensor_checks() {
  std::vector<Check> c;
  c.emplace_back("conv1d identity kernel", [] {
    RngStream rng(1);
    const Tensor x = random_tensor({2, 5, 1}, rng);
    expect(conv1d(x, Tensor({1, 1, 1}, 1.0), Tensor({1}), 1) == x, "output differs from input");
  });
  c.emplace_back("conv1d difference kernel", [] {
    const Tensor y = conv1d(Tensor({1, 3, 1}, {1, 2, 4}), Tensor({2, 1, 1}, {-1, 1}), Tensor({1}), 1);
    expect(y.values() == std::vector<double>{1, 2}, "got [" + join(y.values()) + "]");
  });
  c.emplace_back("conv1d gradients", [] {
    RngStream rng(2);
    const Tensor x = random_tensor({2, 9, 2}, rng), k = random_tensor({3, 2, 3}, rng), b = random_tensor({3}, rng);
    const Tensor r = random_tensor({2, 4, 3}, rng);
    const auto g = conv1d_backward(x, k, 2, r);
    double err = layer_error([&](const Tensor& p) { return conv1d(p, k, b, 2); }, x, r, g.input);
    err = std::max(err, layer_error([&](const Tensor& p) { return conv1d(x, p, b, 2); }, k, r, g.kernel));
    err = std::max(err, layer_error([&](const Tensor& p) { return conv1d(x, k, p, 2); }, b, r, g.bias));
    expect(err < 1e-6, "max rel error " + std::to_string(err));
  });
  c.emplace_back("batchnorm constant input", [] {
    auto st = BatchNormState::for_channels(1);
    const Tensor y = batchnorm1d(Tensor({4, 3, 1}, 2.5), Tensor({1}, 1.0), Tensor({1}), st, Mode::train);
    for (double v : y.data()) expect(v == 0.0, "non-zero output");
  });
  c.emplace_back("batchnorm unit-variance input", [] {
    auto st = BatchNormState::for_channels(1);
    const Tensor y = batchnorm1d(Tensor({2, 1, 1}, {-1, 1}), Tensor({1}, 1.0), Tensor({1}), st, Mode::train);
    expect_near(y[0], -1.0, 1e-4, "y0");
    expect_near(y[1], 1.0, 1e-4, "y1");
  });
  c.emplace_back("batchnorm train statistics", [] {
    RngStream rng(3);
    Tensor x = random_tensor({4, 10, 3}, rng);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 3.0 * x[i] + 2.0;
    auto st = BatchNormState::for_channels(3);
    const Tensor y = batchnorm1d(x, Tensor({3}, 1.0), Tensor({3}), st, Mode::train);
    for (std::size_t ch = 0; ch < 3; ++ch) {
      double m = 0, v = 0;
      for (std::size_t i = ch; i < y.size(); i += 3) m += y[i];
      m /= 40.0;
      for (std::size_t i = ch; i < y.size(); i += 3) v += (y[i] - m) * (y[i] - m);
      v /= 40.0;
      expect_near(m, 0.0, 1e-6, "channel mean");
      expect_near(v, 1.0, 1e-5, "channel variance");  // epsilon shifts it by ~1e-5 / var
    }
  });
  c.emplace_back("maxpool examples", [] {
    MaxPoolCache cache;
    expect(maxpool1d(Tensor({1, 4, 1}, {1, 3, 2, 4}), 2).values() == std::vector<double>{3, 4}, "pool 2");
    const Tensor x({1, 3, 1}, {5, -1, 2});
    expect(maxpool1d(x, 1) == x, "pool 1");
    maxpool1d(Tensor({1, 2, 1}, {2, 2}), 2, &cache);
    const Tensor g = maxpool1d_backward(cache, Tensor({1, 1, 1}, 1.0));
    expect(g.values() == std::vector<double>{1, 0}, "tie gradient [" + join(g.values()) + "]");
  });
  c.emplace_back("dropout examples", [] {
    RngStream rng(4);
    const Tensor x = random_tensor({10}, rng);
    expect(dropout(x, 0.0, Mode::train, &rng) == x, "rate 0");
    expect(dropout(x, 0.7, Mode::infer, nullptr) == x, "infer mode");
    const Tensor ones({100000}, 1.0);
    const Tensor y = dropout(ones, 0.5, Mode::train, &rng);
    double kept = 0, mean = 0;
    for (double v : y.data()) {
      kept += v != 0.0;
      mean += v;
    }
    expect_near(kept / 1e5, 0.5, 0.01, "survivor fraction");
    expect_near(mean / 1e5, 1.0, 0.02, "mean");
    expect_throws([&] { dropout(x, 1.0, Mode::train, &rng); }, "rate 1");
  });
  c.emplace_back("dense examples and gradients", [] {
    const Tensor y = dense(Tensor({1, 2}, {1, 2}), Tensor({2, 2}, {1, 0, 0, 2}), Tensor({2}, {1, 1}));
    expect(y.values() == std::vector<double>{2, 5}, "hand arithmetic");
    RngStream rng(5);
    const Tensor x = random_tensor({3, 4}, rng), w = random_tensor({4, 2}, rng), b = random_tensor({2}, rng);
    const Tensor r = random_tensor({3, 2}, rng);
    const auto g = dense_backward(x, w, r);
    double err = layer_error([&](const Tensor& p) { return dense(p, w, b); }, x, r, g.input);
    err = std::max(err, layer_error([&](const Tensor& p) { return dense(x, p, b); }, w, r, g.weight));
    err = std::max(err, layer_error([&](const Tensor& p) { return dense(x, w, p); }, b, r, g.bias));
    expect(err < 1e-6, "max rel error " + std::to_string(err));
  });
  c.emplace_back("activations", [] {
    expect(relu(Tensor::from({-1, 0, 2})).values() == std::vector<double>{0, 0, 2}, "relu");
    const Tensor s = softmax(Tensor({1, 3}), 1);
    for (double v : s.data()) expect_near(v, 1.0 / 3.0, 1e-15, "softmax");
    const Tensor n = l2_normalize(Tensor({1, 2}, {3, 4}), 1);
    expect_near(n[0], 0.6, 1e-15, "l2 x");
    expect_near(n[1], 0.8, 1e-15, "l2 y");
    expect_throws([] { l2_normalize(Tensor({1, 2}), 1); }, "zero vector");
  });
  c.emplace_back("he_normal variance", [] {
    for (std::size_t fan_in : {50u, 2u}) {
      RngStream rng(6);
      const Tensor t = he_normal_init({100000}, fan_in, rng);
      double m = 0, v = 0;
      for (double x : t.data()) m += x;
      m /= 1e5;
      for (double x : t.data()) v += (x - m) * (x - m);
      v /= 1e5;
      const double want = 2.0 / static_cast<double>(fan_in);
      expect_near(v, want, 0.05 * want, "variance for fan_in " + std::to_string(fan_in));
    }
    RngStream a(9), b(9);
    expect(he_normal_init({32}, 4, a) == he_normal_init({32}, 4, b), "same seed differs");
  });
  c.emplace_back("amsgrad steps", [] {
    Parameter p("p", Tensor::from({0.0}));
    p.grad = Tensor::from({1.0});
    Parameter* ps[] = {&p};
    amsgrad_step(ps, {});
    expect_near(p.value[0], -0.005, 1e-9, "first step");
    Parameter q("q", Tensor::from({0.7}));
    Parameter* qs[] = {&q};
    for (int i = 0; i < 5; ++i) amsgrad_step(qs, {});
    expect(q.value[0] == 0.7, "zero gradient moved the parameter");
    Parameter t("t", Tensor::from({1.0}));
    Parameter* ts[] = {&t};
    for (int i = 0; i < 2000; ++i) {
      t.grad[0] = 2.0 * t.value[0];
      amsgrad_step(ts, {});
    }
    expect(std::abs(t.value[0]) < 0.01, "theta^2 not minimized: " + std::to_string(t.value[0]));
  });
  c.emplace_back("grad_check on sum of squares", [] {
    const auto r = grad_check(
        [](const Tensor& x) {
          double s = 0;
          for (double v : x.data()) s += v * v;
          return s;
        },
        Tensor::from({1, 2}), Tensor::from({2, 4}));
    expect(r.max_rel_error < 1e-8, "rel error " + std::to_string(r.max_rel_error));
  });
  return c;
}

double naive_sc(const Tensor& z, const std::vector<int>& y, double tau) {
  const std::size_t n = z.dim(0), d = z.dim(1);
  auto sim = [&](std::size_t i, std::size_t j) {
    double uv = 0, uu = 0, vv = 0;
    for (std::size_t k = 0; k < d; ++k) {
      uv += z.at(i, k) * z.at(j, k);
      uu += z.at(i, k) * z.at(i, k);
      vv += z.at(j, k) * z.at(j, k);
    }
    return uv / std::sqrt(uu * vv) / tau;
  };
  double total = 0;
  int anchors = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double denom = 0;
    for (std::size_t k = 0; k < n; ++k)
      if (k != i) denom += std::exp(sim(i, k));
    double term = 0;
    int pos = 0;
    for (std::size_t p = 0; p < n; ++p) {
      if (p == i || y[p] != y[i]) continue;
      term += -std::log(std::exp(sim(i, p)) / denom);
      ++pos;
    }
    if (pos) {
      total += term / pos;
      ++anchors;
    }
  }
  return anchors ? total / anchors : 0.0;
}

std::vector<Check> loss_checks() {
  std::vector<Check> c;
  c.emplace_back("cross-entropy examples", [] {
    expect_near(cross_entropy(Tensor({1, 2}, {0.5, 0.5}), std::vector<int>{1}).value, std::log(2.0), 1e-15, "ln 2");
    expect_near(cross_entropy(Tensor({1, 2}, {1, 0}), std::vector<int>{0}).value, 0.0, 1e-15, "certain");
    expect_near(cross_entropy(Tensor({2, 2}, {0.9, 0.1, 0.2, 0.8}), std::vector<int>{0, 1}).value,
                (-std::log(0.9) - std::log(0.8)) / 2, 1e-15, "batch of two");
  });
  c.emplace_back("cosine similarity examples", [] {
    const std::vector<double> a{1, 2}, o{-2, 1}, u{1, 0}, v{-1, 0};
    expect_near(cosine_similarity(a, a), 1.0, 1e-15, "same");
    expect_near(cosine_similarity(a, o), 0.0, 1e-15, "orthogonal");
    expect_near(cosine_similarity(u, v), -1.0, 1e-15, "opposite");
  });
  c.emplace_back("contrastive examples", [] {
    const Tensor z({2, 2}, {0.6, 0.8, 0.6, 0.8});
    expect_near(supervised_contrastive(z, std::vector<int>{1, 1}, 1.0).value, 0.0, 1e-15, "aligned pair");
    const auto d = supervised_contrastive(z, std::vector<int>{0, 1}, 1.0);
    expect(d.value == 0.0 && d.degenerate, "no positives should be degenerate");
    Tensor basis({4, 4});
    for (std::size_t i = 0; i < 4; ++i) basis.at(i, i) = 1.0;
    const std::vector<int> y{0, 0, 1, 1};
    expect_near(supervised_contrastive(basis, y, 0.5).value, naive_sc(basis, y, 0.5), 1e-10, "orthonormal rows");
    RngStream rng(7);
    const Tensor r = random_tensor({6, 3}, rng);
    const std::vector<int> y6{0, 1, 0, 1, 1, 0};
    expect_near(supervised_contrastive(r, y6, 0.3).value, naive_sc(r, y6, 0.3), 1e-10, "random rows");
  });
  c.emplace_back("hybrid examples", [] {
    LossValue ce{0.6, Tensor::from({1.0})};
    ContrastiveValue sc{0.4, Tensor::from({2.0}), false, 1};
    expect(hybrid(ce, sc, 1.0).value == 0.6, "lambda 1");
    expect(hybrid(ce, sc, 0.0).value == 0.4, "lambda 0");
    expect_near(hybrid(ce, sc, 0.5).value, 0.5, 1e-15, "lambda 0.5");
  });
  return c;
}

std::vector<Check> model_checks() {
  std::vector<Check> c;
  c.emplace_back("extractor shape arithmetic", [] {
    const auto ecg = ExtractorSpec::parse(
        "ConvBlock(64,100,20)-MaxPool(2)-Dropout(0.5)-ConvBlock(64,8,4)-MaxPool(2)-Dropout(0.5)-"
        "ConvBlock(128,4,2)-MaxPool(2)-Dropout(0.5)-ConvBlock(128,4,2)");
    const auto shape = ecg.output_shape(6000);
    expect(shape.first == 1 && shape.second == 128, "6000-sample ECG");
    expect(ecg.output_shape(30000).first == 10, "30000-sample ECG");
  });
  c.emplace_back("attention softmax examples", [] {
    RngStream rng(8);
    CrossAttention att({{{3, 2}, {3, 2}, {3, 2}}}, 2, rng);
    std::array<Tensor, 3> f;
    for (auto& t : f) t = random_tensor({1, 3, 2}, rng);
    for (auto& m : att.modality) m.w.value.fill(0.0);
    auto out = att.forward(f);
    for (std::size_t i = 0; i < 3; ++i) expect_near(out.alpha[i], 1.0 / 3.0, 1e-15, "equal logits");
    att.modality[0].b.value[0] = std::log(2.0);
    out = att.forward(f);
    expect_near(out.alpha[0], 0.5, 1e-15, "alpha ecg");
    expect_near(out.alpha[1], 0.25, 1e-15, "alpha rri");
  });
  c.emplace_back("model heads and census", [] {
    const auto arch = toy_gradcheck_arch();
    const auto dims = toy_gradcheck_dims();
    RngStream rng(9);
    ConcadModel model(arch, dims, rng);
    ModelInputs in;
    for (std::size_t m = 0; m < 3; ++m) {
      in.x[m] = random_tensor({3, m == 0 ? dims.ecg : dims.rri, 1}, rng);
    }
    const auto out = model.forward(in, ForwardOptions{Mode::infer, true, nullptr});
    for (std::size_t r = 0; r < 3; ++r) {
      expect_near(out.probs.at(r, 0) + out.probs.at(r, 1), 1.0, 1e-12, "probs sum");
      double n = 0;
      for (std::size_t k = 0; k < arch.proj_dim; ++k) n += out.z.at(r, k) * out.z.at(r, k);
      expect_near(std::sqrt(n), 1.0, 1e-12, "z norm");
      expect(out.probs.at(r, 0) > 0 && out.probs.at(r, 0) < 1, "probs range");
    }
    expect(model.parameter_count() == expected_parameter_count(arch, dims), "parameter census");
    expect(model.prediction_parameter_count() ==
               model.parameter_count() - arch.k * arch.proj_dim - arch.proj_dim,
           "prediction count");
  });
  c.emplace_back("full-model gradient check", [] {
    const auto r = run_model_gradcheck();
    expect(r.max_rel_error() < 1e-4, "max rel error " + std::to_string(r.max_rel_error()));
  });
  return c;
}

std::vector<Check> signal_checks() {
  std::vector<Check> c;
  c.emplace_back("WFDB format 16 gain", [] {
    const auto dir = std::filesystem::temp_directory_path() / "concad-selftest";
    std::filesystem::create_directories(dir);
    EcgRecord rec{"r16", 100.0, {0.5, -0.5, 0.0}};
    write_wfdb_record(dir / "r16", rec, RecordFormat::wfdb16, 200.0, 0);
    const auto back = read_record(dir / "r16", RecordFormat::wfdb16);
    expect(back.samples == rec.samples, "samples [" + join(back.samples) + "]");
    write_csv_record(dir / "r.csv", rec);
    expect(read_record(dir / "r.csv", RecordFormat::csv).samples == rec.samples, "CSV round trip");
    std::filesystem::remove_all(dir);
  });
  c.emplace_back("format 212 pairs", [] {
    expect(decode_format212(encode_format212({1, -1}), 2) == std::vector<int>{1, -1}, "decode");
  });
  c.emplace_back("annotation mapping", [] {
    AnnotationOptions o;
    const auto set = annotations_to_epochs({{0, "N", ""}, {6000, "A", ""}}, o);
    expect(set.labels.size() == 2 && set.labels[0].label == Label::normal && set.labels[1].label == Label::apnea,
           "epochs 0/1");
    expect_throws([&] { annotations_to_epochs({}, o); }, "empty annotations");
    expect(LabelMapping::mit_bih_psg().map("\"", "3 OA") == Label::apnea, "aux 3 OA");
  });
  c.emplace_back("R-peak detector on pulse trains", [] {
    RngStream rng(10);
    PulseTrainSpec spec;
    spec.snr_db = 20.0;
    const auto full = make_pulse_train(spec, rng);
    const auto peaks = detect_r_peaks(full.record);
    expect(peaks.size() == 60, "detections " + std::to_string(peaks.size()));
    for (std::size_t i = 0; i < peaks.size(); ++i) {
      expect(std::abs(static_cast<double>(peaks[i]) - static_cast<double>(full.centers[i])) <= 5.0, "placement");
    }
    spec.omit = {30};
    const auto gap = make_pulse_train(spec, rng);
    expect(detect_r_peaks(gap.record).size() == 59, "missing pulse");
    EcgRecord flat{"flat", 100.0, std::vector<double>(6000, 0.0)};
    expect(detect_r_peaks(flat).empty(), "flat signal");
  });
  c.emplace_back("RRI, median filter and cubic resampling", [] {
    const std::vector<std::size_t> peaks{100, 200, 310};
    const auto rr = rr_intervals(peaks, 100.0);
    expect_near(rr[0], 1.0, 1e-15, "rr0");
    expect_near(rr[1], 1.1, 1e-15, "rr1");
    const std::vector<double> spike{1, 1, 1, 5, 1, 1, 1};
    expect(median_filter(spike, 5) == std::vector<double>(7, 1.0), "spike removal");
    const std::vector<double> x{0, 1, 2, 3, 4};
    std::vector<double> y;
    for (double v : x) y.push_back(v * v * v);
    const CubicSpline s(x, y);
    for (int j = 0; j <= 8; ++j) expect_near(s(0.5 * j), std::pow(0.5 * j, 3), 1e-9, "cubic");
  });
  c.emplace_back("segmentation and HR filter", [] {
    PrepConfig cfg;
    EcgRecord rec{"s", 100.0, std::vector<double>(7 * 3600 * 100, 0.0)};
    AnnotationSet ann;
    for (int e = 0; e < 420; ++e) ann.labels.push_back({e, Label::normal});
    std::vector<std::size_t> peaks;
    for (std::size_t p = 50; p < rec.samples.size(); p += 100) peaks.push_back(p);
    expect(segment_with_context(rec, ann, peaks, cfg).segments.size() == 420, "420 bundles");
    for (std::size_t i = 0; i < 3 * 6000; ++i) rec.samples[i] = static_cast<double>(i / 6000);
    cfg.context = 2;
    const auto seg = segment_with_context(rec, ann, peaks, cfg);
    const auto& ecg = seg.segments[0].bundle.ecg;
    expect(ecg.size() == 30000, "ecg length");
    const double want[5] = {0, 0, 0, 1, 2};
    for (int w = 0; w < 5; ++w) expect(ecg[static_cast<std::size_t>(w) * 6000] == want[w], "replicate padding");
    auto kept = filter_unreasonable_hr(seg.segments, cfg);
    expect(kept.dropped == 0, "60 bpm kept");
    std::vector<std::size_t> sparse{1000, 4000};
    kept = filter_unreasonable_hr(segment_with_context(rec, ann, sparse, cfg).segments, cfg);
    expect(kept.kept.empty(), "2 peaks per minute dropped");
  });
  c.emplace_back("augmentation identities", [] {
    SegmentBundle b;
    for (int i = 0; i < 20; ++i) b.ecg.push_back(i * 0.5);
    b.rri = {1, 2, 3, 4};
    b.rpe = {5, 6, 7, 8};
    expect(reverse_bundle(reverse_bundle(b)) == b, "reverse involution");
    expect(circular_shift(circular_shift(b.ecg, 7), 13) == b.ecg, "shift inverse");
    RngStream rng(11);
    AugmentationSpec spec;
    for (int i = 0; i < 10; ++i) {
      auto a = augment(b, spec, rng);
      auto e1 = a.ecg, e0 = b.ecg;
      std::sort(e1.begin(), e1.end());
      std::sort(e0.begin(), e0.end());
      expect(e1 == e0 && a.label == b.label && a.rri.size() == 4, "multiset / label / length");
    }
  });
  return c;
}

std::vector<Check> train_checks() {
  std::vector<Check> c;
  c.emplace_back("batch construction", [] {
    std::vector<SegmentBundle> set(10);
    for (std::size_t i = 0; i < set.size(); ++i) {
      set[i].ecg = {double(i), 1, 2, 3, 4, 5, 6, 7, 8, 9};
      set[i].label = label_from_index(static_cast<int>(i % 2));
    }
    AugmentationSpec spec;
    RngStream a(12), b(12), e(0);
    const auto batches = make_batches(set, 4, &spec, a, BatchMode::train);
    expect(batches[0].items.size() == 8, "doubled batch");
    const auto again = make_batches(set, 4, &spec, b, BatchMode::train);
    for (std::size_t i = 0; i < batches.size(); ++i) expect(batches[i].source == again[i].source, "determinism");
    const auto eval = make_batches(set, 4, nullptr, e, BatchMode::eval);
    std::size_t next = 0;
    for (const auto& bt : eval)
      for (auto s : bt.source) expect(s == next++, "eval order");
  });
  c.emplace_back("metrics examples", [] {
    auto r = metrics_from_confusion({{{10, 0}, {0, 10}}});
    expect(r.accuracy == 1.0 && r.macro_f1 == 1.0, "perfect");
    r = metrics_from_confusion({{{70, 0}, {30, 0}}});
    expect_near(r.accuracy, 0.7, 1e-15, "majority accuracy");
    expect_near(r.macro_f1, (140.0 / 170.0) / 2.0, 1e-12, "majority macro F1");
    r = metrics_from_confusion({{{50, 10}, {5, 35}}});
    expect_near(r.accuracy, 0.85, 1e-15, "accuracy");
    expect_near(r.macro_f1, (100.0 / 115.0 + 70.0 / 85.0) / 2.0, 1e-12, "macro F1");
  });
  c.emplace_back("folds and subsets", [] {
    std::vector<SegmentBundle> set(100);
    for (std::size_t i = 0; i < set.size(); ++i) set[i].record_id = "r" + std::to_string(i % 12);
    const auto plan = kfold_split(set, 10, FoldMode::segment, 3);
    std::vector<int> seen(100, 0);
    for (const auto& f : plan.folds) {
      expect(f.size() == 10, "fold size");
      for (auto i : f) ++seen[i];
    }
    expect(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }), "partition");
    expect(kfold_split(set, 10, FoldMode::segment, 3).folds == plan.folds, "same seed");
    std::vector<SegmentBundle> strat(1000);
    for (std::size_t i = 0; i < 1000; ++i) strat[i].label = i < 600 ? Label::normal : Label::apnea;
    const auto sub = subset_fraction(strat, 0.1, 4);
    const auto apnea = std::count_if(sub.indices.begin(), sub.indices.end(), [](std::size_t i) { return i >= 600; });
    expect(sub.indices.size() == 100 && apnea == 40, "60/40 split");
    expect(subset_fraction(strat, 1.0, 4).indices.size() == 1000, "fraction 1");
  });
  return c;
}

}  // namespace

std::vector<SelfTestResult> run_selftest(const std::function<void(const SelfTestResult&)>& on_result) {
  std::vector<Check> checks;
  for (auto&& group : {tensor_checks(), loss_checks(), model_checks(), signal_checks(), train_checks()}) {
    checks.insert(checks.end(), group.begin(), group.end());
  }
  std::vector<SelfTestResult> results;
  for (const auto& [name, fn] : checks) {
    SelfTestResult r{name, false, {}};
    try {
      fn();
      r.passed = true;
    } catch (const Failure& f) {
      r.detail = f.what;
    } catch (const std::exception& e) {
      r.detail = std::string("exception: ") + e.what();
    }
    if (on_result) on_result(r);
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace concad
