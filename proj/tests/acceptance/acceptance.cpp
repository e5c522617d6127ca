// One line per acceptance criterion: PASS, FAIL or SKIPPED, then the measured values.
// Exit status is non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "concad/cli.hpp"
#include "concad/features.hpp"
#include "concad/folds.hpp"
#include "concad/losses.hpp"
#include "concad/manifest.hpp"
#include "concad/model.hpp"
#include "concad/model_gradcheck.hpp"
#include "concad/ops.hpp"
#include "concad/qrs_detector.hpp"
#include "concad/synthetic.hpp"
#include "concad/training.hpp"

namespace fs = std::filesystem;
using namespace concad;

namespace {

enum class Status { pass, fail, skipped };

struct Outcome {
  Status status = Status::pass;
  std::string detail;
};

// Collects sub-check results into one outcome.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) {
      failed_ = true;
      failures_.push_back(what);
    }
  }
  void note(const std::string& s) { notes_.push_back(s); }

  Outcome outcome() const {
    std::ostringstream os;
    const auto& parts = failed_ ? failures_ : notes_;
    for (std::size_t i = 0; i < parts.size(); ++i) os << (i ? "; " : "") << parts[i];
    return {failed_ ? Status::fail : Status::pass, os.str()};
  }

 private:
  bool failed_ = false;
  std::vector<std::string> failures_;
  std::vector<std::string> notes_;
};

std::string fmt(double v, int precision = 3) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor random_tensor(Shape shape, RngStream& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = scale * rng.normal();
  return t;
}

double dot(const Tensor& a, const Tensor& b) {
  return std::inner_product(a.data().begin(), a.data().end(), b.data().begin(), 0.0);
}

double layer_error(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, const Tensor& r,
                   const Tensor& grad) {
  return grad_check([&](const Tensor& p) { return dot(f(p), r); }, x, grad).max_rel_error;
}

std::string config_path(const std::string& name) { return (fs::path(CONCAD_CONFIG_DIR) / name).string(); }

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int run_cli(const std::vector<std::string>& args, std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (err_text) *err_text = err.str();
  return code;
}

// ---------------------------------------------------------------------------

Outcome gradient_integrity() {
  Checks c;
  const auto t0 = std::chrono::steady_clock::now();
  RngStream rng(11);
  std::vector<std::pair<std::string, double>> layers;

  {
    const auto x = random_tensor({2, 9, 3}, rng), k = random_tensor({3, 3, 4}, rng), b = random_tensor({4}, rng);
    const auto r = random_tensor({2, 4, 4}, rng);
    const auto g = conv1d_backward(x, k, 2, r);
    layers.emplace_back("conv1d input", layer_error([&](const Tensor& p) { return conv1d(p, k, b, 2); }, x, r, g.input));
    layers.emplace_back("conv1d kernel",
                        layer_error([&](const Tensor& p) { return conv1d(x, p, b, 2); }, k, r, g.kernel));
    layers.emplace_back("conv1d bias", layer_error([&](const Tensor& p) { return conv1d(x, k, p, 2); }, b, r, g.bias));
  }
  for (Mode mode : {Mode::train, Mode::infer}) {
    const auto x = random_tensor({3, 5, 2}, rng), gamma = random_tensor({2}, rng), beta = random_tensor({2}, rng);
    const auto r = random_tensor({3, 5, 2}, rng);
    auto state = BatchNormState::for_channels(2);
    state.running_mean = random_tensor({2}, rng);
    state.running_var = Tensor::from({0.7, 1.9});
    auto run = [&](const Tensor& in, const Tensor& ga, const Tensor& be) {
      auto s = state;
      return batchnorm1d(in, ga, be, s, mode);
    };
    auto s = state;
    BatchNormCache cache;
    batchnorm1d(x, gamma, beta, s, mode, &cache);
    const auto g = batchnorm1d_backward(cache, gamma, r);
    const std::string tag = mode == Mode::train ? "batchnorm train" : "batchnorm infer";
    layers.emplace_back(tag + " input",
                        layer_error([&](const Tensor& p) { return run(p, gamma, beta); }, x, r, g.input));
    layers.emplace_back(tag + " gamma",
                        layer_error([&](const Tensor& p) { return run(x, p, beta); }, gamma, r, g.gamma));
    layers.emplace_back(tag + " beta", layer_error([&](const Tensor& p) { return run(x, gamma, p); }, beta, r, g.beta));
  }
  {
    const auto x = random_tensor({2, 8, 3}, rng), r = random_tensor({2, 4, 3}, rng);
    MaxPoolCache cache;
    maxpool1d(x, 2, &cache);
    layers.emplace_back("maxpool", layer_error([](const Tensor& p) { return maxpool1d(p, 2); }, x, r,
                                               maxpool1d_backward(cache, r)));
  }
  {
    const auto x = random_tensor({2, 6, 3}, rng), r = random_tensor({2, 6, 3}, rng);
    Tensor mask;
    RngStream drop(5);
    dropout(x, 0.4, Mode::train, &drop, &mask);
    layers.emplace_back("dropout", layer_error(
                                       [&](const Tensor& p) {
                                         Tensor y = p;
                                         for (std::size_t i = 0; i < y.size(); ++i) y[i] *= mask[i];
                                         return y;
                                       },
                                       x, r, dropout_backward(mask, r)));
  }
  {
    const auto x = random_tensor({3, 4}, rng), w = random_tensor({4, 5}, rng), b = random_tensor({5}, rng);
    const auto r = random_tensor({3, 5}, rng);
    const auto g = dense_backward(x, w, r);
    layers.emplace_back("dense input", layer_error([&](const Tensor& p) { return dense(p, w, b); }, x, r, g.input));
    layers.emplace_back("dense weight", layer_error([&](const Tensor& p) { return dense(x, p, b); }, w, r, g.weight));
    layers.emplace_back("dense bias", layer_error([&](const Tensor& p) { return dense(x, w, p); }, b, r, g.bias));
  }
  {
    auto x = random_tensor({4, 5}, rng);
    for (auto& v : x.data())
      if (std::abs(v) < 0.05) v = 0.3;  // keep away from the kink
    const auto r = random_tensor({4, 5}, rng);
    layers.emplace_back("relu", layer_error([](const Tensor& p) { return relu(p); }, x, r, relu_backward(x, r)));
    const auto y = softmax(x, 1);
    layers.emplace_back("softmax", layer_error([](const Tensor& p) { return softmax(p, 1); }, x, r,
                                               softmax_backward(y, r, 1)));
    const auto n = l2_normalize(x, 1);
    layers.emplace_back("l2 normalize", layer_error([](const Tensor& p) { return l2_normalize(p, 1); }, x, r,
                                                    l2_normalize_backward(x, n, r, 1)));
  }
  {
    // Attention parameters, coordinate by coordinate.
    CrossAttention att({{{3, 2}, {4, 2}, {2, 3}}}, 3, rng);
    for (auto& P : att.modality) P.b.value[0] = rng.normal();
    const std::array<Tensor, 3> f{random_tensor({2, 3, 2}, rng), random_tensor({2, 4, 2}, rng),
                                  random_tensor({2, 2, 3}, rng)};
    const auto r = random_tensor({2, 3}, rng);
    auto params = att.parameters();
    for (auto* p : params) p->zero_grad();
    att.forward(f);
    att.backward(r);
    std::vector<std::pair<Parameter*, std::size_t>> coords;
    for (auto* p : params)
      for (std::size_t i = 0; i < p->value.size(); ++i) coords.emplace_back(p, i);
    const auto rep = grad_check_inplace(
        coords.size(), [&](std::size_t i, double d) { coords[i].first->value[coords[i].second] += d; },
        [&] { return dot(att.forward(f).context, r); },
        [&](std::size_t i) { return coords[i].first->grad[coords[i].second]; });
    layers.emplace_back("attention parameters", rep.max_rel_error);
  }
  {
    const auto logits = random_tensor({6, 2}, rng);
    const std::vector<int> y{0, 1, 1, 0, 1, 0};
    const auto ce = cross_entropy_with_logits(logits, y);
    layers.emplace_back("cross-entropy", grad_check([&](const Tensor& p) { return cross_entropy_with_logits(p, y).value; },
                                                    logits, ce.grad)
                                             .max_rel_error);
    const auto z = random_tensor({6, 3}, rng);
    for (bool include : {false, true}) {
      const auto sc = supervised_contrastive(z, y, 0.5, include);
      layers.emplace_back(include ? "contrastive (anchor included)" : "contrastive",
                          grad_check([&](const Tensor& p) { return supervised_contrastive(p, y, 0.5, include).value; },
                                     z, sc.grad)
                              .max_rel_error);
    }
  }

  double worst = 0.0;
  std::string worst_name;
  for (const auto& [name, err] : layers) {
    c.expect(err < 1e-6, name + " rel error " + fmt(err));
    if (err >= worst) {
      worst = err;
      worst_name = name;
    }
  }
  const auto e2e = run_model_gradcheck();
  const double e2e_err = e2e.max_rel_error();
  c.expect(e2e_err < 1e-4, "end-to-end rel error " + fmt(e2e_err) + " (" + e2e.train.worst_parameter + ")");
  const double elapsed = seconds_since(t0);
  c.expect(elapsed < 60.0, "took " + fmt(elapsed) + " s");
  c.note("end-to-end " + fmt(e2e_err) + " over " + std::to_string(e2e.train.coordinates + e2e.infer.coordinates) +
         " coordinates (< 1e-4)");
  c.note(std::to_string(layers.size()) + " layer checks, worst " + fmt(worst) + " [" + worst_name + "] (< 1e-6)");
  c.note(fmt(elapsed) + " s");
  return c.outcome();
}

// ---------------------------------------------------------------------------

Tensor random_orthogonal(std::size_t d, RngStream& rng) {
  Tensor q({d, d});
  for (std::size_t i = 0; i < d; ++i) {
    std::vector<double> v(d);
    for (auto& x : v) x = rng.normal();
    for (std::size_t j = 0; j < i; ++j) {
      double proj = 0.0;
      for (std::size_t t = 0; t < d; ++t) proj += v[t] * q.at(j, t);
      for (std::size_t t = 0; t < d; ++t) v[t] -= proj * q.at(j, t);
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (std::size_t t = 0; t < d; ++t) q.at(i, t) = v[t] / norm;
  }
  return q;
}

bool machine_equal(double a, double b) {
  return std::abs(a - b) <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(b));
}

Outcome loss_identities() {
  Checks c;
  RngStream rng(21);
  double worst_perm = 0.0, worst_rot = 0.0;
  bool hybrid_ok = true;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 8, d = 4;
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(rng.uniform_int(0, 1));
    y[0] = 0;
    y[1] = 0;
    y[2] = 1;
    const auto z = random_tensor({n, d}, rng);
    const auto logits = random_tensor({n, 2}, rng);
    const auto ce = cross_entropy_with_logits(logits, y);

    for (bool include : {false, true}) {
      const auto sc = supervised_contrastive(z, y, 0.1, include);
      const auto h1 = hybrid(ce, sc, 1.0);
      const auto h0 = hybrid(ce, sc, 0.0);
      hybrid_ok = hybrid_ok && machine_equal(h1.value, ce.value) && machine_equal(h0.value, sc.value);
      for (std::size_t i = 0; i < ce.grad.size(); ++i)
        hybrid_ok = hybrid_ok && machine_equal(h1.grad_ce_input[i], ce.grad[i]);
      for (std::size_t i = 0; i < sc.grad.size(); ++i) {
        hybrid_ok = hybrid_ok && h1.grad_sc_input[i] == 0.0 && machine_equal(h0.grad_sc_input[i], sc.grad[i]);
      }

      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.uniform_int(0, i - 1)]);
      Tensor zp({n, d});
      std::vector<int> yp(n);
      for (std::size_t i = 0; i < n; ++i) {
        yp[i] = y[perm[i]];
        for (std::size_t t = 0; t < d; ++t) zp.at(i, t) = z.at(perm[i], t);
      }
      worst_perm = std::max(worst_perm, std::abs(supervised_contrastive(zp, yp, 0.1, include).value - sc.value));

      const auto q = random_orthogonal(d, rng);
      Tensor zr({n, d});
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < d; ++t)
          for (std::size_t s = 0; s < d; ++s) zr.at(i, t) += z.at(i, s) * q.at(s, t);
      worst_rot = std::max(worst_rot, std::abs(supervised_contrastive(zr, y, 0.1, include).value - sc.value));
    }
  }
  c.expect(hybrid_ok, "lambda = 1 / lambda = 0 hybrid differs from CE / SC");
  c.expect(worst_perm < 1e-10, "permutation change " + fmt(worst_perm));
  c.expect(worst_rot < 1e-10, "rotation change " + fmt(worst_rot));

  const auto pair = Tensor({2, 3}, std::vector<double>{0.6, 0.8, 0.0, 1.2, 1.6, 0.0});
  const std::vector<int> same{1, 1};
  const double aligned = supervised_contrastive(pair, same, 0.1).value;
  c.expect(aligned == 0.0, "aligned positive pair gives " + fmt(aligned));

  c.note("hybrid endpoints exact");
  c.note("aligned pair " + fmt(aligned));
  c.note("permutation " + fmt(worst_perm) + ", rotation " + fmt(worst_rot) + " over 200 batches of 8 (< 1e-10)");
  return c.outcome();
}

// ---------------------------------------------------------------------------

Outcome attention_contract() {
  Checks c;
  RngStream rng(31);
  double worst_sum = 0.0, worst_shift = 0.0, worst_hull = 0.0, worst_mix = 0.0;
  for (int draw = 0; draw < 1000; ++draw) {
    std::array<std::pair<std::size_t, std::size_t>, 3> shapes;
    for (auto& s : shapes) s = {rng.uniform_int(1, 5), rng.uniform_int(1, 4)};
    const std::size_t k = rng.uniform_int(1, 6);
    const std::size_t batch = rng.uniform_int(1, 4);
    CrossAttention att(shapes, k, rng);
    for (auto& P : att.modality) P.b.value[0] = 2.0 * rng.normal();
    std::array<Tensor, 3> f;
    for (std::size_t i = 0; i < 3; ++i) f[i] = random_tensor({batch, shapes[i].first, shapes[i].second}, rng, 2.0);
    const auto out = att.forward(f);

    const double shift = 10.0 * rng.normal();
    for (auto& P : att.modality) P.b.value[0] += shift;
    const auto shifted = att.forward(f);

    for (std::size_t b = 0; b < batch; ++b) {
      double sum = 0.0;
      for (std::size_t i = 0; i < 3; ++i) {
        sum += out.alpha.at(b, i);
        c.expect(out.alpha.at(b, i) >= 0.0, "negative weight");
        worst_shift = std::max(worst_shift, std::abs(shifted.alpha.at(b, i) - out.alpha.at(b, i)));
      }
      worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
      for (std::size_t j = 0; j < k; ++j) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo, mix = 0.0;
        for (std::size_t i = 0; i < 3; ++i) {
          const double v = out.projected[i].at(b, j);
          lo = std::min(lo, v);
          hi = std::max(hi, v);
          mix += out.alpha.at(b, i) * v;
        }
        const double ctx = out.context.at(b, j);
        const double scale = std::max({1.0, std::abs(lo), std::abs(hi)});
        worst_hull = std::max(worst_hull, std::max(lo - ctx, ctx - hi) / scale);
        worst_mix = std::max(worst_mix, std::abs(ctx - mix) / scale);
      }
    }
  }
  c.expect(worst_sum <= 1e-9, "alpha sum off by " + fmt(worst_sum));
  c.expect(worst_shift <= 1e-12, "logit shift moved alpha by " + fmt(worst_shift));
  c.expect(worst_hull <= 1e-12, "context outside the hull by " + fmt(worst_hull));
  c.expect(worst_mix <= 1e-12, "context differs from the weighted sum by " + fmt(worst_mix));
  c.note("1000 draws: |sum - 1| " + fmt(worst_sum) + ", shift " + fmt(worst_shift) + ", hull excess " +
         fmt(worst_hull) + ", mix " + fmt(worst_mix));
  return c.outcome();
}

// ---------------------------------------------------------------------------

Outcome signal_oracle() {
  Checks c;
  // Detector: sensitivity and false detections against known pulse centers, +-50 ms.
  double min_sens = 1.0, max_false = 0.0;
  std::size_t trains = 0;
  for (double fs : {100.0, 250.0}) {
    for (double bpm = 40.0; bpm <= 180.0; bpm += 10.0) {
      for (std::uint64_t seed : {1, 2}) {
        RngStream rng = RngStream(seed).derive(static_cast<std::uint64_t>(bpm * fs));
        PulseTrainSpec spec;
        spec.fs = fs;
        spec.bpm = bpm;
        spec.duration_s = 120.0;
        spec.snr_db = 10.0;
        const auto train = make_pulse_train(spec, rng);
        const auto found = detect_r_peaks(train.record);
        const auto tol = static_cast<std::size_t>(std::llround(0.05 * fs));
        std::size_t hits = 0, j = 0;
        for (auto t : train.centers) {
          while (j < found.size() && found[j] + tol < t) ++j;
          if (j < found.size() && (found[j] > t ? found[j] - t : t - found[j]) <= tol) {
            ++hits;
            ++j;
          }
        }
        const double sens = static_cast<double>(hits) / static_cast<double>(train.centers.size());
        const double false_rate =
            found.empty() ? 0.0 : static_cast<double>(found.size() - hits) / static_cast<double>(found.size());
        min_sens = std::min(min_sens, sens);
        max_false = std::max(max_false, false_rate);
        if (sens < 0.99 || false_rate > 0.01) {
          c.expect(false, "detector at " + fmt(bpm) + " bpm, fs " + fmt(fs) + ": sensitivity " + fmt(sens) +
                              ", false " + fmt(false_rate));
        }
        ++trains;
      }
    }
  }

  // Cubic resampling on random cubics over uneven knots.
  RngStream rng(41);
  double worst_cubic = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const double a = rng.normal(), b = rng.normal(), cc = rng.normal(), d = rng.normal();
    const auto f = [&](double t) { return ((a * t + b) * t + cc) * t + d; };
    std::vector<double> x{rng.uniform() * 0.5}, y;
    const auto knots = rng.uniform_int(4, 12);
    while (x.size() < knots) x.push_back(x.back() + 0.05 + rng.uniform());
    for (double t : x) y.push_back(f(t));
    const auto r = cubic_resample(x, y, x.front(), x.back(), 37);
    const double step = (x.back() - x.front()) / 37.0;
    for (std::size_t j = 0; j < r.size(); ++j) {
      const double t = x.front() + step * static_cast<double>(j);
      worst_cubic = std::max(worst_cubic, std::abs(r[j] - f(t)) / std::max(1.0, std::abs(f(t))));
    }
  }
  c.expect(worst_cubic <= 1e-9, "cubic resampling error " + fmt(worst_cubic));

  // Median filter on plateaus with isolated single-sample spikes.
  std::size_t spikes = 0;
  bool median_ok = true;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> clean;
    while (clean.size() < 300) {
      const double level = rng.normal();
      clean.insert(clean.end(), rng.uniform_int(8, 20), level);
    }
    auto noisy = clean;
    std::size_t pos = 0;
    while (pos < clean.size()) {
      std::size_t end = pos;
      while (end < clean.size() && clean[end] == clean[pos]) ++end;
      if (end - pos >= 8) {  // one spike at least 3 samples inside each plateau
        const std::size_t at = pos + 3 + rng.uniform_int(0, end - pos - 7);
        noisy[at] += 50.0 * (rng.uniform() < 0.5 ? -1.0 : 1.0);
        ++spikes;
      }
      pos = end;
    }
    median_ok = median_ok && median_filter(noisy, 5) == clean && median_filter(noisy, 3) == clean;
  }
  c.expect(median_ok, "median filter left a spike");

  c.note(std::to_string(trains) + " pulse trains at 40-180 bpm, SNR 10 dB: min sensitivity " + fmt(min_sens, 4) +
         ", max false " + fmt(max_false, 4));
  c.note("cubic error " + fmt(worst_cubic));
  c.note(std::to_string(spikes) + " spikes removed exactly");
  return c.outcome();
}

// ---------------------------------------------------------------------------

struct DeskData {
  PreparedDataset train;
  PreparedDataset held_out;
  ArchConfig arch;
  TrainConfig config;
};

const DeskData& desk_data() {
  static const DeskData d = [] {
    DeskData out;
    SyntheticConfig cfg;  // 10 records x 20 epochs
    cfg.seed = 1;
    out.train = make_synthetic_dataset(cfg, PrepConfig{});
    cfg.seed = 2;
    cfg.records = 5;
    out.held_out = make_synthetic_dataset(cfg, PrepConfig{});
    const auto manifest = ExperimentManifest::load(config_path("toy_manifest.json"));
    out.arch = ArchConfig::load(manifest.resolve(manifest.arch));
    out.config = manifest.train;
    return out;
  }();
  return d;
}

ConcadModel fresh_model(const DeskData& d, std::uint64_t seed) {
  RngStream rng = RngStream(seed).derive("init");
  return ConcadModel(d.arch, InputDims{d.train.ecg_length(), d.train.feature_length(), d.train.feature_length()},
                     rng);
}

Outcome desk_scale_learning() {
  Checks c;
  const auto& d = desk_data();
  c.expect(d.train.bundles.size() == 200, "training set has " + std::to_string(d.train.bundles.size()) + " bundles");
  const auto t0 = std::chrono::steady_clock::now();
  auto model = fresh_model(d, d.config.seed);
  const auto result = train(model, d.train.bundles, d.held_out.bundles, d.config);
  const double elapsed = seconds_since(t0);
  const auto train_metrics = evaluate(model, d.train.bundles);
  const double held_out = result.logs.back().eval->accuracy;

  bool decreasing = result.logs.size() >= 10;
  std::ostringstream sc;
  for (std::size_t e = 0; e < std::min<std::size_t>(10, result.logs.size()); ++e) {
    sc << (e ? " " : "") << fmt(result.logs[e].sc, 4);
    if (e > 0 && !(result.logs[e].sc < result.logs[e - 1].sc)) decreasing = false;
  }
  c.expect(d.config.epochs <= 50, std::to_string(d.config.epochs) + " epochs configured");
  c.expect(train_metrics.accuracy >= 0.95, "train accuracy " + fmt(train_metrics.accuracy));
  c.expect(held_out >= 0.90, "held-out accuracy " + fmt(held_out));
  c.expect(elapsed < 300.0, "took " + fmt(elapsed) + " s");
  c.expect(decreasing, "SC over epochs 1-10 not strictly decreasing: " + sc.str());
  c.note(std::to_string(d.config.epochs) + " epochs: train accuracy " + fmt(train_metrics.accuracy) +
         " (>= 0.95), held-out " + fmt(held_out) + " (>= 0.90)");
  c.note("SC epochs 1-10: " + sc.str());
  c.note(fmt(elapsed) + " s");
  return c.outcome();
}

Outcome limited_label() {
  Checks c;
  const auto& d = desk_data();
  double hybrid_sum = 0.0, ce_sum = 0.0;
  std::ostringstream per_seed;
  const std::size_t seeds = 5;
  for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
    const auto subset = subset_fraction(d.train.bundles, 0.05, seed);
    std::vector<SegmentBundle> train_set;
    for (auto i : subset.indices) train_set.push_back(d.train.bundles[i]);

    TrainConfig cfg = d.config;
    cfg.epochs = 30;
    cfg.drop_epoch = 30;
    cfg.seed = seed;
    cfg.eval_every = 0;
    cfg.loss.lambda = 0.5;
    auto hybrid_model = fresh_model(d, seed);
    const double f1_hybrid =
        train(hybrid_model, train_set, d.held_out.bundles, cfg).logs.back().eval->macro_f1;
    cfg.contrastive = false;
    auto ce_model = fresh_model(d, seed);
    const double f1_ce = train(ce_model, train_set, d.held_out.bundles, cfg).logs.back().eval->macro_f1;
    hybrid_sum += f1_hybrid;
    ce_sum += f1_ce;
    per_seed << (seed > 1 ? ", " : "") << fmt(f1_hybrid) << "/" << fmt(f1_ce);
  }
  const double hybrid_mean = hybrid_sum / seeds, ce_mean = ce_sum / seeds;
  c.expect(hybrid_mean >= ce_mean, "hybrid mean macro F1 " + fmt(hybrid_mean, 4) + " below CE-only " + fmt(ce_mean, 4));
  c.note("fraction 0.05 (10 bundles), 5 seeds: hybrid " + fmt(hybrid_mean, 4) + " >= CE-only " + fmt(ce_mean, 4));
  c.note("per seed hybrid/CE " + per_seed.str());
  return c.outcome();
}

// ---------------------------------------------------------------------------

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

Outcome determinism() {
  Checks c;
  TempDir dir("concad_acceptance_determinism");
  std::string err;
  const int syn = run_cli({"synthesize", "--out", (dir.path / "data.cds").string(), "--records", "4",
                           "--epochs-per-record", "10", "--seed", "9"},
                          &err);
  c.expect(syn == 0, "synthesize failed: " + err);
  std::ofstream(dir.path / "m.json") << nlohmann::json{
      {"data", "data.cds"},
      {"arch", config_path("toy.arch")},
      {"train", {{"epochs", 5}, {"batch_size", 20}, {"lambda", 0.5}, {"tau", 0.1}, {"seed", 3}}}}
                                            .dump();
  std::vector<std::string> outputs;
  for (const char* run : {"a", "b"}) {
    const int code =
        run_cli({"train", "--manifest", (dir.path / "m.json").string(), "--out", (dir.path / run).string()}, &err);
    c.expect(code == 0, std::string("train ") + run + " exited " + std::to_string(code) + ": " + err);
    outputs.push_back(slurp(dir.path / run / "metrics.json"));
  }
  c.expect(!outputs[0].empty(), "metrics.json missing");
  c.expect(outputs[0] == outputs[1], "metrics.json differs between runs");
  c.note("two train runs wrote identical metrics.json (" + std::to_string(outputs[0].size()) + " bytes)");
  return c.outcome();
}

// Optional: needs the Apnea-ECG released records (a01..c10 with .apn) under $CONCAD_DATA_ROOT.
Outcome apnea_ecg_smoke() {
  const char* root = std::getenv("CONCAD_DATA_ROOT");
  if (!root) return {Status::skipped, "CONCAD_DATA_ROOT not set"};
  fs::path data_dir;
  for (const auto& candidate : {fs::path(root), fs::path(root) / "apnea-ecg"}) {
    if (fs::exists(candidate / "a01.hea") && fs::exists(candidate / "a01.apn")) data_dir = candidate;
  }
  if (data_dir.empty()) return {Status::skipped, "no Apnea-ECG records under " + std::string(root)};

  Checks c;
  TempDir dir("concad_acceptance_apnea");
  std::string err;
  const int prep = run_cli({"prepare", "--dataset", "apnea-ecg", "--data-dir", data_dir.string(), "--out",
                            (dir.path / "released.cds").string(), "--lenient"},
                           &err);
  if (prep != 0) return {Status::fail, "prepare exited " + std::to_string(prep) + ": " + err};
  std::ofstream(dir.path / "m.json") << nlohmann::json{
      {"data", "released.cds"},
      {"arch", config_path("apnea_ecg.arch")},
      {"fraction", 0.05},
      {"train", {{"epochs", 30}, {"batch_size", 64}, {"lambda", 0.5}, {"tau", 0.1}, {"seed", 1}}}}
                                            .dump();
  const int code =
      run_cli({"subset-train", "--manifest", (dir.path / "m.json").string(), "--out", (dir.path / "run").string()},
              &err);
  if (code != 0) return {Status::fail, "subset-train exited " + std::to_string(code) + ": " + err};
  const auto j = nlohmann::json::parse(slurp(dir.path / "run" / "metrics.json"));
  const auto& conf = j["final"]["confusion"];
  const double n0 = conf[0][0].get<double>() + conf[0][1].get<double>();
  const double n1 = conf[1][0].get<double>() + conf[1][1].get<double>();
  // Predicting the majority class everywhere: its F1 is 2 n_major / (n_major + n), the other class scores 0.
  const double major = std::max(n0, n1);
  const double baseline = 0.5 * 2.0 * major / (major + n0 + n1);
  const double f1 = j["final"]["macro_f1"].get<double>();
  c.expect(f1 >= baseline + 0.05, "macro F1 " + fmt(f1) + " vs majority baseline " + fmt(baseline));
  c.note("5% of the released set, 30 epochs: macro F1 " + fmt(f1) + " >= baseline " + fmt(baseline) + " + 0.05");
  return c.outcome();
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient-integrity", gradient_integrity},
      {"loss-identities", loss_identities},
      {"attention-contract", attention_contract},
      {"signal-oracle", signal_oracle},
      {"desk-scale-learning", desk_scale_learning},
      {"limited-label", limited_label},
      {"apnea-ecg-smoke", apnea_ecg_smoke},
      {"determinism", determinism},
  };
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {Status::fail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.status == Status::pass ? "PASS" : o.status == Status::fail ? "FAIL" : "SKIPPED";
    if (o.status == Status::fail) ++failures;
    std::cout << std::left << std::setw(8) << tag << std::setw(22) << name << o.detail << std::endl;
  }
  return failures ? 1 : 0;
}
