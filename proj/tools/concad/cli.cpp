#include "concad/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "concad/arch_config.hpp"
#include "concad/checkpoint.hpp"
#include "concad/dataset.hpp"
#include "concad/folds.hpp"
#include "concad/manifest.hpp"
#include "concad/model.hpp"
#include "concad/model_gradcheck.hpp"
#include "concad/prepared_dataset.hpp"
#include "concad/selftest.hpp"
#include "concad/synthetic.hpp"
#include "concad/training.hpp"
#include "concad/wfdb.hpp"

namespace concad::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kDataRootEnv = "CONCAD_DATA_ROOT";
constexpr double kGradcheckTolerance = 1e-4;

std::string default_data_dir() {
  const char* v = std::getenv(kDataRootEnv);
  return v ? v : "";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os << text;
  if (!os) throw DataError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

json metrics_json(const MetricsReport& r) {
  json j;
  j["n_eval"] = r.n_eval;
  j["accuracy"] = r.accuracy;
  j["macro_f1"] = r.macro_f1;
  j["confusion"] = {{r.confusion[0][0], r.confusion[0][1]}, {r.confusion[1][0], r.confusion[1][1]}};
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const auto& m = r.per_class[c];
    j["per_class"][std::string(label_name(label_from_index(static_cast<int>(c))))] = {
        {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}};
  }
  return j;
}

json epochs_json(const std::vector<EpochLog>& logs) {
  json arr = json::array();
  for (const auto& l : logs) {
    json e = {{"epoch", l.epoch},   {"loss", l.loss},       {"ce", l.ce},
              {"sc", l.sc},         {"lr", l.lr},           {"degenerate_batches", l.degenerate_batches}};
    if (l.eval) e["eval"] = {{"accuracy", l.eval->accuracy}, {"macro_f1", l.eval->macro_f1}};
    arr.push_back(std::move(e));
  }
  return arr;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

InputDims dims_of(const PreparedDataset& ds) { return {ds.ecg_length(), ds.feature_length(), ds.feature_length()}; }

void require_compatible(const PreparedDataset& a, const PreparedDataset& b) {
  if (dims_of(a) != dims_of(b)) throw DataError("evaluation data has different segment lengths than training data");
}

// Shared state of the manifest-driven commands.
struct Experiment {
  ExperimentManifest manifest;
  std::string arch_text;
  ArchConfig arch;
  PreparedDataset data;
  std::optional<PreparedDataset> eval_data;
  std::string hash;

  std::string checkpoint_metadata() const {
    return "config_hash = " + hash + "\nseed = " + std::to_string(manifest.train.seed) + "\n";
  }
  json header(const std::string& command) const {
    return {{"command", command},
            {"config_hash", hash},
            {"seed", manifest.train.seed},
            {"manifest", json::parse(manifest.canonical())}};
  }
};

Experiment load_experiment(const std::string& manifest_path, std::optional<std::uint64_t> seed,
                           const std::string& data_override) {
  Experiment ex;
  ex.manifest = ExperimentManifest::load(manifest_path);
  if (seed) ex.manifest.train.seed = *seed;
  if (!data_override.empty()) ex.manifest.data = fs::absolute(data_override).string();
  ex.arch_text = read_text(ex.manifest.resolve(ex.manifest.arch));
  ex.arch = ArchConfig::parse(ex.arch_text);
  ex.data = read_prepared_dataset(ex.manifest.resolve(ex.manifest.data));
  if (!ex.manifest.eval_data.empty()) {
    ex.eval_data = read_prepared_dataset(ex.manifest.resolve(ex.manifest.eval_data));
    require_compatible(ex.data, *ex.eval_data);
  }
  ex.hash = config_hash(ex.manifest, ex.arch_text);
  return ex;
}

ConcadModel init_model(const Experiment& ex, std::uint64_t seed) {
  RngStream rng = RngStream(seed).derive("init");
  return ConcadModel(ex.arch, dims_of(ex.data), rng);
}

TrainHooks progress_hooks(std::ostream& out, std::ostream& err, const std::string& prefix, std::size_t epochs,
                          const std::string& metadata) {
  TrainHooks hooks;
  hooks.checkpoint_metadata = metadata;
  hooks.on_warning = [&err](const std::string& w) { err << "warning: " << w << '\n'; };
  hooks.on_epoch = [&out, prefix, epochs](const EpochLog& l) {
    out << prefix << "epoch " << l.epoch << '/' << epochs << "  loss " << l.loss << "  ce " << l.ce << "  sc "
        << l.sc << "  lr " << l.lr;
    if (l.eval) out << "  acc " << l.eval->accuracy << "  macro-F1 " << l.eval->macro_f1;
    out << '\n';
  };
  return hooks;
}

std::vector<SegmentBundle> pick(const std::vector<SegmentBundle>& all, const std::vector<std::size_t>& idx) {
  std::vector<SegmentBundle> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(all[i]);
  return out;
}

// ---------------------------------------------------------------------------

struct PrepareArgs {
  std::string data_dir = default_data_dir();
  std::string out;
  std::string dataset = "apnea-ecg";
  std::string ann_ext;
  std::string format = "auto";
  std::vector<std::string> records;
  int context = 0;
  std::size_t resample = 180;
  bool lenient = false;
};

int cmd_prepare(const PrepareArgs& a, std::ostream& out, std::ostream& err) {
  if (a.data_dir.empty()) throw std::invalid_argument("prepare: --data-dir not given and " +
                                                      std::string(kDataRootEnv) + " not set");
  PrepConfig prep;
  AnnotationOptions ann;
  std::string ext = a.ann_ext;
  if (a.dataset == "apnea-ecg") {
    prep.epoch_length_s = 60.0;
    ann.mapping = LabelMapping::apnea_ecg();
    if (ext.empty()) ext = "apn";
  } else if (a.dataset == "mitbih-psg") {
    prep.epoch_length_s = 30.0;
    ann.mapping = LabelMapping::mit_bih_psg();
    if (ext.empty()) ext = "st";
  } else {
    throw std::invalid_argument("prepare: unknown dataset '" + a.dataset + "'");
  }
  prep.context = a.context;
  prep.resample_per_epoch = a.resample;
  prep.validate();
  ann.epoch_length_s = prep.epoch_length_s;
  ann.strict = !a.lenient;

  std::vector<std::pair<std::string, fs::path>> candidates;  // record id, signal path
  const fs::path dir(a.data_dir);
  if (!fs::is_directory(dir)) throw DataError("prepare: not a directory: " + dir.string());
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto ext_s = entry.path().extension().string();
    if (ext_s == ".hea" || (ext_s == ".csv" && (a.format == "csv" || a.format == "auto"))) {
      candidates.emplace_back(entry.path().stem().string(), entry.path());
    }
  }
  std::sort(candidates.begin(), candidates.end());
  if (!a.records.empty()) {
    std::erase_if(candidates, [&](const auto& c) {
      return std::find(a.records.begin(), a.records.end(), c.first) == a.records.end();
    });
  }

  PreparedDataset ds;
  ds.epoch_length_s = prep.epoch_length_s;
  ds.context = prep.context;
  ds.resample_per_epoch = prep.resample_per_epoch;
  ds.config_text = "dataset = " + a.dataset + "\n" + prep.to_text();
  json per_record = json::array();
  std::size_t without_labels = 0;
  for (const auto& [id, path] : candidates) {
    const fs::path ann_path = dir / (id + "." + ext);
    if (!fs::exists(ann_path)) {
      ++without_labels;
      continue;
    }
    EcgRecord rec;
    if (path.extension() == ".csv") {
      rec = read_record(path, RecordFormat::csv);
    } else if (a.format == "auto") {
      rec = read_wfdb_record(path, find_ecg_signal(path));
    } else {
      rec = read_record(path, a.format == "wfdb212" ? RecordFormat::wfdb212 : RecordFormat::wfdb16,
                        find_ecg_signal(path));
    }
    rec.record_id = id;
    if (ds.fs == 0.0) ds.fs = rec.fs;
    if (rec.fs != ds.fs) throw DataError("prepare: record " + id + " has a different sampling rate");
    ann.fs = rec.fs;
    const auto labels = read_annotations(ann_path, ext == "txt" ? AnnotationFormat::text : AnnotationFormat::wfdb_ann, ann);
    auto prepared = prepare_record(rec, labels, prep);
    per_record.push_back({{"record", id},
                          {"labeled", prepared.labeled_epochs},
                          {"kept", prepared.bundles.size()},
                          {"dropped_hr", prepared.dropped_hr},
                          {"skipped_epochs", prepared.skipped_epochs},
                          {"annotations_skipped", labels.skipped}});
    ++ds.records;
    ds.labeled_epochs += prepared.labeled_epochs;
    ds.skipped_epochs += prepared.skipped_epochs;
    ds.dropped_hr += prepared.dropped_hr;
    for (auto& b : prepared.bundles) ds.bundles.push_back(std::move(b));
  }
  if (ds.records == 0) throw DataError("prepare: no annotated records found in " + dir.string());
  write_prepared_dataset(a.out, ds);

  json report = {{"command", "prepare"},
                 {"dataset", a.dataset},
                 {"config", ds.config_text},
                 {"records", ds.records},
                 {"records_without_labels", without_labels},
                 {"labeled_epochs", ds.labeled_epochs},
                 {"skipped_epochs", ds.skipped_epochs},
                 {"dropped_hr", ds.dropped_hr},
                 {"bundles", ds.bundles.size()},
                 {"normal", ds.count(Label::normal)},
                 {"apnea", ds.count(Label::apnea)},
                 {"per_record", per_record}};
  write_text(a.out + ".json", dump(report));
  out << dump(report);
  if (without_labels) err << "note: " << without_labels << " record(s) without ." << ext << " annotations skipped\n";
  return kOk;
}

struct SynthArgs {
  std::string out;
  std::string raw_dir;
  SyntheticConfig cfg;
  int context = 0;
};

int cmd_synthesize(const SynthArgs& a, std::ostream& out) {
  if (a.out.empty() && a.raw_dir.empty()) throw std::invalid_argument("synthesize: give --out and/or --raw-dir");
  PrepConfig prep;
  prep.epoch_length_s = a.cfg.epoch_length_s;
  prep.context = a.context;
  if (!a.raw_dir.empty()) {
    fs::create_directories(a.raw_dir);
    const auto eps = static_cast<std::int64_t>(prep.epoch_samples(a.cfg.fs));
    for (const auto& r : make_synthetic_records(a.cfg)) {
      write_wfdb_record(fs::path(a.raw_dir) / r.record.record_id, r.record, RecordFormat::wfdb16);
      std::vector<RawAnnotation> raw;
      for (const auto& l : r.annotations.labels) {
        raw.push_back({l.epoch_index * eps, l.label == Label::apnea ? "A" : "N", ""});
      }
      write_mit_annotations(fs::path(a.raw_dir) / (r.record.record_id + ".apn"), raw);
    }
    out << "wrote " << a.cfg.records << " records to " << a.raw_dir << '\n';
  }
  if (!a.out.empty()) {
    const auto ds = make_synthetic_dataset(a.cfg, prep);
    write_prepared_dataset(a.out, ds);
    out << "wrote " << ds.bundles.size() << " bundles (" << ds.count(Label::normal) << " normal, "
        << ds.count(Label::apnea) << " apnea, " << ds.dropped_hr << " dropped) to " << a.out << '\n';
  }
  return kOk;
}

struct ExperimentArgs {
  std::string manifest;
  std::string out;
  std::string data;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> folds;
  std::string fold_mode;
  std::optional<double> fraction;
};

void write_run_outputs(const fs::path& dir, const TrainResult& r) {
  write_epoch_log_csv(dir / "epochs.csv", r.logs);
  write_checkpoint(dir / "best.ckpt", r.best);
  write_checkpoint(dir / "final.ckpt", r.final_checkpoint);
}

int cmd_train(const ExperimentArgs& a, std::ostream& out, std::ostream& err) {
  auto ex = load_experiment(a.manifest, a.seed, a.data);
  fs::create_directories(a.out);
  write_text(fs::path(a.out) / "manifest.json", ex.manifest.text);
  auto model = init_model(ex, ex.manifest.train.seed);
  const std::vector<SegmentBundle> none;
  const auto& eval_set = ex.eval_data ? ex.eval_data->bundles : none;
  const auto result = train(model, ex.data.bundles, eval_set, ex.manifest.train,
                            progress_hooks(out, err, "", ex.manifest.train.epochs, ex.checkpoint_metadata()));
  write_run_outputs(a.out, result);

  json j = ex.header("train");
  j["train_size"] = ex.data.bundles.size();
  j["eval_size"] = eval_set.size();
  j["evaluated_on"] = ex.eval_data ? "eval_data" : "train_data";
  j["best_epoch"] = result.best_epoch;
  j["best"] = metrics_json(result.best_metrics);
  j["final"] = metrics_json(*result.logs.back().eval);
  j["epochs"] = epochs_json(result.logs);
  write_text(fs::path(a.out) / "metrics.json", dump(j));
  out << "best epoch " << result.best_epoch << "  accuracy " << result.best_metrics.accuracy << "  macro-F1 "
      << result.best_metrics.macro_f1 << "\nwrote " << (fs::path(a.out) / "metrics.json").string() << '\n';
  return kOk;
}

int cmd_crossval(const ExperimentArgs& a, std::ostream& out, std::ostream& err) {
  auto ex = load_experiment(a.manifest, a.seed, a.data);
  if (a.folds) ex.manifest.folds = *a.folds;
  if (!a.fold_mode.empty()) ex.manifest.fold_mode = parse_fold_mode(a.fold_mode);
  ex.hash = config_hash(ex.manifest, ex.arch_text);
  fs::create_directories(a.out);
  write_text(fs::path(a.out) / "manifest.json", ex.manifest.text);

  const auto plan = kfold_split(ex.data.bundles, ex.manifest.folds, ex.manifest.fold_mode, ex.manifest.train.seed);
  json folds = json::array();
  double acc = 0.0, f1 = 0.0;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const auto fold = plan.fold(i);
    const auto train_set = pick(ex.data.bundles, fold.train);
    const auto eval_set = pick(ex.data.bundles, fold.eval);
    TrainConfig cfg = ex.manifest.train;
    cfg.seed = RngStream(ex.manifest.train.seed).derive("fold").derive(i).next_u64();
    auto model = init_model(ex, cfg.seed);
    const auto prefix = "fold " + std::to_string(i + 1) + "/" + std::to_string(plan.size()) + "  ";
    const auto r = train(model, train_set, eval_set, cfg,
                         progress_hooks(out, err, prefix, cfg.epochs,
                                        ex.checkpoint_metadata() + "fold = " + std::to_string(i) + "\n"));
    const fs::path dir = fs::path(a.out) / ("fold" + std::to_string(i));
    fs::create_directories(dir);
    write_run_outputs(dir, r);
    const auto& final_metrics = *r.logs.back().eval;
    acc += final_metrics.accuracy;
    f1 += final_metrics.macro_f1;
    folds.push_back({{"fold", i},
                     {"train_size", train_set.size()},
                     {"eval_size", eval_set.size()},
                     {"final", metrics_json(final_metrics)},
                     {"best_epoch", r.best_epoch},
                     {"best", metrics_json(r.best_metrics)}});
  }
  json j = ex.header("crossval");
  j["folds"] = folds;
  j["fold_mode"] = std::string(fold_mode_name(plan.mode));
  j["mean_accuracy"] = acc / static_cast<double>(plan.size());
  j["mean_macro_f1"] = f1 / static_cast<double>(plan.size());
  write_text(fs::path(a.out) / "metrics.json", dump(j));
  out << "mean accuracy " << j["mean_accuracy"].get<double>() << "  mean macro-F1 "
      << j["mean_macro_f1"].get<double>() << '\n';
  return kOk;
}

int cmd_subset_train(const ExperimentArgs& a, std::ostream& out, std::ostream& err) {
  auto ex = load_experiment(a.manifest, a.seed, a.data);
  if (a.fraction) ex.manifest.fraction = *a.fraction;
  if (!(ex.manifest.fraction > 0.0) || ex.manifest.fraction > 1.0) {
    throw std::invalid_argument("subset-train: fraction must be in (0, 1]");
  }
  ex.hash = config_hash(ex.manifest, ex.arch_text);
  fs::create_directories(a.out);
  write_text(fs::path(a.out) / "manifest.json", ex.manifest.text);

  const auto subset = subset_fraction(ex.data.bundles, ex.manifest.fraction, ex.manifest.train.seed);
  if (subset.raised_classes) {
    err << "warning: " << subset.raised_classes << " class(es) would be empty at this fraction; kept one each\n";
  }
  const auto train_set = pick(ex.data.bundles, subset.indices);
  std::vector<SegmentBundle> eval_set;
  if (ex.eval_data) {
    eval_set = ex.eval_data->bundles;
  } else {
    std::vector<bool> used(ex.data.bundles.size(), false);
    for (auto i : subset.indices) used[i] = true;
    for (std::size_t i = 0; i < used.size(); ++i)
      if (!used[i]) eval_set.push_back(ex.data.bundles[i]);
    if (eval_set.empty()) throw std::invalid_argument("subset-train: no held-out data (set eval_data or fraction < 1)");
  }
  auto model = init_model(ex, ex.manifest.train.seed);
  const auto r = train(model, train_set, eval_set, ex.manifest.train,
                       progress_hooks(out, err, "", ex.manifest.train.epochs, ex.checkpoint_metadata()));
  write_run_outputs(a.out, r);

  json j = ex.header("subset-train");
  j["fraction"] = ex.manifest.fraction;
  j["train_size"] = train_set.size();
  j["eval_size"] = eval_set.size();
  j["evaluated_on"] = ex.eval_data ? "eval_data" : "held_out_remainder";
  j["final"] = metrics_json(*r.logs.back().eval);
  j["best_epoch"] = r.best_epoch;
  j["best"] = metrics_json(r.best_metrics);
  j["epochs"] = epochs_json(r.logs);
  write_text(fs::path(a.out) / "metrics.json", dump(j));
  out << "final accuracy " << r.logs.back().eval->accuracy << "  macro-F1 " << r.logs.back().eval->macro_f1 << '\n';
  return kOk;
}

json metadata_json(const std::string& metadata) {
  json j = json::object();
  std::istringstream is(metadata);
  for (std::string line; std::getline(is, line);) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    const auto key = line.substr(0, eq);
    if (key == "config_hash" || key == "seed" || key == "epoch" || key == "fold") j[key] = line.substr(eq + 3);
  }
  return j;
}

struct ModelDataArgs {
  std::string checkpoint;
  std::string data;
  std::string out;
};

int cmd_eval(const ModelDataArgs& a, std::ostream& out) {
  const auto ck = read_checkpoint(a.checkpoint);
  auto model = ConcadModel::from_checkpoint(ck);
  const auto ds = read_prepared_dataset(a.data);
  if (dims_of(ds) != model.dims()) throw DataError("eval: data segment lengths do not match the checkpoint");
  const auto m = evaluate(model, ds.bundles);
  json j = {{"command", "eval"}, {"checkpoint", metadata_json(ck.metadata)}, {"metrics", metrics_json(m)}};
  if (!a.out.empty()) write_text(a.out, dump(j));
  out << dump(j);
  return kOk;
}

int cmd_export(const ModelDataArgs& a, std::ostream& out) {
  auto model = ConcadModel::from_checkpoint(read_checkpoint(a.checkpoint));
  const auto ds = read_prepared_dataset(a.data);
  if (dims_of(ds) != model.dims()) throw DataError("export-embeddings: data segment lengths do not match the checkpoint");
  export_embeddings(model, ds.bundles, a.out);
  out << "wrote " << ds.bundles.size() << " embeddings to " << a.out << '\n';
  return kOk;
}

int cmd_gradcheck(std::uint64_t seed, std::ostream& out) {
  ModelGradCheckOptions o;
  o.seed = seed;
  const auto r = run_model_gradcheck(o);
  out << "train mode: " << r.train.coordinates << " coordinates, max rel. error " << r.train.report.max_rel_error
      << " (" << r.train.worst_parameter << ")\n";
  out << "infer mode: " << r.infer.coordinates << " coordinates, max rel. error " << r.infer.report.max_rel_error
      << " (" << r.infer.worst_parameter << ")\n";
  const bool ok = r.max_rel_error() < kGradcheckTolerance;
  out << "max rel. error " << r.max_rel_error() << (ok ? " < " : " >= ") << kGradcheckTolerance << '\n';
  return ok ? kOk : kNumericError;
}

int cmd_selftest(std::ostream& out) {
  std::size_t failed = 0, total = 0;
  run_selftest([&](const SelfTestResult& r) {
    ++total;
    if (!r.passed) ++failed;
    out << (r.passed ? "PASS  " : "FAIL  ") << r.name;
    if (!r.passed) out << ": " << r.detail;
    out << '\n';
  });
  out << total - failed << '/' << total << " checks passed\n";
  return failed ? kNumericError : kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ECG sleep-apnea classifier with cross-attention fusion and contrastive training"};
  app.name("concad");
  app.require_subcommand(1);
  app.footer(std::string("Environment:\n  ") + kDataRootEnv + "  default for --data-dir\n\n"
             "Exit codes: 0 ok, 1 usage or configuration error, 2 data error, 3 numeric failure");

  int status = kOk;

  PrepareArgs prep;
  auto* c_prep = app.add_subcommand("prepare", "Build a prepared-dataset file from a directory of records");
  c_prep->add_option("--data-dir", prep.data_dir, "Directory of <record>.hea/.dat (or .csv) plus annotations");
  c_prep->add_option("--out", prep.out, "Output prepared-dataset file")->required();
  c_prep->add_option("--dataset", prep.dataset, "Label conventions")
      ->check(CLI::IsMember({"apnea-ecg", "mitbih-psg"}))
      ->capture_default_str();
  c_prep->add_option("--annotations", prep.ann_ext,
                     "Annotation file extension (default apn / st; 'txt' reads text annotations)");
  c_prep->add_option("--format", prep.format, "Signal format")
      ->check(CLI::IsMember({"auto", "wfdb16", "wfdb212", "csv"}))
      ->capture_default_str();
  c_prep->add_option("--records", prep.records, "Only these record ids")->delimiter(',');
  c_prep->add_option("--context", prep.context, "Neighbor epochs on each side")->capture_default_str();
  c_prep->add_option("--resample", prep.resample, "RRI/RPE points per epoch")->capture_default_str();
  c_prep->add_flag("--lenient", prep.lenient, "Skip unmapped or duplicate annotations instead of failing");
  c_prep->callback([&] { status = cmd_prepare(prep, out, err); });

  SynthArgs syn;
  auto* c_syn = app.add_subcommand("synthesize", "Generate a synthetic two-class heart-rate dataset");
  c_syn->add_option("--out", syn.out, "Prepared-dataset file to write");
  c_syn->add_option("--raw-dir", syn.raw_dir, "Also write WFDB records and .apn annotations here");
  c_syn->add_option("--seed", syn.cfg.seed, "Random seed")->capture_default_str();
  c_syn->add_option("--records", syn.cfg.records, "Number of records")->capture_default_str();
  c_syn->add_option("--epochs-per-record", syn.cfg.epochs_per_record, "Labeled epochs per record")
      ->capture_default_str();
  c_syn->add_option("--snr", syn.cfg.snr_db, "Signal-to-noise ratio in dB")->capture_default_str();
  c_syn->add_option("--context", syn.context, "Neighbor epochs on each side")->capture_default_str();
  c_syn->callback([&] { status = cmd_synthesize(syn, out); });

  auto add_experiment = [&](const char* name, const char* help, ExperimentArgs& ea) {
    auto* c = app.add_subcommand(name, help);
    c->add_option("--manifest", ea.manifest, "Experiment manifest (JSON)")->required()->check(CLI::ExistingFile);
    c->add_option("--out", ea.out, "Output directory")->required();
    c->add_option("--data", ea.data, "Prepared dataset overriding the manifest's 'data'");
    c->add_option("--seed", ea.seed, "Seed overriding train.seed");
    return c;
  };
  ExperimentArgs tr, cv, st;
  add_experiment("train", "Train a model from a manifest", tr)->callback([&] { status = cmd_train(tr, out, err); });
  auto* c_cv = add_experiment("crossval", "k-fold cross-validation", cv);
  c_cv->add_option("--folds", cv.folds, "Number of folds (default: manifest, 10)");
  c_cv->add_option("--fold-mode", cv.fold_mode, "segment or recording")
      ->check(CLI::IsMember({"segment", "recording"}));
  c_cv->callback([&] { status = cmd_crossval(cv, out, err); });
  auto* c_st = add_experiment("subset-train", "Train on a stratified fraction of the training data", st);
  c_st->add_option("--fraction", st.fraction, "Fraction of the training set (default: manifest)");
  c_st->callback([&] { status = cmd_subset_train(st, out, err); });

  ModelDataArgs ev, ex;
  auto* c_ev = app.add_subcommand("eval", "Evaluate a checkpoint on a prepared dataset");
  c_ev->add_option("--checkpoint", ev.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  c_ev->add_option("--data", ev.data, "Prepared dataset")->required()->check(CLI::ExistingFile);
  c_ev->add_option("--out", ev.out, "Also write the metrics JSON here");
  c_ev->callback([&] { status = cmd_eval(ev, out); });

  auto* c_ex = app.add_subcommand("export-embeddings", "Write the fused feature vector of every bundle as CSV");
  c_ex->add_option("--checkpoint", ex.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  c_ex->add_option("--data", ex.data, "Prepared dataset")->required()->check(CLI::ExistingFile);
  c_ex->add_option("--out", ex.out, "Output CSV")->required();
  c_ex->callback([&] { status = cmd_export(ex, out); });

  std::uint64_t gc_seed = 7;
  auto* c_gc = app.add_subcommand("gradcheck", "Finite-difference check of the full model on a toy configuration");
  c_gc->add_option("--seed", gc_seed, "Seed for weights and inputs")->capture_default_str();
  c_gc->callback([&] { status = cmd_gradcheck(gc_seed, out); });

  app.add_subcommand("selftest", "Run the built-in numeric checks")->callback([&] { status = cmd_selftest(out); });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kNumericError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::logic_error& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
  return status;
}

}  // namespace concad::cli
