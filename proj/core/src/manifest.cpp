#include "concad/manifest.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "concad/rng.hpp"

namespace concad {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw std::invalid_argument("manifest: unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T get_as(const json& obj, const std::string& key, const std::string& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument("manifest: '" + key + "' in " + where + " has the wrong type");
  }
}

template <typename T>
void read_opt(const json& obj, const std::string& key, T& into, const std::string& where) {
  if (obj.contains(key)) into = get_as<T>(obj, key, where);
}

json train_to_json(const TrainConfig& t) {
  json j;
  j["batch_size"] = t.batch_size;
  j["epochs"] = t.epochs;
  j["lr_initial"] = t.lr_initial;
  j["lr_after"] = t.lr_after;
  j["drop_epoch"] = t.drop_epoch;
  j["lambda"] = t.loss.lambda;
  j["tau"] = t.loss.tau;
  j["sc_include_anchor"] = t.loss.sc_include_anchor;
  if (t.loss.class_weights) j["class_weights"] = *t.loss.class_weights;
  j["l2_coeff"] = t.l2_coeff;
  j["augment"] = t.augment;
  j["augmentation"] = {{"time_shift", t.augmentation.time_shift},
                       {"reverse", t.augmentation.reverse},
                       {"max_shift_fraction", t.augmentation.max_shift_fraction}};
  j["contrastive"] = t.contrastive;
  j["seed"] = t.seed;
  j["eval_every"] = t.eval_every;
  return j;
}

}  // namespace

ExperimentManifest ExperimentManifest::parse(const std::string& text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("manifest: invalid JSON: ") + e.what());
  }
  if (!root.is_object()) throw std::invalid_argument("manifest: top level must be an object");
  reject_unknown(root, {"data", "eval_data", "arch", "train", "folds", "fold_mode", "fraction"}, "manifest");

  ExperimentManifest m;
  m.text = text;
  m.base_dir = base_dir;
  if (!root.contains("data") || !root.contains("arch") || !root.contains("train")) {
    throw std::invalid_argument("manifest: 'data', 'arch' and 'train' are required");
  }
  m.data = get_as<std::string>(root, "data", "manifest");
  m.arch = get_as<std::string>(root, "arch", "manifest");
  read_opt(root, "eval_data", m.eval_data, "manifest");
  read_opt(root, "folds", m.folds, "manifest");
  read_opt(root, "fraction", m.fraction, "manifest");
  if (root.contains("fold_mode")) m.fold_mode = parse_fold_mode(get_as<std::string>(root, "fold_mode", "manifest"));

  const json& t = root.at("train");
  if (!t.is_object()) throw std::invalid_argument("manifest: 'train' must be an object");
  reject_unknown(t,
                 {"batch_size", "epochs", "lr_initial", "lr_after", "drop_epoch", "lambda", "tau", "sc_include_anchor",
                  "class_weights", "l2_coeff", "augment", "augmentation", "contrastive", "seed", "eval_every"},
                 "train");
  for (const char* key : {"epochs", "lambda", "tau"}) {
    if (!t.contains(key)) throw std::invalid_argument(std::string("manifest: train.") + key + " is required");
  }
  auto& c = m.train;
  read_opt(t, "batch_size", c.batch_size, "train");
  read_opt(t, "epochs", c.epochs, "train");
  read_opt(t, "lr_initial", c.lr_initial, "train");
  read_opt(t, "lr_after", c.lr_after, "train");
  c.drop_epoch = std::min(c.drop_epoch, c.epochs);
  read_opt(t, "drop_epoch", c.drop_epoch, "train");
  read_opt(t, "lambda", c.loss.lambda, "train");
  read_opt(t, "tau", c.loss.tau, "train");
  read_opt(t, "sc_include_anchor", c.loss.sc_include_anchor, "train");
  if (t.contains("class_weights")) c.loss.class_weights = get_as<std::vector<double>>(t, "class_weights", "train");
  read_opt(t, "l2_coeff", c.l2_coeff, "train");
  read_opt(t, "augment", c.augment, "train");
  read_opt(t, "contrastive", c.contrastive, "train");
  read_opt(t, "seed", c.seed, "train");
  read_opt(t, "eval_every", c.eval_every, "train");
  if (t.contains("augmentation")) {
    const json& a = t.at("augmentation");
    if (!a.is_object()) throw std::invalid_argument("manifest: train.augmentation must be an object");
    reject_unknown(a, {"time_shift", "reverse", "max_shift_fraction"}, "train.augmentation");
    read_opt(a, "time_shift", c.augmentation.time_shift, "train.augmentation");
    read_opt(a, "reverse", c.augmentation.reverse, "train.augmentation");
    read_opt(a, "max_shift_fraction", c.augmentation.max_shift_fraction, "train.augmentation");
  }
  c.validate();
  if (m.folds < 2) throw std::invalid_argument("manifest: folds must be >= 2");
  if (!(m.fraction > 0.0) || m.fraction > 1.0) throw std::invalid_argument("manifest: fraction must be in (0, 1]");
  return m;
}

ExperimentManifest ExperimentManifest::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open manifest " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse(ss.str(), path.parent_path());
}

std::filesystem::path ExperimentManifest::resolve(const std::string& relative) const {
  const std::filesystem::path p(relative);
  return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
}

std::string ExperimentManifest::canonical() const {
  json j;
  j["data"] = data;
  if (!eval_data.empty()) j["eval_data"] = eval_data;
  j["arch"] = arch;
  j["train"] = train_to_json(train);
  j["folds"] = folds;
  j["fold_mode"] = std::string(fold_mode_name(fold_mode));
  j["fraction"] = fraction;
  return j.dump();
}

std::string config_hash(const ExperimentManifest& manifest, const std::string& arch_text) {
  const auto h = fnv1a64(manifest.canonical() + '\n' + arch_text);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace concad
