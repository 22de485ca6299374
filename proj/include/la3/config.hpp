#pragma once

// Flat key-value run configuration ("key = value", '#' comments) and the
// pipeline pieces built from it.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "la3/classifier.hpp"
#include "la3/dataset.hpp"
#include "la3/evaluator.hpp"
#include "la3/harness.hpp"
#include "la3/policy.hpp"
#include "la3/protocol.hpp"
#include "la3/search.hpp"

namespace la3 {

class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<config>") {
    KeyValueConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw config_error(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
  }

  static KeyValueConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
  }

  void set(const std::string& key, const std::string& value) {
    if (key.empty()) throw config_error("config: empty key");
    values_[key] = value;
  }

  /// "key=value" override, as given on the command line.
  void apply_override(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw config_error("override '" + kv + "' is not key=value");
    set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string str(const std::string& key, const std::string& def) const {
    auto it = values_.find(key);
    return it == values_.end() ? def : it->second;
  }

  std::string required(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end() || it->second.empty()) throw config_error("config: missing required key '" + key + "'");
    return it->second;
  }

  long long integer(const std::string& key, long long def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    try {
      std::size_t used = 0;
      const long long v = std::stoll(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw config_error("config: '" + key + "' must be an integer, got '" + it->second + "'");
    }
  }

  std::uint64_t unsigned_integer(const std::string& key) const {
    const std::string s = required(key);
    try {
      std::size_t used = 0;
      const auto v = std::stoull(s, &used);
      if (used != s.size() || s.front() == '-') throw std::invalid_argument("bad");
      return v;
    } catch (const std::exception&) {
      throw config_error("config: '" + key + "' must be a non-negative integer, got '" + s + "'");
    }
  }

  double real(const std::string& key, double def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    try {
      std::size_t used = 0;
      const double v = std::stod(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw config_error("config: '" + key + "' must be a number, got '" + it->second + "'");
    }
  }

  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(str(key, ""));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

  /// Canonical "key=value\n" listing, sorted by key. Output paths and the
  /// thread cap do not change results and are left out.
  std::string canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) {
      if (k == "threads" || k.rfind("out.", 0) == 0) continue;
      out += k + "=" + v + "\n";
    }
    return out;
  }

  std::string digest() const { return digest_hex(canonical()); }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// Typed views.

inline SearchConfig search_config_from(const KeyValueConfig& kv) {
  SearchConfig c;
  c.master_seed = kv.unsigned_integer("seed");
  c.total_iterations = static_cast<int>(kv.integer("search.T", 500));
  c.warmup_iterations = static_cast<int>(kv.integer("search.T0", 100));
  c.n_mutation = static_cast<int>(kv.integer("search.mutation", 10));
  c.n_unexplored = static_cast<int>(kv.integer("search.unexplored", 50));
  c.n_explored = static_cast<int>(kv.integer("search.explored", 40));
  const auto scope = kv.str("search.scope", "label");
  if (scope == "label") c.scope = RewardScope::label;
  else if (scope == "dataset") c.scope = RewardScope::dataset;
  else throw config_error("config: search.scope must be 'label' or 'dataset'");
  c.predictor.embed_dim = static_cast<int>(kv.integer("predictor.embed_dim", 100));
  c.predictor.hidden = static_cast<int>(kv.integer("predictor.hidden", 100));
  c.predictor.hidden_layers = static_cast<int>(kv.integer("predictor.layers", 3));
  c.predictor.epochs = static_cast<int>(kv.integer("predictor.epochs", 100));
  c.predictor.batch_size = static_cast<int>(kv.integer("predictor.batch_size", 64));
  c.predictor.lr = kv.real("predictor.lr", 0.01);
  c.predictor.embed_init = kv.real("predictor.embed_init", 0.01);
  c.threads = static_cast<int>(kv.integer("threads", 1));
  validate(c);
  return c;
}

inline ScoreParams score_params_from(const KeyValueConfig& kv) {
  ScoreParams p;
  p.alpha = kv.real("policy.alpha", 2.5);
  p.n_cand = static_cast<int>(kv.integer("policy.n_cand", 100));
  validate(p);
  return p;
}

inline ClassifierConfig classifier_config_from(const KeyValueConfig& kv) {
  ClassifierConfig c;
  if (kv.has("classifier.hidden")) {
    c.hidden.clear();
    for (const auto& s : kv.list("classifier.hidden")) {
      try {
        c.hidden.push_back(std::stoi(s));
      } catch (const std::exception&) {
        throw config_error("config: classifier.hidden must be a comma list of integers");
      }
    }
  }
  c.epochs = static_cast<int>(kv.integer("classifier.epochs", c.epochs));
  c.batch_size = static_cast<int>(kv.integer("classifier.batch_size", c.batch_size));
  c.lr = kv.real("classifier.lr", c.lr);
  return c;
}

inline SyntheticSpec synthetic_spec_from(const KeyValueConfig& kv, std::uint64_t seed) {
  SyntheticSpec s;
  s.num_classes = static_cast<int>(kv.integer("synthetic.classes", s.num_classes));
  s.per_class = static_cast<int>(kv.integer("synthetic.per_class", s.per_class));
  s.height = static_cast<int>(kv.integer("synthetic.height", s.height));
  s.width = static_cast<int>(kv.integer("synthetic.width", s.width));
  s.channels = static_cast<int>(kv.integer("synthetic.channels", s.channels));
  s.noise = kv.real("synthetic.noise", s.noise);
  if (kv.has("synthetic.plan")) {
    s.plan.clear();
    for (const auto& name : kv.list("synthetic.plan")) s.plan.push_back(pattern_from_name(name));
  }
  s.seed = seed;
  validate(s);
  return s;
}

inline SplitSpec split_spec_from(const KeyValueConfig& kv, std::uint64_t seed) {
  SplitSpec s;
  const auto mode = kv.str("split.mode", "per_class");
  if (mode == "per_class") s.mode = SplitMode::per_class_count;
  else if (mode == "total") s.mode = SplitMode::total_count;
  else throw config_error("config: split.mode must be 'per_class' or 'total'");
  const long long v = kv.integer("split.val_size", 50);
  if (v <= 0) throw config_error("config: split.val_size must be positive");
  s.val_size = static_cast<std::size_t>(v);
  s.seed = seed;
  return s;
}

inline constexpr std::uint64_t kDataTag = 0x44415441ULL;
inline constexpr std::uint64_t kTestDataTag = 0x54455354ULL;
inline constexpr std::uint64_t kSplitTag = 0x53504c54ULL;
inline constexpr std::uint64_t kPretrainTag = 0x50524554ULL;

/// The full labelled pool from which D^tr and D^val are split.
inline LabeledDataset load_dataset(const KeyValueConfig& kv) {
  const std::uint64_t seed = kv.unsigned_integer("seed");
  const auto kind = kv.str("dataset.kind", "synthetic");
  if (kind == "synthetic") return make_synthetic(synthetic_spec_from(kv, derive_seed(seed, kDataTag)));
  if (kind == "cifar10") {
    std::vector<std::filesystem::path> paths;
    for (const auto& p : kv.list("dataset.paths")) paths.emplace_back(p);
    if (paths.empty()) throw config_error("config: dataset.paths is required for cifar10");
    for (const auto& p : paths)
      if (!std::filesystem::exists(p)) throw io_error("dataset file not found: " + p.string());
    return load_cifar10_binary(paths);
  }
  throw config_error("config: dataset.kind must be 'synthetic' or 'cifar10'");
}

/// Held-out test data for the training harness.
inline LabeledDataset load_test_dataset(const KeyValueConfig& kv) {
  const std::uint64_t seed = kv.unsigned_integer("seed");
  const auto kind = kv.str("dataset.kind", "synthetic");
  if (kind == "synthetic") {
    auto spec = synthetic_spec_from(kv, derive_seed(seed, kTestDataTag));
    spec.per_class = static_cast<int>(kv.integer("synthetic.test_per_class", spec.per_class));
    return make_synthetic(spec);
  }
  std::vector<std::filesystem::path> paths;
  for (const auto& p : kv.list("dataset.test_paths")) paths.emplace_back(p);
  if (paths.empty()) throw config_error("config: dataset.test_paths is required for cifar10 training runs");
  for (const auto& p : paths)
    if (!std::filesystem::exists(p)) throw io_error("dataset file not found: " + p.string());
  return load_cifar10_binary(paths);
}

/// Pre-trains the target classifier on D^tr and caches D^val baselines.
inline std::unique_ptr<EvalContext> build_builtin_evaluator(const KeyValueConfig& kv) {
  const std::uint64_t seed = kv.unsigned_integer("seed");
  const LabeledDataset all = load_dataset(kv);
  auto [train, val] = split_train_val(all, split_spec_from(kv, derive_seed(seed, kSplitTag)));
  auto fit = pretrain_classifier(train, classifier_config_from(kv), derive_seed(seed, kPretrainTag));
  return std::make_unique<EvalContext>(std::move(fit.classifier), std::move(val));
}

inline int configured_num_labels(const KeyValueConfig& kv) {
  if (kv.str("dataset.kind", "synthetic") == "cifar10") return 10;
  return static_cast<int>(kv.integer("synthetic.classes", SyntheticSpec{}.num_classes));
}

inline std::unique_ptr<RewardSource> build_evaluator(const KeyValueConfig& kv) {
  const auto kind = kv.str("evaluator", "builtin");
  if (kind == "builtin") return build_builtin_evaluator(kv);
  if (kind == "external") {
    ExternalEvaluator::Options opt;
    opt.num_labels = static_cast<int>(kv.integer("evaluator.num_labels", configured_num_labels(kv)));
    opt.handshake_timeout_ms = static_cast<int>(kv.integer("evaluator.timeout_ms", 10000));
    if (kv.has("evaluator.val_spec")) {
      try {
        opt.val_spec = nlohmann::json::parse(kv.str("evaluator.val_spec", "null"));
      } catch (const nlohmann::json::exception&) {
        opt.val_spec = kv.str("evaluator.val_spec", "");
      }
    }
    return std::make_unique<ExternalEvaluator>(kv.required("evaluator.command"), opt);
  }
  throw config_error("config: evaluator must be 'builtin' or 'external'");
}

/// Harness training data: the D^tr split, optionally capped per class.
inline LabeledDataset harness_train_set(const KeyValueConfig& kv) {
  const std::uint64_t seed = kv.unsigned_integer("seed");
  const LabeledDataset all = load_dataset(kv);
  auto train = split_train_val(all, split_spec_from(kv, derive_seed(seed, kSplitTag))).first;
  const long long cap = kv.integer("harness.train_per_class", 0);
  if (cap > 0) {
    std::vector<std::size_t> keep;
    std::vector<long long> taken(static_cast<std::size_t>(train.num_classes), 0);
    for (std::size_t i = 0; i < train.size(); ++i)
      if (taken[static_cast<std::size_t>(train.labels[i])]++ < cap) keep.push_back(i);
    train = train.subset(keep);
  }
  return train;
}

inline ClassifierConfig harness_classifier_config(const KeyValueConfig& kv) {
  ClassifierConfig c = classifier_config_from(kv);
  c.epochs = static_cast<int>(kv.integer("harness.epochs", c.epochs));
  c.lr = kv.real("harness.lr", c.lr);
  c.batch_size = static_cast<int>(kv.integer("harness.batch_size", c.batch_size));
  return c;
}

}  // namespace la3
