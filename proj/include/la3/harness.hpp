#pragma once

// Trains the desk classifier with a policy applied online (one triple per
// sample per epoch) and reports clean test accuracy.

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "la3/classifier.hpp"
#include "la3/policy.hpp"

namespace la3 {

inline constexpr std::uint64_t kAugmentTag = 0x4155474d454e5404ULL;

/// Uniform choice among the label's triples, then fresh magnitudes.
inline ImageRaster augment_sample(const CompositePolicy& policy, const ImageRaster& image, int label, Rng& rng,
                                  std::vector<AppliedOp>* trace = nullptr) {
  const auto& lp = policy.for_label(label);
  const AugTriple& t = lp.triples[rng.index(lp.triples.size())];
  return apply_triple(image, t, rng, trace);
}

enum class PolicyKind { none, random, composite };

inline const char* policy_kind_name(PolicyKind k) {
  switch (k) {
    case PolicyKind::none: return "none";
    case PolicyKind::random: return "random";
    case PolicyKind::composite: return "policy";
  }
  return "?";
}

struct PolicySource {
  PolicyKind kind = PolicyKind::none;
  CompositePolicy policy;  // used when kind == composite
};

struct TrainRunConfig {
  ClassifierConfig classifier;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
};

struct SeedResult {
  std::uint64_t seed = 0;
  double overall = 0.0;
  std::vector<double> per_class;
};

struct TrainReport {
  double overall_mean = 0.0;
  double overall_std = 0.0;
  std::vector<double> per_class_mean;
  std::vector<SeedResult> runs;
  std::string source;
};

inline SeedResult evaluate_per_class(const DeskClassifier& clf, const LabeledDataset& test) {
  SeedResult r;
  std::vector<std::size_t> total(static_cast<std::size_t>(test.num_classes), 0), correct(total.size(), 0);
  std::size_t all_correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto y = static_cast<std::size_t>(test.labels[i]);
    const bool ok = predict_class(clf, test.images[i]) == test.labels[i];
    ++total[y];
    correct[y] += ok;
    all_correct += ok;
  }
  for (std::size_t y = 0; y < total.size(); ++y)
    r.per_class.push_back(total[y] ? static_cast<double>(correct[y]) / static_cast<double>(total[y]) : 0.0);
  r.overall = static_cast<double>(all_correct) / static_cast<double>(test.size());
  return r;
}

inline TrainReport train_with_policy(const LabeledDataset& train, const LabeledDataset& test, const PolicySource& source,
                                     const TrainRunConfig& cfg) {
  if (cfg.seeds.empty()) throw config_error("train_with_policy: at least one seed required");
  if (test.empty()) throw input_error("train_with_policy: empty test set");
  validate(test, false);
  if (test.num_classes != train.num_classes) throw input_error("train_with_policy: train/test class counts differ");
  if (source.kind == PolicyKind::composite && source.policy.num_labels() != train.num_classes)
    throw input_error("train_with_policy: policy covers " + std::to_string(source.policy.num_labels()) +
                      " labels but the dataset has " + std::to_string(train.num_classes));

  TrainReport report;
  report.source = policy_kind_name(source.kind);
  for (auto seed : cfg.seeds) {
    AugmentHook hook;
    if (source.kind == PolicyKind::composite) {
      hook = [&, seed](const ImageRaster& img, int label, std::size_t idx, int epoch) {
        Rng rng(derive_seed(seed, kAugmentTag, static_cast<std::uint64_t>(epoch), idx));
        return augment_sample(source.policy, img, label, rng);
      };
    } else if (source.kind == PolicyKind::random) {
      hook = [seed](const ImageRaster& img, int, std::size_t idx, int epoch) {
        Rng rng(derive_seed(seed, kAugmentTag, static_cast<std::uint64_t>(epoch), idx));
        const auto t = AugTriple::from_code(static_cast<int>(rng.index(kNumTriples)));
        return apply_triple(img, t, rng);
      };
    }
    const auto fit = train_classifier(train, cfg.classifier, seed, hook);
    SeedResult r = evaluate_per_class(fit.classifier, test);
    r.seed = seed;
    report.runs.push_back(std::move(r));
  }
  const double n = static_cast<double>(report.runs.size());
  report.per_class_mean.assign(static_cast<std::size_t>(train.num_classes), 0.0);
  for (const auto& r : report.runs) {
    report.overall_mean += r.overall / n;
    for (std::size_t y = 0; y < r.per_class.size(); ++y) report.per_class_mean[y] += r.per_class[y] / n;
  }
  double var = 0.0;
  for (const auto& r : report.runs) var += (r.overall - report.overall_mean) * (r.overall - report.overall_mean);
  report.overall_std = report.runs.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  return report;
}

inline std::string report_to_json(const TrainReport& r, const std::string& config_digest) {
  nlohmann::ordered_json j;
  j["overall"] = r.overall_mean;
  j["overall_std"] = r.overall_std;
  j["per_class"] = r.per_class_mean;
  auto seeds = nlohmann::ordered_json::array();
  for (const auto& run : r.runs) seeds.push_back(run.seed);
  j["seeds"] = seeds;
  auto runs = nlohmann::ordered_json::array();
  for (const auto& run : r.runs) runs.push_back({{"seed", run.seed}, {"overall", run.overall}, {"per_class", run.per_class}});
  j["runs"] = runs;
  j["source"] = r.source;
  j["config_digest"] = config_digest;
  return j.dump();
}

inline std::string report_to_table(const TrainReport& r) {
  std::string out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "source: %s  seeds: %zu\n", r.source.c_str(), r.runs.size());
  out += buf;
  for (std::size_t y = 0; y < r.per_class_mean.size(); ++y) {
    std::snprintf(buf, sizeof buf, "class %-4zu %.4f\n", y, r.per_class_mean[y]);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "overall    %.4f +- %.4f\n", r.overall_mean, r.overall_std);
  out += buf;
  return out;
}

}  // namespace la3
