#pragma once

// Density-matching rewards: the accuracy change a frozen, pre-trained
// classifier shows on augmented vs. original validation data, per label or
// over the whole validation set.

#include <cstdint>
#include <string>
#include <vector>

#include "la3/augment.hpp"
#include "la3/classifier.hpp"
#include "la3/dataset.hpp"

namespace la3 {

enum class Phase { warmup, search };

inline const char* phase_name(Phase p) { return p == Phase::warmup ? "warmup" : "search"; }

inline Phase phase_from_name(std::string_view s) {
  if (s == "warmup") return Phase::warmup;
  if (s == "search") return Phase::search;
  throw format_error("unknown phase '" + std::string(s) + "'");
}

/// One density-matching evaluation: a row of the search history.
struct EvalRecord {
  int iteration = 0;
  int label = 0;
  AugTriple triple;
  double reward = 0.0;
  Phase phase = Phase::warmup;
  std::uint64_t seed = 0;

  bool operator==(const EvalRecord&) const = default;
};

/// Anything that can score a triple. Implementations: the built-in evaluator,
/// an external process speaking the wire protocol, and test oracles.
class RewardSource {
 public:
  virtual ~RewardSource() = default;
  virtual int num_labels() const = 0;
  /// r_{tau,y}: accuracy change on the validation samples of `label`.
  virtual double label_reward(const AugTriple& triple, int label, std::uint64_t seed) = 0;
  /// r_tau: accuracy change over the whole validation set.
  virtual double dataset_reward(const AugTriple& triple, std::uint64_t seed) = 0;
  /// True when label_reward may be called concurrently from several threads.
  virtual bool concurrent_safe() const { return false; }
};

/// Per-sample magnitude stream: keyed by the request seed and the sample's
/// position in the whole validation set, so label and dataset scopes see the
/// same draws for the same sample.
inline std::uint64_t sample_seed(std::uint64_t request_seed, std::size_t val_index) {
  return derive_seed(request_seed, static_cast<std::uint64_t>(val_index));
}

/// Frozen classifier + validation data with cached baselines.
class EvalContext final : public RewardSource {
 public:
  EvalContext(DeskClassifier classifier, LabeledDataset val)
      : classifier_(std::move(classifier)), val_(std::move(val)) {
    validate(val_, true);
    if (val_.num_classes != classifier_.num_classes)
      throw config_error("evaluator: classifier and validation set disagree on class count");
    by_label_.resize(static_cast<std::size_t>(val_.num_classes));
    base_correct_.assign(val_.size(), 0);
    for (std::size_t i = 0; i < val_.size(); ++i) {
      by_label_[static_cast<std::size_t>(val_.labels[i])].push_back(i);
      base_correct_[i] = predict_class(classifier_, val_.images[i]) == val_.labels[i];
    }
    baseline_.resize(by_label_.size());
    for (std::size_t y = 0; y < by_label_.size(); ++y) baseline_[y] = fraction(by_label_[y], base_correct_);
    std::vector<std::size_t> all(val_.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    baseline_overall_ = fraction(all, base_correct_);
  }

  int num_labels() const override { return val_.num_classes; }
  bool concurrent_safe() const override { return true; }

  const DeskClassifier& classifier() const { return classifier_; }
  const LabeledDataset& validation() const { return val_; }
  const std::vector<std::size_t>& label_indices(int label) const { return by_label_.at(static_cast<std::size_t>(label)); }
  double baseline(int label) const { return baseline_.at(static_cast<std::size_t>(label)); }
  double baseline_overall() const { return baseline_overall_; }

  /// R_y over the given images (all carrying `label`).
  double per_label_accuracy(int label, const std::vector<ImageRaster>& images) const {
    check_label(label);
    if (images.empty()) throw input_error("per_label_accuracy: empty image list");
    std::size_t correct = 0;
    for (const auto& img : images) correct += predict_class(classifier_, img) == label;
    return static_cast<double>(correct) / static_cast<double>(images.size());
  }

  double label_reward(const AugTriple& triple, int label, std::uint64_t seed) override {
    check_label(label);
    const auto& idx = by_label_[static_cast<std::size_t>(label)];
    return augmented_fraction(idx, triple, seed) - baseline_[static_cast<std::size_t>(label)];
  }

  double dataset_reward(const AugTriple& triple, std::uint64_t seed) override {
    std::vector<std::size_t> all(val_.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return augmented_fraction(all, triple, seed) - baseline_overall_;
  }

 private:
  void check_label(int label) const {
    if (label < 0 || label >= val_.num_classes) throw input_error("unknown label " + std::to_string(label));
  }

  static double fraction(const std::vector<std::size_t>& idx, const std::vector<char>& correct) {
    std::size_t n = 0;
    for (auto i : idx) n += correct[i] != 0;
    return static_cast<double>(n) / static_cast<double>(idx.size());
  }

  double augmented_fraction(const std::vector<std::size_t>& idx, const AugTriple& triple, std::uint64_t seed) const {
    std::size_t n = 0;
    for (auto i : idx) {
      Rng rng(sample_seed(seed, i));
      const ImageRaster aug = apply_triple(val_.images[i], triple, rng);
      n += predict_class(classifier_, aug) == val_.labels[i];
    }
    return static_cast<double>(n) / static_cast<double>(idx.size());
  }

  DeskClassifier classifier_;
  LabeledDataset val_;
  std::vector<std::vector<std::size_t>> by_label_;
  std::vector<char> base_correct_;
  std::vector<double> baseline_;
  double baseline_overall_ = 0.0;
};

}  // namespace la3
