#pragma once

// Synthetic reward source: r(t, y) = sum of per-(op, label) effects over the
// three ops, plus optional Gaussian noise keyed by the request seed.

#include <cmath>
#include <vector>

#include "la3/evaluator.hpp"

namespace la3::support {

class AdditiveOracle final : public RewardSource {
 public:
  AdditiveOracle(int num_labels, std::uint64_t seed, double effect_bound = 0.05, double noise_sigma = 0.005)
      : num_labels_(num_labels), noise_sigma_(noise_sigma), effects_(static_cast<std::size_t>(num_labels)) {
    Rng rng(seed);
    for (auto& row : effects_)
      for (auto& e : row) e = rng.uniform(-effect_bound, effect_bound);
  }

  int num_labels() const override { return num_labels_; }
  bool concurrent_safe() const override { return true; }

  double effect(int op, int label) const {
    return effects_[static_cast<std::size_t>(label)][static_cast<std::size_t>(op)];
  }

  double true_reward(const AugTriple& t, int label) const {
    double r = 0.0;
    for (auto k : t.ops) r += effect(op_code(k), label);
    return r;
  }

  double label_reward(const AugTriple& t, int label, std::uint64_t seed) override {
    return true_reward(t, label) + noise(seed);
  }

  double dataset_reward(const AugTriple& t, std::uint64_t seed) override {
    double r = 0.0;
    for (int y = 0; y < num_labels_; ++y) r += true_reward(t, y);
    return r / num_labels_ + noise(seed);
  }

 private:
  double noise(std::uint64_t seed) const {
    if (noise_sigma_ == 0.0) return 0.0;
    Rng rng(seed);
    const double u1 = 1.0 - rng.uniform();  // (0, 1]
    const double u2 = rng.uniform();
    return noise_sigma_ * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  int num_labels_;
  double noise_sigma_;
  std::vector<std::array<double, kNumOps>> effects_;
};

}  // namespace la3::support
