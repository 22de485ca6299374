#pragma once

// Stage 2: per-label policy construction from the trained predictor.
// Greedy minimum-redundancy maximum-reward selection:
//   v(t, y) = r(t, y) - alpha * mean_r(y) * redundancy(t, selected)
// where redundancy is the mean multiset overlap with the selected triples.

#include <algorithm>
#include <cmath>
#include <array>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "la3/augment.hpp"
#include "la3/predictor.hpp"
#include "la3/protocol.hpp"

namespace la3 {

struct ScoreParams {
  double alpha = 2.5;
  int n_cand = 100;
};

inline void validate(const ScoreParams& p) {
  if (!(p.alpha >= 0.0)) throw config_error("policy: alpha must be >= 0");
  if (p.n_cand < 1 || p.n_cand > kNumTriples) throw config_error("policy: n_cand must be in [1, 4096]");
}

struct LabelPolicy {
  int label = 0;
  std::vector<AugTriple> triples;

  bool operator==(const LabelPolicy&) const = default;
};

struct CompositePolicy {
  std::vector<LabelPolicy> policies;  // index = label
  double alpha = 0.0;
  int n_cand = 0;
  std::string method = "mrmr";
  std::string config_digest;

  int num_labels() const { return static_cast<int>(policies.size()); }
  const LabelPolicy& for_label(int label) const {
    if (label < 0 || label >= num_labels() || policies[static_cast<std::size_t>(label)].triples.empty())
      throw input_error("policy: no triples for label " + std::to_string(label));
    return policies[static_cast<std::size_t>(label)];
  }
  bool operator==(const CompositePolicy&) const = default;
};

struct FullSpaceScores {
  std::vector<double> scores;  // indexed by triple code
  double mean = 0.0;           // average predicted reward over the space
};

inline std::vector<AugTriple> all_triples() {
  std::vector<AugTriple> out;
  out.reserve(kNumTriples);
  for (int c = 0; c < kNumTriples; ++c) out.push_back(AugTriple::from_code(c));
  return out;
}

inline FullSpaceScores predict_full_space(const PredictorNet& net, int label) {
  FullSpaceScores fs;
  fs.scores = predict_many(net, label, all_triples());
  fs.mean = std::accumulate(fs.scores.begin(), fs.scores.end(), 0.0) / static_cast<double>(fs.scores.size());
  return fs;
}

/// |a ∩ b| as multisets of ops.
inline int overlap(const AugTriple& a, const AugTriple& b) {
  std::array<int, kNumOps> ca{}, cb{};
  for (auto k : a.ops) ++ca[static_cast<std::size_t>(op_code(k))];
  for (auto k : b.ops) ++cb[static_cast<std::size_t>(op_code(k))];
  int n = 0;
  for (std::size_t i = 0; i < ca.size(); ++i) n += std::min(ca[i], cb[i]);
  return n;
}

/// Mean overlap with the selected triples; 0 for an empty selection.
inline double redundancy(const AugTriple& t, const std::vector<AugTriple>& selected) {
  if (selected.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& s : selected) sum += overlap(t, s);
  return sum / static_cast<double>(selected.size());
}

/// Fused multiply-add: one rounding, so decimal-exact cases stay exact.
inline double mrmr_score(double predicted, double mean_predicted, double redundancy_value, const ScoreParams& p) {
  return std::fma(-p.alpha, mean_predicted * redundancy_value, predicted);
}

/// Greedy selection over an arbitrary space of distinct triples. `scores[i]`
/// belongs to `space[i]`. Each step takes the highest-scoring unselected
/// triple; ties go to the lexicographically lowest triple. Overlap sums are
/// maintained incrementally (integers, so exact).
inline std::vector<AugTriple> greedy_mrmr(const std::vector<AugTriple>& space, const std::vector<double>& scores,
                                          double mean_predicted, const ScoreParams& p) {
  if (space.size() != scores.size()) throw shape_error("greedy_mrmr: space/scores length mismatch");
  if (p.n_cand < 0 || static_cast<std::size_t>(p.n_cand) > space.size())
    throw config_error("greedy_mrmr: n_cand exceeds the search space");
  if (!(p.alpha >= 0.0)) throw config_error("greedy_mrmr: alpha must be >= 0");

  std::vector<double> overlap_sum(space.size(), 0.0);
  std::vector<char> taken(space.size(), 0);
  std::vector<AugTriple> selected;
  selected.reserve(static_cast<std::size_t>(p.n_cand));
  for (int step = 0; step < p.n_cand; ++step) {
    std::size_t best = space.size();
    double best_v = 0.0;
    for (std::size_t i = 0; i < space.size(); ++i) {
      if (taken[i]) continue;
      const double red = selected.empty() ? 0.0 : overlap_sum[i] / static_cast<double>(selected.size());
      const double v = mrmr_score(scores[i], mean_predicted, red, p);
      if (best == space.size() || v > best_v || (v == best_v && space[i] < space[best])) {
        best = i;
        best_v = v;
      }
    }
    taken[best] = 1;
    selected.push_back(space[best]);
    for (std::size_t i = 0; i < space.size(); ++i)
      if (!taken[i]) overlap_sum[i] += overlap(space[i], space[best]);
  }
  return selected;
}

/// The k highest scores, ties lexicographic.
inline std::vector<AugTriple> top_k(const std::vector<AugTriple>& space, const std::vector<double>& scores, int k) {
  if (k < 0 || static_cast<std::size_t>(k) > space.size()) throw config_error("top_k: k exceeds the search space");
  std::vector<std::size_t> idx(space.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return space[a] < space[b];
  });
  std::vector<AugTriple> out;
  for (int i = 0; i < k; ++i) out.push_back(space[idx[static_cast<std::size_t>(i)]]);
  return out;
}

inline CompositePolicy construct_policy(const PredictorNet& net, int num_labels, const ScoreParams& params) {
  validate(params);
  if (num_labels < 1 || num_labels > net.num_labels()) throw config_error("construct_policy: bad label count");
  CompositePolicy policy;
  policy.alpha = params.alpha;
  policy.n_cand = params.n_cand;
  policy.method = "mrmr";
  const auto space = all_triples();
  for (int y = 0; y < num_labels; ++y) {
    const auto fs = predict_full_space(net, y);
    policy.policies.push_back({y, greedy_mrmr(space, fs.scores, fs.mean, params)});
  }
  return policy;
}

inline CompositePolicy topk_policy(const PredictorNet& net, int num_labels, int k) {
  if (k < 1 || k > kNumTriples) throw config_error("topk_policy: k must be in [1, 4096]");
  if (num_labels < 1 || num_labels > net.num_labels()) throw config_error("topk_policy: bad label count");
  CompositePolicy policy;
  policy.alpha = 0.0;
  policy.n_cand = k;
  policy.method = "topk";
  const auto space = all_triples();
  for (int y = 0; y < num_labels; ++y) {
    const auto fs = predict_full_space(net, y);
    policy.policies.push_back({y, top_k(space, fs.scores, k)});
  }
  return policy;
}

/// Repeats one label's triples for every label (label-invariant policy).
inline CompositePolicy broadcast_policy(const CompositePolicy& single, int num_labels) {
  if (single.policies.empty()) throw input_error("broadcast_policy: empty policy");
  CompositePolicy out = single;
  out.policies.clear();
  for (int y = 0; y < num_labels; ++y) out.policies.push_back({y, single.policies.front().triples});
  return out;
}

/// Per label, the share of each op across all op slots of its triples.
inline std::vector<std::array<double, kNumOps>> policy_op_histogram(const CompositePolicy& policy) {
  std::vector<std::array<double, kNumOps>> out;
  for (const auto& lp : policy.policies) {
    std::array<double, kNumOps> h{};
    for (const auto& t : lp.triples)
      for (auto k : t.ops) h[static_cast<std::size_t>(op_code(k))] += 1.0;
    const double slots = 3.0 * static_cast<double>(lp.triples.size());
    if (slots > 0)
      for (auto& v : h) v /= slots;
    out.push_back(h);
  }
  return out;
}

inline std::string histogram_report(const CompositePolicy& policy) {
  const auto hist = policy_op_histogram(policy);
  std::string out = "label";
  for (auto n : kOpNames) out += "\t" + std::string(n);
  out += "\n";
  char buf[32];
  for (std::size_t y = 0; y < hist.size(); ++y) {
    out += std::to_string(y);
    for (double v : hist[y]) {
      std::snprintf(buf, sizeof buf, "\t%.4f", v);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Policy file.

inline constexpr int kPolicyVersion = 1;

inline std::string policy_to_json(const CompositePolicy& p) {
  nlohmann::ordered_json j;
  j["version"] = kPolicyVersion;
  auto ops = nlohmann::ordered_json::array();
  for (auto n : kOpNames) ops.push_back(std::string(n));
  j["ops"] = ops;
  j["num_labels"] = p.num_labels();
  j["alpha"] = p.alpha;
  j["n_cand"] = p.n_cand;
  auto pols = nlohmann::ordered_json::array();
  for (const auto& lp : p.policies) {
    nlohmann::ordered_json pj;
    pj["label"] = lp.label;
    auto ts = nlohmann::ordered_json::array();
    for (const auto& t : lp.triples) ts.push_back({op_code(t[0]), op_code(t[1]), op_code(t[2])});
    pj["triples"] = ts;
    pols.push_back(std::move(pj));
  }
  j["policies"] = pols;
  j["method"] = p.method;
  j["config_digest"] = p.config_digest;
  return j.dump();
}

inline CompositePolicy policy_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("version").get<int>() != kPolicyVersion) throw format_error("policy: unsupported version");
    if (j.at("ops") != op_names_json()) throw format_error("policy: op table does not match the canonical 16 ops");
    CompositePolicy p;
    p.alpha = j.at("alpha").get<double>();
    p.n_cand = j.at("n_cand").get<int>();
    p.method = j.value("method", std::string("mrmr"));
    p.config_digest = j.value("config_digest", std::string());
    const int n = j.at("num_labels").get<int>();
    const auto& pols = j.at("policies");
    if (!pols.is_array() || static_cast<int>(pols.size()) != n)
      throw format_error("policy: expected exactly one policy per label");
    for (int y = 0; y < n; ++y) {
      const auto& pj = pols[static_cast<std::size_t>(y)];
      LabelPolicy lp;
      lp.label = pj.at("label").get<int>();
      if (lp.label != y) throw format_error("policy: policies must be ordered by label");
      for (const auto& tj : pj.at("triples")) lp.triples.push_back(triple_from_json(tj));
      p.policies.push_back(std::move(lp));
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw format_error(std::string("policy: ") + e.what());
  }
}

inline void save_policy(const std::filesystem::path& path, const CompositePolicy& p) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("cannot write " + path.string());
  out << policy_to_json(p) << '\n';
  if (!out) throw io_error("write failed: " + path.string());
}

inline CompositePolicy load_policy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return policy_from_json(text);
}

}  // namespace la3
