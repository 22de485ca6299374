#pragma once

// Stage 1: warm-up with random triples, then predictor-guided exploration.
// Each search iteration retrains the predictor from scratch on the whole
// history, builds a candidate pool per label (mutations of the label's last
// choice, unexplored triples, reward-weighted explored triples), and evaluates
// the candidate with the highest predicted reward.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "la3/augment.hpp"
#include "la3/evaluator.hpp"
#include "la3/predictor.hpp"
#include "la3/protocol.hpp"

namespace la3 {

enum class RewardScope { label, dataset };

struct SearchConfig {
  int total_iterations = 500;   // T
  int warmup_iterations = 100;  // T0
  int n_mutation = 10;
  int n_unexplored = 50;
  int n_explored = 40;
  std::uint64_t master_seed = 0;
  RewardScope scope = RewardScope::label;
  PredictorConfig predictor;
  int threads = 1;
};

inline void validate(const SearchConfig& c) {
  if (c.warmup_iterations < 1) throw config_error("search: warm-up iterations must be >= 1");
  if (c.total_iterations < c.warmup_iterations)
    throw config_error("search: total iterations must be >= warm-up iterations");
  if (c.n_mutation < 0 || c.n_unexplored < 0 || c.n_explored < 0 ||
      c.n_mutation + c.n_unexplored + c.n_explored == 0)
    throw config_error("search: candidate counts must be non-negative and not all zero");
  if (c.threads < 1) throw config_error("search: threads must be >= 1");
}

// Stream tags keep the derived seeds of different purposes apart.
inline constexpr std::uint64_t kWarmupTag = 0x5741524d55500001ULL;
inline constexpr std::uint64_t kCandidateTag = 0x43414e4444000002ULL;
inline constexpr std::uint64_t kPredictorTag = 0x5052454449430003ULL;

inline std::uint64_t eval_seed(std::uint64_t master, int iteration, int label) {
  return derive_seed(master, static_cast<std::uint64_t>(iteration), static_cast<std::uint64_t>(label));
}

inline std::uint64_t predictor_seed(std::uint64_t master, int iteration) {
  return derive_seed(master, kPredictorTag, static_cast<std::uint64_t>(iteration));
}

/// Append-only evaluation history with per-label explored-set index.
class SearchHistory {
 public:
  struct Stats {
    double sum = 0.0;
    int count = 0;
    double mean() const { return sum / count; }
  };

  explicit SearchHistory(int num_labels = 0)
      : num_labels_(num_labels),
        explored_(static_cast<std::size_t>(std::max(num_labels, 0))),
        last_chosen_(static_cast<std::size_t>(std::max(num_labels, 0))) {}

  int num_labels() const { return num_labels_; }
  const std::vector<EvalRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

  void append(const EvalRecord& r) {
    if (r.label < 0 || r.label >= num_labels_) throw input_error("history: label out of range");
    if (!records_.empty() && r.iteration < records_.back().iteration)
      throw input_error("history: records must be ordered by iteration");
    records_.push_back(r);
    auto& s = explored_[static_cast<std::size_t>(r.label)][r.triple];
    s.sum += r.reward;
    ++s.count;
    last_chosen_[static_cast<std::size_t>(r.label)] = r.triple;
  }

  /// Explored triples of a label (ordered by triple code) with reward stats.
  const std::map<AugTriple, Stats>& explored(int label) const { return explored_.at(static_cast<std::size_t>(label)); }
  bool is_explored(int label, const AugTriple& t) const { return explored(label).count(t) != 0; }
  const std::optional<AugTriple>& last_chosen(int label) const { return last_chosen_.at(static_cast<std::size_t>(label)); }

  /// Number of leading iterations for which every label has a record.
  int completed_iterations() const {
    if (num_labels_ == 0) return 0;
    return static_cast<int>(records_.size() / static_cast<std::size_t>(num_labels_));
  }

 private:
  int num_labels_;
  std::vector<EvalRecord> records_;
  std::vector<std::map<AugTriple, Stats>> explored_;
  std::vector<std::optional<AugTriple>> last_chosen_;
};

// ---------------------------------------------------------------------------
// History JSONL.

inline std::string record_to_jsonl(const EvalRecord& r) {
  nlohmann::ordered_json j;
  j["iter"] = r.iteration;
  j["label"] = r.label;
  j["triple"] = triple_to_json(r.triple);
  j["reward"] = r.reward;
  j["phase"] = phase_name(r.phase);
  j["seed"] = r.seed;
  return j.dump();
}

inline EvalRecord record_from_jsonl(const std::string& line) {
  try {
    auto j = nlohmann::json::parse(line);
    EvalRecord r;
    r.iteration = j.at("iter").get<int>();
    r.label = j.at("label").get<int>();
    r.triple = triple_from_json(j.at("triple"));
    r.reward = j.at("reward").get<double>();
    r.phase = phase_from_name(j.at("phase").get<std::string>());
    r.seed = j.at("seed").get<std::uint64_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw format_error(std::string("history line: ") + e.what());
  }
}

/// Reads a history file. A trailing partial line (interrupted write) is dropped.
inline std::vector<EvalRecord> read_history_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<EvalRecord> out;
  std::size_t pos = 0;
  while (pos < content.size()) {
    const auto nl = content.find('\n', pos);
    if (nl == std::string::npos) break;
    const std::string line = content.substr(pos, nl - pos);
    if (!line.empty()) out.push_back(record_from_jsonl(line));
    pos = nl + 1;
  }
  return out;
}

inline void write_history_jsonl(const std::filesystem::path& path, const std::vector<EvalRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("cannot write " + path.string());
  for (const auto& r : records) out << record_to_jsonl(r) << '\n';
  if (!out) throw io_error("write failed: " + path.string());
}

// ---------------------------------------------------------------------------

namespace detail {

inline double evaluate(RewardSource& source, RewardScope scope, const AugTriple& t, int label, std::uint64_t seed) {
  return scope == RewardScope::label ? source.label_reward(t, label, seed) : source.dataset_reward(t, seed);
}

inline AugTriple random_triple(Rng& rng) {
  return AugTriple::from_code(static_cast<int>(rng.index(kNumTriples)));
}

/// Runs fn(i) for i in [0, n). Results must be written by index so the
/// outcome is independent of scheduling.
template <typename Fn>
void parallel_for(int n, int threads, bool allowed, Fn&& fn) {
  if (!allowed || threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  std::vector<std::thread> pool;
  const int workers = std::min(threads, n);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

/// Number of label slots the search iterates over: one per class for the
/// label-aware objective, a single slot for the dataset-level objective.
inline int search_slots(const RewardSource& source, RewardScope scope) {
  return scope == RewardScope::label ? source.num_labels() : 1;
}

/// One uniformly random triple per label, evaluated and appended.
inline void warmup_iteration(RewardSource& source, SearchHistory& history, const SearchConfig& cfg, int iteration) {
  if (iteration >= cfg.warmup_iterations) throw usage_error("warmup_iteration: iteration is past warm-up");
  const int n = history.num_labels();
  std::vector<EvalRecord> recs(static_cast<std::size_t>(n));
  detail::parallel_for(n, cfg.threads, source.concurrent_safe(), [&](int y) {
    Rng rng(derive_seed(cfg.master_seed, kWarmupTag, static_cast<std::uint64_t>(iteration), static_cast<std::uint64_t>(y)));
    EvalRecord& r = recs[static_cast<std::size_t>(y)];
    r.iteration = iteration;
    r.label = y;
    r.triple = detail::random_triple(rng);
    r.seed = eval_seed(cfg.master_seed, iteration, y);
    r.phase = Phase::warmup;
    r.reward = detail::evaluate(source, cfg.scope, r.triple, y, r.seed);
  });
  for (const auto& r : recs) history.append(r);
}

/// Mutates 1 or 2 positions (chosen uniformly) to different, uniformly drawn ops.
inline AugTriple mutate(const AugTriple& t, Rng& rng) {
  AugTriple out = t;
  std::array<bool, 3> change{false, false, false};
  if (rng.coin()) {
    change[rng.index(3)] = true;
  } else {
    change = {true, true, true};
    change[rng.index(3)] = false;
  }
  for (std::size_t i = 0; i < 3; ++i) {
    if (!change[i]) continue;
    const int old = op_code(out[i]);
    out[i] = static_cast<OpKind>((old + 1 + static_cast<int>(rng.index(kNumOps - 1))) % kNumOps);
  }
  return out;
}

struct CandidatePool {
  std::vector<AugTriple> mutations;
  std::vector<AugTriple> unexplored;
  std::vector<AugTriple> explored;
  std::vector<AugTriple> merged;  // deduplicated, first occurrence kept
};

/// Builds a label's candidate pool from the current history.
inline CandidatePool candidate_pool_parts(int label, const SearchHistory& history, const SearchConfig& cfg, Rng& rng) {
  const auto& last = history.last_chosen(label);
  if (!last) throw usage_error("candidate_pool: label has no previously chosen triple");
  CandidatePool pool;

  for (int i = 0; i < cfg.n_mutation; ++i) pool.mutations.push_back(mutate(*last, rng));

  const auto& explored = history.explored(label);
  const std::size_t n_unexplored_total = static_cast<std::size_t>(kNumTriples) - explored.size();
  if (n_unexplored_total <= static_cast<std::size_t>(cfg.n_unexplored)) {
    for (int code = 0; code < kNumTriples; ++code) {
      const auto t = AugTriple::from_code(code);
      if (!explored.count(t)) pool.unexplored.push_back(t);
    }
  } else {
    std::set<int> taken;
    while (static_cast<int>(pool.unexplored.size()) < cfg.n_unexplored) {
      const auto t = detail::random_triple(rng);
      if (explored.count(t) || !taken.insert(t.code()).second) continue;
      pool.unexplored.push_back(t);
    }
  }

  // Explored triples, without replacement, weight = softmax of standardized mean reward.
  std::vector<AugTriple> ex;
  std::vector<double> value;
  for (const auto& [t, s] : explored) {
    ex.push_back(t);
    value.push_back(s.mean());
  }
  if (ex.size() <= static_cast<std::size_t>(cfg.n_explored)) {
    pool.explored = ex;
  } else {
    double mean = 0.0;
    for (double v : value) mean += v;
    mean /= static_cast<double>(value.size());
    double var = 0.0;
    for (double v : value) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(value.size()));
    std::vector<double> w(value.size());
    double zmax = -1e300;
    for (std::size_t i = 0; i < value.size(); ++i) {
      w[i] = sd > 0.0 ? (value[i] - mean) / sd : 0.0;
      zmax = std::max(zmax, w[i]);
    }
    for (auto& x : w) x = std::exp(x - zmax);
    for (int k = 0; k < cfg.n_explored; ++k) {
      double total = 0.0;
      for (double x : w) total += x;
      double u = rng.uniform() * total;
      std::size_t pick = 0;
      for (; pick + 1 < w.size(); ++pick) {
        if (w[pick] <= 0.0) continue;
        if (u < w[pick]) break;
        u -= w[pick];
      }
      while (w[pick] <= 0.0) --pick;  // rounding fell off the end
      pool.explored.push_back(ex[pick]);
      w[pick] = 0.0;
    }
  }

  std::set<int> seen;
  for (const auto* part : {&pool.mutations, &pool.unexplored, &pool.explored})
    for (const auto& t : *part)
      if (seen.insert(t.code()).second) pool.merged.push_back(t);
  if (pool.merged.empty()) throw config_error("candidate_pool: empty candidate pool");
  return pool;
}

inline std::vector<AugTriple> candidate_pool(int label, const SearchHistory& history, const SearchConfig& cfg, Rng& rng) {
  return candidate_pool_parts(label, history, cfg, rng).merged;
}

/// Argmax of scores; ties go to the lexicographically lowest triple.
inline std::size_t argmax_triple(const std::vector<AugTriple>& ts, const std::vector<double>& scores) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < ts.size(); ++i)
    if (scores[i] > scores[best] || (scores[i] == scores[best] && ts[i] < ts[best])) best = i;
  return best;
}

struct IterationReport {
  int iteration = 0;
  Phase phase = Phase::warmup;
  std::vector<std::vector<AugTriple>> pools;  // per label, search phase only
  std::vector<EvalRecord> records;
};

/// One predictor-guided iteration: retrain, score each label's pool, evaluate the argmax.
inline IterationReport search_iteration(RewardSource& source, SearchHistory& history, const SearchConfig& cfg,
                                        int iteration) {
  if (iteration < cfg.warmup_iterations) throw usage_error("search_iteration: iteration is within warm-up");
  if (history.size() == 0) throw usage_error("search_iteration: empty history");
  const PredictorNet net =
      train_predictor(history.records(), history.num_labels(), cfg.predictor, predictor_seed(cfg.master_seed, iteration));
  const int n = history.num_labels();
  IterationReport report;
  report.iteration = iteration;
  report.phase = Phase::search;
  report.pools.resize(static_cast<std::size_t>(n));
  report.records.resize(static_cast<std::size_t>(n));
  detail::parallel_for(n, cfg.threads, source.concurrent_safe(), [&](int y) {
    Rng rng(derive_seed(cfg.master_seed, kCandidateTag, static_cast<std::uint64_t>(iteration), static_cast<std::uint64_t>(y)));
    auto pool = candidate_pool(y, history, cfg, rng);
    const auto scores = predict_many(net, y, pool);
    EvalRecord& r = report.records[static_cast<std::size_t>(y)];
    r.iteration = iteration;
    r.label = y;
    r.triple = pool[argmax_triple(pool, scores)];
    r.seed = eval_seed(cfg.master_seed, iteration, y);
    r.phase = Phase::search;
    r.reward = detail::evaluate(source, cfg.scope, r.triple, y, r.seed);
    report.pools[static_cast<std::size_t>(y)] = std::move(pool);
  });
  for (const auto& r : report.records) history.append(r);
  return report;
}

struct SearchResult {
  SearchHistory history;
  PredictorNet predictor;
};

struct SearchRunOptions {
  std::optional<std::filesystem::path> history_path;  // JSONL, rewritten per completed iteration
  std::vector<EvalRecord> resume;                      // prefix of a previous run
  std::function<void(const IterationReport&)> observer;
};

/// Full Stage 1 run. Every completed iteration is flushed to the history file
/// before the next starts, so an interrupted run leaves a resumable prefix.
inline SearchResult run_search(RewardSource& source, const SearchConfig& cfg, const SearchRunOptions& opt = {}) {
  validate(cfg);
  const int slots = search_slots(source, cfg.scope);
  SearchHistory history(slots);

  // keep only complete iterations of the resume prefix
  const std::size_t per_iter = static_cast<std::size_t>(slots);
  const std::size_t keep = (opt.resume.size() / per_iter) * per_iter;
  for (std::size_t i = 0; i < keep; ++i) {
    const auto& r = opt.resume[i];
    const int expect_iter = static_cast<int>(i / per_iter);
    const int expect_label = static_cast<int>(i % per_iter);
    if (r.iteration != expect_iter || r.label != expect_label)
      throw format_error("resume: history is not a prefix of a run with " + std::to_string(slots) + " labels");
    if (r.seed != eval_seed(cfg.master_seed, r.iteration, r.label))
      throw config_error("resume: history was produced with a different master seed");
    history.append(r);
  }
  const int start = history.completed_iterations();
  if (start > cfg.total_iterations) throw config_error("resume: history is longer than the configured run");

  std::ofstream sink;
  if (opt.history_path) {
    write_history_jsonl(*opt.history_path, history.records());
    sink.open(*opt.history_path, std::ios::app);
    if (!sink) throw io_error("cannot append to " + opt.history_path->string());
  }

  for (int t = start; t < cfg.total_iterations; ++t) {
    IterationReport report;
    if (t < cfg.warmup_iterations) {
      const std::size_t before = history.size();
      warmup_iteration(source, history, cfg, t);
      report.iteration = t;
      report.phase = Phase::warmup;
      report.records.assign(history.records().begin() + static_cast<std::ptrdiff_t>(before), history.records().end());
    } else {
      report = search_iteration(source, history, cfg, t);
    }
    if (sink.is_open()) {
      for (const auto& r : report.records) sink << record_to_jsonl(r) << '\n';
      sink.flush();
      if (!sink) throw io_error("history write failed");
    }
    if (opt.observer) opt.observer(report);
  }

  PredictorNet final_net = train_predictor(history.records(), slots, cfg.predictor,
                                           predictor_seed(cfg.master_seed, cfg.total_iterations));
  return {std::move(history), std::move(final_net)};
}

}  // namespace la3
