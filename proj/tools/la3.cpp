// la3: search, construct, train, preview, metrics, serve.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "la3/config.hpp"
#include "la3/image_io.hpp"

namespace {

using la3::ErrorKind;

int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::evaluator_unavailable: return 3;
    case ErrorKind::io:
    case ErrorKind::format: return 4;
    default: return 2;
  }
}

struct GlobalOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  int threads = 0;
};

la3::KeyValueConfig load_config(const GlobalOptions& g, bool required) {
  std::string path = g.config_path;
  if (path.empty())
    if (const char* env = std::getenv("LA3_CONFIG")) path = env;
  la3::KeyValueConfig kv;
  if (!path.empty()) kv = la3::KeyValueConfig::load(path);
  else if (required && g.overrides.empty()) throw la3::config_error("no config given (use --config or LA3_CONFIG)");
  for (const auto& o : g.overrides) kv.apply_override(o);
  if (g.threads > 0) kv.set("threads", std::to_string(g.threads));
  return kv;
}

std::string out_path(const la3::KeyValueConfig& kv, const std::string& flag, const std::string& key) {
  if (!flag.empty()) return flag;
  return kv.required(key);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw la3::io_error("cannot write " + path);
  out << text;
  if (!out) throw la3::io_error("write failed: " + path);
}

std::string checkpoint_digest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw la3::io_error("cannot open " + path);
  try {
    return nlohmann::json::parse(in).value("config_digest", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw la3::format_error(std::string("checkpoint: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

struct SearchArgs {
  std::string history, predictor;
  bool resume = false;
  bool quiet = false;
};

int cmd_search(const GlobalOptions& g, const SearchArgs& a) {
  const auto kv = load_config(g, true);
  const auto cfg = la3::search_config_from(kv);
  const std::string history_path = out_path(kv, a.history, "out.history");
  const std::string predictor_path = out_path(kv, a.predictor, "out.predictor");

  // Dataset and evaluator come up before anything is written.
  auto source = la3::build_evaluator(kv);

  la3::SearchRunOptions opt;
  opt.history_path = history_path;
  if (a.resume && std::filesystem::exists(history_path)) opt.resume = la3::read_history_jsonl(history_path);
  if (!a.quiet) {
    opt.observer = [&](const la3::IterationReport& r) {
      double best = -1e300;
      for (const auto& rec : r.records) best = std::max(best, rec.reward);
      std::fprintf(stderr, "[%s] iter %d/%d best reward %.5f\n", la3::phase_name(r.phase), r.iteration + 1,
                   cfg.total_iterations, best);
    };
  }
  const auto result = la3::run_search(*source, cfg, opt);
  la3::save_predictor(predictor_path, result.predictor, kv.digest());
  std::fprintf(stderr, "wrote %zu records to %s, predictor to %s\n", result.history.size(), history_path.c_str(),
               predictor_path.c_str());
  return 0;
}

struct ConstructArgs {
  std::string predictor, out, histogram;
  std::optional<double> alpha;
  std::optional<int> n_cand, topk, broadcast;
};

int cmd_construct(const GlobalOptions& g, const ConstructArgs& a) {
  la3::KeyValueConfig kv;
  const bool have_config = !g.config_path.empty() || std::getenv("LA3_CONFIG") || !g.overrides.empty();
  if (have_config) kv = load_config(g, false);
  const std::string predictor_path = have_config ? out_path(kv, a.predictor, "out.predictor") : a.predictor;
  const std::string policy_path = have_config ? out_path(kv, a.out, "out.policy") : a.out;
  if (predictor_path.empty() || policy_path.empty()) throw la3::usage_error("construct needs --predictor and --out");

  const auto net = la3::load_predictor(predictor_path);
  la3::CompositePolicy policy;
  if (a.topk) {
    policy = la3::topk_policy(net, net.num_labels(), *a.topk);
  } else {
    la3::ScoreParams p = have_config ? la3::score_params_from(kv) : la3::ScoreParams{};
    if (a.alpha) p.alpha = *a.alpha;
    if (a.n_cand) p.n_cand = *a.n_cand;
    policy = la3::construct_policy(net, net.num_labels(), p);
  }
  if (a.broadcast) {
    if (*a.broadcast < 1) throw la3::usage_error("--broadcast needs a positive label count");
    policy = la3::broadcast_policy(policy, *a.broadcast);
  }
  policy.config_digest = checkpoint_digest(predictor_path);
  la3::save_policy(policy_path, policy);
  if (!a.histogram.empty()) write_text(a.histogram, la3::histogram_report(policy));
  std::fprintf(stderr, "wrote %s policy (%d labels x %zu triples) to %s\n", policy.method.c_str(), policy.num_labels(),
               policy.policies.front().triples.size(), policy_path.c_str());
  return 0;
}

struct TrainArgs {
  std::string policy, baseline, report;
  int seeds = 3;
};

inline constexpr std::uint64_t kTrainSeedTag = 0x5452414eULL;

int cmd_train(const GlobalOptions& g, const TrainArgs& a) {
  const auto kv = load_config(g, true);
  if (a.seeds < 1) throw la3::usage_error("--seeds must be positive");
  if (a.policy.empty() == a.baseline.empty()) throw la3::usage_error("train needs exactly one of --policy or --baseline");

  la3::PolicySource source;
  if (!a.policy.empty()) {
    source.kind = la3::PolicyKind::composite;
    source.policy = la3::load_policy(a.policy);
  } else if (a.baseline == "none") {
    source.kind = la3::PolicyKind::none;
  } else if (a.baseline == "random") {
    source.kind = la3::PolicyKind::random;
  } else {
    throw la3::usage_error("--baseline must be 'none' or 'random'");
  }

  const auto train = la3::harness_train_set(kv);
  const auto test = la3::load_test_dataset(kv);
  la3::TrainRunConfig cfg;
  cfg.classifier = la3::harness_classifier_config(kv);
  const std::uint64_t master = kv.unsigned_integer("seed");
  cfg.seeds.clear();
  for (int i = 0; i < a.seeds; ++i) cfg.seeds.push_back(la3::derive_seed(master, kTrainSeedTag, i));

  const auto report = la3::train_with_policy(train, test, source, cfg);
  std::cout << la3::report_to_table(report);
  std::string report_path = a.report.empty() ? kv.str("out.report", "") : a.report;
  if (!report_path.empty()) write_text(report_path, la3::report_to_json(report, kv.digest()) + "\n");
  return 0;
}

struct PreviewArgs {
  std::string policy, image, out, trace;
  int label = 0;
  std::uint64_t seed = 0;
};

int cmd_preview(const PreviewArgs& a) {
  const auto policy = la3::load_policy(a.policy);
  const auto img = la3::read_netpbm(a.image);
  la3::Rng rng(a.seed);
  std::vector<la3::AppliedOp> trace;
  const auto out = la3::augment_sample(policy, img, a.label, rng, &trace);
  la3::write_netpbm(a.out, out);
  std::string text;
  char buf[160];
  for (const auto& op : trace) {
    std::snprintf(buf, sizeof buf, "%s\tm=%.6f\tvalue=%.6f", std::string(la3::op_name(op.kind)).c_str(),
                  op.magnitude.normalized, op.magnitude.value);
    text += buf;
    if (op.kind == la3::OpKind::Cutout) {
      std::snprintf(buf, sizeof buf, "\tpos=%.6f,%.6f", op.magnitude.pos_x, op.magnitude.pos_y);
      text += buf;
    }
    text += "\n";
  }
  if (a.trace.empty()) std::cout << text;
  else write_text(a.trace, text);
  return 0;
}

struct MetricsArgs {
  std::string history;
  std::uint64_t split_seed = 0;
};

int cmd_metrics(const GlobalOptions& g, const MetricsArgs& a) {
  la3::KeyValueConfig kv;
  const bool have_config = !g.config_path.empty() || std::getenv("LA3_CONFIG") || !g.overrides.empty();
  if (have_config) kv = load_config(g, false);
  const std::string history_path = have_config ? out_path(kv, a.history, "out.history") : a.history;
  if (history_path.empty()) throw la3::usage_error("metrics needs --history");
  const auto records = la3::read_history_jsonl(history_path);
  int num_labels = 0;
  for (const auto& r : records) num_labels = std::max(num_labels, r.label + 1);
  la3::PredictorConfig pc;
  if (have_config) {
    kv.set("seed", kv.str("seed", "0"));
    pc = la3::search_config_from(kv).predictor;
  }
  const auto m = la3::holdout_metrics(records, num_labels, pc, a.split_seed);
  nlohmann::ordered_json j;
  j["records"] = records.size();
  j["train_size"] = m.train_size;
  j["test_size"] = m.test_size;
  j["spearman"] = m.spearman;
  j["mae"] = m.mae;
  j["degenerate"] = m.degenerate;
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_serve(const GlobalOptions& g) {
  const auto kv = load_config(g, true);
  auto source = la3::build_builtin_evaluator(kv);
  la3::serve_protocol(std::cin, std::cout, *source);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Label-aware augmentation policy search"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("-c,--config", g.config_path, "key=value config file (default: $LA3_CONFIG)");
  app.add_option("--set", g.overrides, "override a config key (key=value), repeatable");
  app.add_option("--threads", g.threads, "worker cap; results do not depend on it")->check(CLI::PositiveNumber);

  SearchArgs sa;
  auto* search = app.add_subcommand("search", "run the policy search, write history and predictor");
  search->add_option("--history", sa.history, "history JSONL path (default: out.history)");
  search->add_option("--predictor", sa.predictor, "predictor checkpoint path (default: out.predictor)");
  search->add_flag("--resume", sa.resume, "continue from an existing history file");
  search->add_flag("-q,--quiet", sa.quiet, "no per-iteration progress");

  ConstructArgs ca;
  auto* construct = app.add_subcommand("construct", "build a per-label policy from a predictor checkpoint");
  construct->add_option("--predictor", ca.predictor, "predictor checkpoint");
  construct->add_option("-o,--out", ca.out, "policy JSON path");
  construct->add_option("--alpha", ca.alpha, "redundancy weight");
  construct->add_option("--n-cand", ca.n_cand, "triples per label");
  auto* topk_opt = construct->add_option("--topk", ca.topk, "plain top-k selection instead of mRMR");
  construct->add_option("--histogram", ca.histogram, "write a per-label op histogram (TSV)");
  construct->add_option("--broadcast", ca.broadcast, "repeat the single-slot policy for this many labels");
  topk_opt->excludes("--alpha")->excludes("--n-cand");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train classifiers with a policy and report test accuracy");
  train->add_option("--policy", ta.policy, "policy JSON");
  train->add_option("--baseline", ta.baseline, "none | random");
  train->add_option("--seeds", ta.seeds, "number of seeds");
  train->add_option("--report", ta.report, "JSON report path (default: out.report)");

  PreviewArgs pa;
  auto* preview = app.add_subcommand("preview", "augment one image with a policy");
  preview->add_option("--policy", pa.policy)->required();
  preview->add_option("--image", pa.image, "PGM/PPM input")->required();
  preview->add_option("--label", pa.label)->required();
  preview->add_option("--seed", pa.seed)->required();
  preview->add_option("-o,--out", pa.out, "PGM/PPM output")->required();
  preview->add_option("--trace", pa.trace, "op trace path (default: stdout)");

  MetricsArgs ma;
  auto* metrics = app.add_subcommand("metrics", "holdout quality of the predictor on a history file");
  metrics->add_option("--history", ma.history);
  metrics->add_option("--split-seed", ma.split_seed);

  auto* serve = app.add_subcommand("serve", "answer evaluator requests on stdin/stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*search) return cmd_search(g, sa);
    if (*construct) return cmd_construct(g, ca);
    if (*train) return cmd_train(g, ta);
    if (*preview) return cmd_preview(pa);
    if (*metrics) return cmd_metrics(g, ma);
    if (*serve) return cmd_serve(g);
  } catch (const la3::Error& e) {
    std::fprintf(stderr, "la3: %s\n", e.what());
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "la3: %s\n", e.what());
    return 4;
  }
  return 0;
}
