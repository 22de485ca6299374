#pragma once

// Label-aware reward predictor f(r | triple, label): op and label embedding
// tables, the three op embeddings mean-pooled and concatenated with the label
// embedding, then a ReLU MLP with a scalar output.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <vector>

#include <json.hpp>

#include "la3/augment.hpp"
#include "la3/evaluator.hpp"
#include "la3/nn.hpp"

namespace la3 {

struct PredictorConfig {
  int embed_dim = 100;
  int hidden = 100;
  int hidden_layers = 3;
  int epochs = 100;
  int batch_size = 64;
  double lr = 0.01;
  double embed_init = 0.01;  // embeddings start uniform in (-a, a); small values generalize better

  bool operator==(const PredictorConfig&) const = default;
};

struct PredictorNet {
  nn::RealMatrix op_embeddings;     // kNumOps x embed_dim
  nn::RealMatrix label_embeddings;  // num_labels x embed_dim
  nn::DenseNet trunk;               // [2E, H, .., H, 1]

  int num_labels() const { return static_cast<int>(label_embeddings.rows()); }
  Eigen::Index embed_dim() const { return op_embeddings.cols(); }

  bool operator==(const PredictorNet& o) const {
    return op_embeddings.rows() == o.op_embeddings.rows() && op_embeddings.cols() == o.op_embeddings.cols() &&
           label_embeddings.rows() == o.label_embeddings.rows() &&
           label_embeddings.cols() == o.label_embeddings.cols() && op_embeddings == o.op_embeddings &&
           label_embeddings == o.label_embeddings && trunk == o.trunk;
  }
};

/// Op codes sorted ascending. Pooling sums in this order so that every
/// permutation of a triple encodes to bit-identical values.
inline std::array<int, 3> canonical_codes(const AugTriple& t) {
  std::array<int, 3> c{op_code(t[0]), op_code(t[1]), op_code(t[2])};
  std::sort(c.begin(), c.end());
  return c;
}

inline void encode_into(const PredictorNet& net, const AugTriple& triple, int label, Eigen::Ref<nn::RealMatrix> row) {
  if (label < 0 || label >= net.num_labels()) throw input_error("encode: label " + std::to_string(label) + " out of range");
  const auto e = net.embed_dim();
  const auto c = canonical_codes(triple);
  row.leftCols(e) = (net.op_embeddings.row(c[0]) + net.op_embeddings.row(c[1]) + net.op_embeddings.row(c[2])) / 3.0;
  row.rightCols(e) = net.label_embeddings.row(label);
}

/// Mean-pooled op embedding concatenated with the label embedding (2E values).
inline nn::RealVector encode(const PredictorNet& net, const AugTriple& triple, int label) {
  nn::RealMatrix row(1, 2 * net.embed_dim());
  encode_into(net, triple, label, row);
  return row.row(0).transpose();
}

inline PredictorNet init_predictor(int num_labels, const PredictorConfig& cfg, std::uint64_t seed) {
  if (num_labels <= 0) throw config_error("predictor: num_labels must be positive");
  if (cfg.embed_dim <= 0 || cfg.hidden <= 0 || cfg.hidden_layers < 0 || !(cfg.embed_init >= 0))
    throw config_error("predictor: bad architecture");
  PredictorNet net;
  Rng rng(derive_seed(seed, 2));
  const double lim = cfg.embed_init;
  net.op_embeddings.resize(kNumOps, cfg.embed_dim);
  for (Eigen::Index i = 0; i < net.op_embeddings.size(); ++i) net.op_embeddings.data()[i] = rng.uniform(-lim, lim);
  net.label_embeddings.resize(num_labels, cfg.embed_dim);
  for (Eigen::Index i = 0; i < net.label_embeddings.size(); ++i) net.label_embeddings.data()[i] = rng.uniform(-lim, lim);
  std::vector<Eigen::Index> dims{2 * static_cast<Eigen::Index>(cfg.embed_dim)};
  for (int i = 0; i < cfg.hidden_layers; ++i) dims.push_back(cfg.hidden);
  dims.push_back(1);
  net.trunk = nn::init_dense_net(dims, nn::Activation::identity, derive_seed(seed, 3));
  return net;
}

inline double predict(const PredictorNet& net, const AugTriple& triple, int label) {
  nn::RealMatrix x(1, 2 * net.embed_dim());
  encode_into(net, triple, label, x);
  return nn::forward_batch(net.trunk, x)(0, 0);
}

/// Scores many triples for one label. Permutation-equivalent triples are
/// scored once, so they always receive identical values.
inline std::vector<double> predict_many(const PredictorNet& net, int label, const std::vector<AugTriple>& triples) {
  std::map<std::array<int, 3>, Eigen::Index> slot;
  std::vector<AugTriple> unique;
  std::vector<Eigen::Index> where(triples.size());
  for (std::size_t i = 0; i < triples.size(); ++i) {
    auto key = canonical_codes(triples[i]);
    auto [it, inserted] = slot.emplace(key, static_cast<Eigen::Index>(unique.size()));
    if (inserted) unique.push_back(triples[i]);
    where[i] = it->second;
  }
  std::vector<double> out(triples.size());
  if (unique.empty()) return out;
  nn::RealMatrix x(static_cast<Eigen::Index>(unique.size()), 2 * net.embed_dim());
  for (std::size_t i = 0; i < unique.size(); ++i) encode_into(net, unique[i], label, x.row(static_cast<Eigen::Index>(i)));
  const nn::RealMatrix y = nn::forward_batch(net.trunk, x);
  for (std::size_t i = 0; i < triples.size(); ++i) out[i] = y(where[i], 0);
  return out;
}

struct PredictorTraining {
  PredictorNet net;
  double final_mse = 0.0;
};

/// Fresh initialization, then `epochs` passes of Adam on squared error over
/// every record (all labels jointly). Embeddings train with the trunk.
inline PredictorTraining train_predictor_detailed(const std::vector<EvalRecord>& history, int num_labels,
                                                  const PredictorConfig& cfg, std::uint64_t seed) {
  if (history.empty()) throw input_error("train_predictor: empty history");
  if (cfg.epochs < 0 || cfg.batch_size <= 0 || cfg.lr <= 0) throw config_error("train_predictor: bad config");
  for (const auto& r : history)
    if (r.label < 0 || r.label >= num_labels) throw input_error("train_predictor: record label out of range");

  PredictorTraining out{init_predictor(num_labels, cfg, seed), 0.0};
  PredictorNet& net = out.net;
  const Eigen::Index e = net.embed_dim();

  std::vector<nn::RealMatrix*> params{&net.op_embeddings, &net.label_embeddings};
  for (auto* t : net.trunk.tensors()) params.push_back(t);
  nn::AdamState adam;
  adam.config.lr = cfg.lr;

  Rng rng(derive_seed(seed, 4));
  std::vector<std::size_t> order(history.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  nn::ForwardCache cache;
  std::vector<nn::RealMatrix> grads(params.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order, rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const auto b = static_cast<Eigen::Index>(end - start);
      nn::RealMatrix x(b, 2 * e);
      nn::RealMatrix target(b, 1);
      for (Eigen::Index r = 0; r < b; ++r) {
        const auto& rec = history[order[start + static_cast<std::size_t>(r)]];
        encode_into(net, rec.triple, rec.label, x.row(r));
        target(r, 0) = rec.reward;
      }
      const nn::RealMatrix pred = nn::forward_batch(net.trunk, x, &cache);
      const nn::RealMatrix dout = (2.0 / static_cast<double>(b)) * (pred - target);
      nn::RealMatrix dx;
      nn::Gradients trunk_grads = nn::backward(net.trunk, cache, dout, &dx);

      grads[0] = nn::RealMatrix::Zero(net.op_embeddings.rows(), e);
      grads[1] = nn::RealMatrix::Zero(net.label_embeddings.rows(), e);
      for (Eigen::Index r = 0; r < b; ++r) {
        const auto& rec = history[order[start + static_cast<std::size_t>(r)]];
        const auto c = canonical_codes(rec.triple);
        for (int k : c) grads[0].row(k) += dx.row(r).leftCols(e) / 3.0;
        grads[1].row(rec.label) += dx.row(r).rightCols(e);
      }
      for (std::size_t t = 0; t < trunk_grads.size(); ++t) grads[2 + t] = std::move(trunk_grads[t]);
      nn::adam_step(std::span<nn::RealMatrix* const>(params), std::span<const nn::RealMatrix>(grads), adam);
    }
  }

  double sse = 0.0;
  for (const auto& rec : history) {
    const double d = predict(net, rec.triple, rec.label) - rec.reward;
    sse += d * d;
  }
  out.final_mse = sse / static_cast<double>(history.size());
  return out;
}

inline PredictorNet train_predictor(const std::vector<EvalRecord>& history, int num_labels, const PredictorConfig& cfg,
                                    std::uint64_t seed) {
  return train_predictor_detailed(history, num_labels, cfg, seed).net;
}

// ---------------------------------------------------------------------------
// Holdout quality.

struct PredictorMetrics {
  double spearman = 0.0;
  double mae = 0.0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  bool degenerate = false;  // rank correlation undefined (constant values)
};

/// Average ranks (1-based), ties share the mean rank.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

/// Spearman rank correlation; nullopt-like flag via `degenerate` when either side is constant.
inline double spearman(const std::vector<double>& a, const std::vector<double>& b, bool* degenerate = nullptr) {
  if (a.size() != b.size()) throw shape_error("spearman: length mismatch");
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  const bool degen = a.size() < 2 || saa == 0.0 || sbb == 0.0;
  if (degenerate) *degenerate = degen;
  return degen ? 0.0 : sab / std::sqrt(saa * sbb);
}

/// Seeded 80/20 split of the history: train on 80%, score the held-out 20%.
inline PredictorMetrics holdout_metrics(const std::vector<EvalRecord>& history, int num_labels,
                                        const PredictorConfig& cfg, std::uint64_t split_seed) {
  if (history.size() < 5) throw input_error("holdout_metrics: need at least 5 records");
  std::vector<std::size_t> order(history.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(split_seed);
  shuffle(order, rng);
  const std::size_t n_train = (history.size() * 4) / 5;
  std::vector<EvalRecord> train, test;
  for (std::size_t i = 0; i < order.size(); ++i) (i < n_train ? train : test).push_back(history[order[i]]);

  const PredictorNet net = train_predictor(train, num_labels, cfg, derive_seed(split_seed, 1));
  std::vector<double> truth, pred;
  double abs_err = 0.0;
  for (const auto& rec : test) {
    const double p = predict(net, rec.triple, rec.label);
    truth.push_back(rec.reward);
    pred.push_back(p);
    abs_err += std::abs(p - rec.reward);
  }
  PredictorMetrics m;
  m.train_size = train.size();
  m.test_size = test.size();
  m.mae = abs_err / static_cast<double>(test.size());
  m.spearman = spearman(truth, pred, &m.degenerate);
  return m;
}

// ---------------------------------------------------------------------------
// Checkpoints.

namespace detail {

inline nlohmann::ordered_json matrix_json(const nn::RealMatrix& m) {
  auto rows = nlohmann::ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = nlohmann::ordered_json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nn::RealMatrix matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw format_error("checkpoint: matrix must be a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  nn::RealMatrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) throw format_error("checkpoint: ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

}  // namespace detail

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::ordered_json predictor_to_json(const PredictorNet& net, const std::string& config_digest = "") {
  nlohmann::ordered_json j;
  j["version"] = kCheckpointVersion;
  j["kind"] = "la3-predictor";
  j["config_digest"] = config_digest;
  j["num_labels"] = net.num_labels();
  j["embed_dim"] = net.embed_dim();
  auto ops = nlohmann::ordered_json::array();
  for (auto n : kOpNames) ops.push_back(std::string(n));
  j["ops"] = ops;
  j["op_embeddings"] = detail::matrix_json(net.op_embeddings);
  j["label_embeddings"] = detail::matrix_json(net.label_embeddings);
  auto layers = nlohmann::ordered_json::array();
  for (const auto& l : net.trunk.layers) {
    nlohmann::ordered_json lj;
    lj["activation"] = nn::activation_name(l.activation);
    lj["weights"] = detail::matrix_json(l.weights);
    lj["bias"] = detail::matrix_json(l.bias);
    layers.push_back(std::move(lj));
  }
  j["trunk"] = layers;
  return j;
}

inline PredictorNet predictor_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != kCheckpointVersion) throw format_error("checkpoint: unsupported version");
    if (j.at("kind").get<std::string>() != "la3-predictor") throw format_error("checkpoint: not a predictor checkpoint");
    PredictorNet net;
    net.op_embeddings = detail::matrix_from_json(j.at("op_embeddings"));
    net.label_embeddings = detail::matrix_from_json(j.at("label_embeddings"));
    if (net.op_embeddings.rows() != kNumOps) throw format_error("checkpoint: op embedding table must have 16 rows");
    if (net.op_embeddings.cols() != net.label_embeddings.cols()) throw format_error("checkpoint: embedding widths differ");
    for (const auto& lj : j.at("trunk")) {
      nn::DenseLayer l;
      l.activation = nn::activation_from_name(lj.at("activation").get<std::string>());
      l.weights = detail::matrix_from_json(lj.at("weights"));
      l.bias = detail::matrix_from_json(lj.at("bias"));
      if (l.bias.rows() != 1 || l.bias.cols() != l.weights.cols()) throw format_error("checkpoint: bias shape");
      if (!net.trunk.layers.empty() && net.trunk.layers.back().fan_out() != l.fan_in())
        throw format_error("checkpoint: trunk layer dims do not chain");
      net.trunk.layers.push_back(std::move(l));
    }
    if (net.trunk.layers.empty() || net.trunk.input_dim() != 2 * net.embed_dim() || net.trunk.output_dim() != 1)
      throw format_error("checkpoint: trunk shape does not match embeddings");
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw format_error(std::string("checkpoint: ") + e.what());
  }
}

inline void save_predictor(const std::filesystem::path& path, const PredictorNet& net, const std::string& config_digest = "") {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path.string());
  out << predictor_to_json(net, config_digest).dump() << '\n';
  if (!out) throw io_error("write failed: " + path.string());
}

inline PredictorNet load_predictor(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw format_error(path.string() + ": " + e.what());
  }
  return predictor_from_json(j);
}

}  // namespace la3
