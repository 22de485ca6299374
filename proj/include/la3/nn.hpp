#pragma once

// Small dense feed-forward network with manual reverse-mode gradients and Adam.
// Shared by the reward predictor and the desk-scale image classifier.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "la3/common.hpp"

namespace la3::nn {

using RealMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RealVector = Eigen::VectorXd;

enum class Activation { relu, identity, softmax };

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
    case Activation::softmax: return "softmax";
  }
  return "?";
}

inline Activation activation_from_name(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "identity") return Activation::identity;
  if (name == "softmax") return Activation::softmax;
  throw format_error("unknown activation '" + std::string(name) + "'");
}

/// Affine layer followed by an activation. Weights are (fan_in x fan_out) so a
/// batch of row inputs maps as X * W + b.
struct DenseLayer {
  RealMatrix weights;
  RealMatrix bias;  // 1 x fan_out
  Activation activation = Activation::identity;

  Eigen::Index fan_in() const { return weights.rows(); }
  Eigen::Index fan_out() const { return weights.cols(); }
};

struct DenseNet {
  std::vector<DenseLayer> layers;

  Eigen::Index input_dim() const { return layers.empty() ? 0 : layers.front().fan_in(); }
  Eigen::Index output_dim() const { return layers.empty() ? 0 : layers.back().fan_out(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
    return n;
  }

  /// Parameter tensors in canonical order: w0, b0, w1, b1, ...
  std::vector<RealMatrix*> tensors() {
    std::vector<RealMatrix*> out;
    out.reserve(layers.size() * 2);
    for (auto& l : layers) {
      out.push_back(&l.weights);
      out.push_back(&l.bias);
    }
    return out;
  }

  bool operator==(const DenseNet& other) const {
    if (layers.size() != other.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& a = layers[i];
      const auto& b = other.layers[i];
      if (a.activation != b.activation || a.weights.rows() != b.weights.rows() ||
          a.weights.cols() != b.weights.cols() || a.weights != b.weights || a.bias != b.bias)
        return false;
    }
    return true;
  }
};

/// Gradients laid out like DenseNet::tensors().
using Gradients = std::vector<RealMatrix>;

/// Glorot-uniform weights, zero biases. `activations` has one entry per layer.
inline DenseNet init_dense_net(std::span<const Eigen::Index> dims,
                               std::span<const Activation> activations, std::uint64_t seed) {
  if (dims.size() < 2) throw config_error("init_dense_net: need at least two layer dims");
  for (auto d : dims)
    if (d <= 0) throw config_error("init_dense_net: layer dims must be positive");
  if (activations.size() != dims.size() - 1)
    throw config_error("init_dense_net: one activation per layer required");

  Rng rng(seed);
  DenseNet net;
  net.layers.reserve(dims.size() - 1);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    DenseLayer layer;
    const auto fan_in = dims[i];
    const auto fan_out = dims[i + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    layer.weights.resize(fan_in, fan_out);
    for (Eigen::Index r = 0; r < fan_in; ++r)
      for (Eigen::Index c = 0; c < fan_out; ++c) layer.weights(r, c) = rng.uniform(-limit, limit);
    layer.bias = RealMatrix::Zero(1, fan_out);
    layer.activation = activations[i];
    net.layers.push_back(std::move(layer));
  }
  return net;
}

/// Convenience: relu on every hidden layer, `output` on the last.
inline DenseNet init_dense_net(std::vector<Eigen::Index> dims, Activation output, std::uint64_t seed) {
  std::vector<Activation> acts(dims.size() < 2 ? 0 : dims.size() - 1, Activation::relu);
  if (!acts.empty()) acts.back() = output;
  return init_dense_net(std::span<const Eigen::Index>(dims), std::span<const Activation>(acts), seed);
}

struct ForwardCache {
  std::vector<RealMatrix> inputs;  // input to each layer
  std::vector<RealMatrix> pre;     // pre-activation of each layer
  RealMatrix output;
  bool valid = false;
};

namespace detail {

inline void apply_activation(Activation a, RealMatrix& z) {
  switch (a) {
    case Activation::relu: z = z.cwiseMax(0.0); break;
    case Activation::identity: break;
    case Activation::softmax:
      for (Eigen::Index r = 0; r < z.rows(); ++r) {
        auto row = z.row(r);
        row.array() -= row.maxCoeff();
        row = row.array().exp().matrix();
        row /= row.sum();
      }
      break;
  }
}

}  // namespace detail

/// Batched forward pass over the rows of `x`. Fills `cache` when given.
inline RealMatrix forward_batch(const DenseNet& net, const RealMatrix& x, ForwardCache* cache = nullptr) {
  if (net.layers.empty()) throw shape_error("forward: empty network");
  if (x.cols() != net.input_dim())
    throw shape_error("forward: input dim " + std::to_string(x.cols()) + " != " +
                      std::to_string(net.input_dim()));
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  RealMatrix a = x;
  for (const auto& layer : net.layers) {
    RealMatrix z = a * layer.weights;
    z.rowwise() += layer.bias.row(0);
    if (cache) {
      cache->inputs.push_back(std::move(a));
      cache->pre.push_back(z);
    }
    detail::apply_activation(layer.activation, z);
    a = std::move(z);
  }
  if (cache) {
    cache->output = a;
    cache->valid = true;
  }
  return a;
}

/// Single-input forward pass returning output and cache.
inline std::pair<RealVector, ForwardCache> forward(const DenseNet& net, const RealVector& input) {
  ForwardCache cache;
  RealMatrix x = input.transpose();
  RealMatrix out = forward_batch(net, x, &cache);
  return {RealVector(out.row(0).transpose()), std::move(cache)};
}

/// Reverse pass. `output_grad` is dL/d(output) with the same shape as the
/// cached output (rows = batch). Gradients are summed over the batch. When
/// `input_grad` is non-null it receives dL/d(input).
inline Gradients backward(const DenseNet& net, const ForwardCache& cache, const RealMatrix& output_grad,
                          RealMatrix* input_grad = nullptr) {
  if (!cache.valid || cache.pre.size() != net.layers.size())
    throw usage_error("backward: forward cache missing or from another network");
  if (output_grad.rows() != cache.output.rows() || output_grad.cols() != cache.output.cols())
    throw shape_error("backward: output gradient shape mismatch");

  Gradients grads(net.layers.size() * 2);
  RealMatrix g = output_grad;
  for (std::size_t k = net.layers.size(); k-- > 0;) {
    const auto& layer = net.layers[k];
    const RealMatrix& z = cache.pre[k];
    RealMatrix dz;
    switch (layer.activation) {
      case Activation::relu: dz = g.cwiseProduct((z.array() > 0.0).cast<double>().matrix()); break;
      case Activation::identity: dz = std::move(g); break;
      case Activation::softmax: {
        // rows of the output are probabilities; J^T g = p * (g - <g, p>)
        const RealMatrix& p = (k + 1 == net.layers.size()) ? cache.output : cache.inputs[k + 1];
        dz.resize(g.rows(), g.cols());
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
          const double dot = g.row(r).dot(p.row(r));
          dz.row(r) = p.row(r).array() * (g.row(r).array() - dot);
        }
        break;
      }
    }
    grads[2 * k] = cache.inputs[k].transpose() * dz;
    grads[2 * k + 1] = dz.colwise().sum();
    if (k > 0 || input_grad) {
      g = dz * layer.weights.transpose();
    }
  }
  if (input_grad) *input_grad = std::move(g);
  return grads;
}

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::int64_t step_count = 0;
  std::vector<RealMatrix> first_moment;
  std::vector<RealMatrix> second_moment;
};

/// Bias-corrected Adam. Entries whose gradient is exactly zero are skipped
/// (value and moments untouched), so an all-zero gradient never moves the
/// parameters whatever the state.
inline void adam_step(std::span<RealMatrix* const> params, std::span<const RealMatrix> grads,
                      AdamState& state) {
  if (params.size() != grads.size()) throw shape_error("adam_step: params/gradients count mismatch");
  if (state.first_moment.empty() && state.step_count == 0) {
    for (const auto* p : params) {
      state.first_moment.push_back(RealMatrix::Zero(p->rows(), p->cols()));
      state.second_moment.push_back(RealMatrix::Zero(p->rows(), p->cols()));
    }
  }
  if (state.first_moment.size() != params.size()) throw shape_error("adam_step: state belongs to other params");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads[i].rows() || params[i]->cols() != grads[i].cols() ||
        state.first_moment[i].rows() != grads[i].rows() || state.first_moment[i].cols() != grads[i].cols())
      throw shape_error("adam_step: tensor " + std::to_string(i) + " shape mismatch");
  }

  const auto& cfg = state.config;
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* p = params[i]->data();
    const double* g = grads[i].data();
    double* m = state.first_moment[i].data();
    double* v = state.second_moment[i].data();
    const auto n = grads[i].size();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (g[j] == 0.0) continue;
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p[j] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

inline void adam_step(DenseNet& net, const Gradients& grads, AdamState& state) {
  auto ts = net.tensors();
  adam_step(std::span<RealMatrix* const>(ts), std::span<const RealMatrix>(grads), state);
}

struct TrainOptions {
  int epochs = 100;
  int batch_size = 64;
  AdamConfig adam;
  std::uint64_t seed = 0;
};

struct RegressionResult {
  double initial_mse = 0.0;
  double final_mse = 0.0;
  std::vector<double> epoch_mse;  // full-data MSE after each epoch
};

inline double mean_squared_error(const DenseNet& net, const RealMatrix& inputs, const RealVector& targets) {
  RealMatrix out = forward_batch(net, inputs);
  return (out.col(0) - targets).squaredNorm() / static_cast<double>(targets.size());
}

/// Squared-error regression on a scalar target with shuffled mini-batches.
inline RegressionResult train_regression(DenseNet& net, const RealMatrix& inputs, const RealVector& targets,
                                         const TrainOptions& opt) {
  if (inputs.rows() == 0) throw input_error("train_regression: empty dataset");
  if (inputs.rows() != targets.size()) throw shape_error("train_regression: inputs/targets length mismatch");
  if (net.output_dim() != 1) throw shape_error("train_regression: network must have scalar output");
  if (opt.epochs < 0 || opt.batch_size <= 0) throw config_error("train_regression: bad epochs/batch size");

  RegressionResult result;
  result.initial_mse = mean_squared_error(net, inputs, targets);
  Rng rng(opt.seed);
  AdamState adam;
  adam.config = opt.adam;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(inputs.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  ForwardCache cache;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    shuffle(order, rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opt.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(opt.batch_size));
      const auto b = static_cast<Eigen::Index>(end - start);
      RealMatrix xb(b, inputs.cols());
      RealVector tb(b);
      for (Eigen::Index r = 0; r < b; ++r) {
        xb.row(r) = inputs.row(order[start + static_cast<std::size_t>(r)]);
        tb(r) = targets(order[start + static_cast<std::size_t>(r)]);
      }
      RealMatrix out = forward_batch(net, xb, &cache);
      RealMatrix dout = (2.0 / static_cast<double>(b)) * (out.col(0) - tb);
      adam_step(net, backward(net, cache, dout), adam);
    }
    result.epoch_mse.push_back(mean_squared_error(net, inputs, targets));
  }
  result.final_mse = result.epoch_mse.empty() ? result.initial_mse : result.epoch_mse.back();
  return result;
}

}  // namespace la3::nn
