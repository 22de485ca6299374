#include <gtest/gtest.h>

#include "la3/nn.hpp"
#include "support/grad_check.hpp"

using namespace la3;
using namespace la3::nn;

namespace {

RealMatrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  Rng rng(seed);
  RealMatrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
  return m;
}

// Independent forward oracle: plain loops, no Eigen products.
std::vector<double> naive_forward(const DenseNet& net, std::vector<double> x) {
  for (const auto& l : net.layers) {
    std::vector<double> z(static_cast<std::size_t>(l.fan_out()));
    for (Eigen::Index j = 0; j < l.fan_out(); ++j) {
      double s = l.bias(0, j);
      for (Eigen::Index i = 0; i < l.fan_in(); ++i) s += x[static_cast<std::size_t>(i)] * l.weights(i, j);
      z[static_cast<std::size_t>(j)] = s;
    }
    if (l.activation == Activation::relu) {
      for (auto& v : z) v = std::max(v, 0.0);
    } else if (l.activation == Activation::softmax) {
      double mx = *std::max_element(z.begin(), z.end()), sum = 0;
      for (auto& v : z) sum += (v = std::exp(v - mx));
      for (auto& v : z) v /= sum;
    }
    x = z;
  }
  return x;
}

std::size_t count_params_oracle(const std::vector<Eigen::Index>& dims) {
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) n += static_cast<std::size_t>(dims[i] * dims[i + 1] + dims[i + 1]);
  return n;
}

}  // namespace

TEST(InitDenseNet, BiasesZeroAndGlorotBounds) {
  auto net = init_dense_net({4, 3}, Activation::identity, 11);
  ASSERT_EQ(net.layers.size(), 1u);
  EXPECT_TRUE((net.layers[0].bias.array() == 0.0).all());
  const double bound = std::sqrt(6.0 / 7.0);
  EXPECT_LE(net.layers[0].weights.cwiseAbs().maxCoeff(), bound);
}

TEST(InitDenseNet, Deterministic) {
  auto a = init_dense_net({4, 3, 2}, Activation::identity, 5);
  auto b = init_dense_net({4, 3, 2}, Activation::identity, 5);
  EXPECT_TRUE(a == b);
  auto c = init_dense_net({4, 3, 2}, Activation::identity, 6);
  EXPECT_FALSE(a == c);
}

TEST(InitDenseNet, PredictorTrunkParameterCount) {
  const std::vector<Eigen::Index> dims{200, 100, 100, 100, 1};
  auto net = init_dense_net(dims, Activation::identity, 0);
  EXPECT_EQ(net.parameter_count(), count_params_oracle(dims));
  EXPECT_EQ(net.parameter_count(), 40401u);
}

TEST(InitDenseNet, RejectsBadDims) {
  EXPECT_THROW(init_dense_net({4}, Activation::identity, 0), Error);
  EXPECT_THROW(init_dense_net({4, 0, 1}, Activation::identity, 0), Error);
  EXPECT_THROW(init_dense_net({}, Activation::identity, 0), Error);
  try {
    init_dense_net({3, -1}, Activation::identity, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_config);
  }
}

TEST(Forward, IdentityWeightsRelu) {
  auto net = init_dense_net({2, 2}, Activation::relu, 0);
  net.layers[0].weights = RealMatrix::Identity(2, 2);
  net.layers[0].bias.setZero();
  RealVector x(2);
  x << 1, 2;
  auto [y, cache] = forward(net, x);
  EXPECT_EQ(y(0), 1.0);
  EXPECT_EQ(y(1), 2.0);
}

TEST(Forward, ZeroWeightsBiasOnly) {
  auto net = init_dense_net({3, 1}, Activation::identity, 0);
  net.layers[0].weights.setZero();
  net.layers[0].bias(0, 0) = 0.5;
  for (int s = 0; s < 5; ++s) {
    RealVector x = random_matrix(3, 1, static_cast<std::uint64_t>(s)).col(0);
    EXPECT_EQ(forward(net, x).first(0), 0.5);
  }
}

TEST(Forward, MatchesNaiveOracle) {
  for (auto out : {Activation::identity, Activation::softmax}) {
    auto net = init_dense_net({7, 5, 4, 3}, out, 21);
    for (auto& l : net.layers) l.bias = random_matrix(1, l.fan_out(), 99);
    RealVector x = random_matrix(7, 1, 4).col(0);
    auto y = forward(net, x).first;
    auto ref = naive_forward(net, std::vector<double>(x.data(), x.data() + x.size()));
    for (Eigen::Index j = 0; j < y.size(); ++j) EXPECT_NEAR(y(j), ref[static_cast<std::size_t>(j)], 1e-12);
  }
}

TEST(Forward, ShapeMismatchThrows) {
  auto net = init_dense_net({3, 2}, Activation::identity, 0);
  try {
    forward(net, RealVector::Zero(4));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::shape);
  }
}

TEST(Forward, Pure) {
  auto net = init_dense_net({5, 4, 2}, Activation::identity, 8);
  RealVector x = random_matrix(5, 1, 1).col(0);
  EXPECT_EQ(forward(net, x).first, forward(net, x).first);
}

TEST(Backward, ZeroOutputGradientGivesZeroGradients) {
  auto net = init_dense_net({4, 3, 2}, Activation::identity, 2);
  ForwardCache cache;
  forward_batch(net, random_matrix(3, 4, 1), &cache);
  for (const auto& g : backward(net, cache, RealMatrix::Zero(3, 2))) EXPECT_TRUE((g.array() == 0.0).all());
}

TEST(Backward, OneParameterSquaredError) {
  // y = w x, L = (w x - t)^2  =>  dL/dw = 2 (w x - t) x
  auto net = init_dense_net({1, 1}, Activation::identity, 0);
  const double w = 0.7, x = 1.5, t = 0.2;
  net.layers[0].weights(0, 0) = w;
  ForwardCache cache;
  RealMatrix in(1, 1);
  in(0, 0) = x;
  const double y = forward_batch(net, in, &cache)(0, 0);
  RealMatrix dout(1, 1);
  dout(0, 0) = 2.0 * (y - t);
  const auto g = backward(net, cache, dout);
  EXPECT_DOUBLE_EQ(g[0](0, 0), 2.0 * (w * x - t) * x);
}

TEST(Backward, MissingCacheIsUsageError) {
  auto net = init_dense_net({2, 1}, Activation::identity, 0);
  ForwardCache empty;
  try {
    backward(net, empty, RealMatrix::Zero(1, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::usage);
  }
}

class GradientCheck : public ::testing::TestWithParam<std::vector<Eigen::Index>> {};

TEST_P(GradientCheck, MatchesCentralDifferences) {
  const auto dims = GetParam();
  auto net = init_dense_net(dims, Activation::identity, 17);
  for (auto& l : net.layers) l.bias = random_matrix(1, l.fan_out(), 5) * 0.1;
  const auto x = random_matrix(3, dims.front(), 23);
  const auto probe = random_matrix(3, dims.back(), 29);
  const auto r = support::check_gradients(net, x, probe);
  EXPECT_EQ(r.checked, net.parameter_count());
  EXPECT_LT(r.max_rel_error, 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Shapes, GradientCheck,
                         ::testing::Values(std::vector<Eigen::Index>{3, 2, 1}, std::vector<Eigen::Index>{5, 4, 4, 1},
                                           std::vector<Eigen::Index>{200, 100, 100, 100, 1}));

TEST(Backward, SoftmaxOutputMatchesDifferences) {
  auto net = init_dense_net({6, 5, 4}, Activation::softmax, 3);
  const auto r = support::check_gradients(net, random_matrix(2, 6, 1), random_matrix(2, 4, 2));
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Backward, InputGradientMatchesDifferences) {
  auto net = init_dense_net({4, 3, 2}, Activation::identity, 13);
  RealMatrix x = random_matrix(1, 4, 7);
  const RealMatrix probe = random_matrix(1, 2, 8);
  ForwardCache cache;
  forward_batch(net, x, &cache);
  RealMatrix dx;
  backward(net, cache, probe, &dx);
  for (Eigen::Index i = 0; i < 4; ++i) {
    RealMatrix up = x, down = x;
    up(0, i) += 1e-6;
    down(0, i) -= 1e-6;
    const double num = ((forward_batch(net, up) - forward_batch(net, down)).array() * probe.array()).sum() / 2e-6;
    EXPECT_NEAR(dx(0, i), num, 1e-7);
  }
}

TEST(Adam, ZeroGradientFreshState) {
  auto net = init_dense_net({3, 2}, Activation::identity, 4);
  const auto before = net;
  AdamState st;
  Gradients g;
  for (auto* t : net.tensors()) g.push_back(RealMatrix::Zero(t->rows(), t->cols()));
  adam_step(net, g, st);
  EXPECT_TRUE(net == before);
  EXPECT_EQ(st.step_count, 1);
}

TEST(Adam, ZeroGradientIsNoOpForAnyState) {
  auto net = init_dense_net({3, 2}, Activation::identity, 4);
  AdamState st;
  Gradients g;
  for (auto* t : net.tensors()) g.push_back(RealMatrix::Constant(t->rows(), t->cols(), 0.3));
  for (int i = 0; i < 5; ++i) adam_step(net, g, st);
  const auto before = net;
  for (auto& t : g) t.setZero();
  adam_step(net, g, st);
  EXPECT_TRUE(net == before);
}

TEST(Adam, SingleStepReference) {
  RealMatrix p(1, 1);
  p(0, 0) = 0.0;
  RealMatrix* params[] = {&p};
  const RealMatrix g = RealMatrix::Constant(1, 1, 1.0);
  AdamState st;
  adam_step(std::span<RealMatrix* const>(params), std::span<const RealMatrix>(&g, 1), st);
  // m_hat = 1, v_hat = 1: delta = -0.01 / (1 + 1e-8)
  EXPECT_NEAR(p(0, 0), -0.01 / (1.0 + 1e-8), 1e-18);
  // the rounded reference value is only good to about 1e-10
  EXPECT_NEAR(p(0, 0), -0.00999999999, 1e-10);
  EXPECT_EQ(st.step_count, 1);
}

TEST(Adam, SymmetricParamsGetIdenticalUpdates) {
  RealMatrix a = RealMatrix::Constant(2, 2, 0.5), b = a;
  RealMatrix* params[] = {&a, &b};
  const RealMatrix g = random_matrix(2, 2, 3);
  const RealMatrix grads[] = {g, g};
  AdamState st;
  for (int i = 0; i < 3; ++i) adam_step(std::span<RealMatrix* const>(params), std::span<const RealMatrix>(grads), st);
  EXPECT_EQ(a, b);
  for (const auto& v : st.second_moment) EXPECT_TRUE((v.array() >= 0.0).all());
}

TEST(Adam, ShapeMismatchThrows) {
  RealMatrix p(2, 2);
  p.setZero();
  RealMatrix* params[] = {&p};
  const RealMatrix g = RealMatrix::Zero(3, 2);
  AdamState st;
  try {
    adam_step(std::span<RealMatrix* const>(params), std::span<const RealMatrix>(&g, 1), st);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::shape);
  }
}

TEST(TrainRegression, SinglePointDescends) {
  auto net = init_dense_net({1, 1}, Activation::identity, 1);
  RealMatrix x(1, 1);
  x(0, 0) = 0.8;
  RealVector t(1);
  t(0) = 2.0;
  TrainOptions opt;
  const auto r = train_regression(net, x, t, opt);
  EXPECT_LT(r.final_mse, r.initial_mse);
}

TEST(TrainRegression, ConstantTargetsConverge) {
  auto net = init_dense_net({2, 1}, Activation::identity, 2);
  const RealMatrix x = random_matrix(20, 2, 4);
  const RealVector t = RealVector::Constant(20, 0.7);
  TrainOptions opt;
  opt.epochs = 200;
  opt.batch_size = 20;
  const auto r = train_regression(net, x, t, opt);
  ASSERT_EQ(r.epoch_mse.size(), 200u);
  EXPECT_LT(r.epoch_mse.back(), r.epoch_mse[10]);
  EXPECT_LT(r.epoch_mse[10], r.initial_mse);
  EXPECT_LT(r.final_mse, 1e-3);
}

TEST(TrainRegression, RecoversSlope) {
  // closed-form least squares on t = 2x + 1 is exact, so slope 2 is the target
  Rng rng(5);
  RealMatrix x(100, 1);
  RealVector t(100);
  for (int i = 0; i < 100; ++i) {
    x(i, 0) = rng.uniform(-1.0, 1.0);
    t(i) = 2.0 * x(i, 0) + 1.0;
  }
  const double mx = x.col(0).mean(), mt = t.mean();
  const double ls_slope = ((x.col(0).array() - mx) * (t.array() - mt)).sum() / (x.col(0).array() - mx).square().sum();
  ASSERT_NEAR(ls_slope, 2.0, 1e-12);

  auto net = init_dense_net({1, 1}, Activation::identity, 6);
  TrainOptions opt;
  opt.epochs = 300;
  opt.batch_size = 16;
  train_regression(net, x, t, opt);
  EXPECT_NEAR(net.layers[0].weights(0, 0), ls_slope, 0.05);
}

TEST(TrainRegression, EmptyDatasetRejected) {
  auto net = init_dense_net({1, 1}, Activation::identity, 6);
  try {
    train_regression(net, RealMatrix(0, 1), RealVector(0), TrainOptions{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_input);
  }
}

TEST(TrainRegression, Deterministic) {
  const RealMatrix x = random_matrix(30, 3, 1);
  const RealVector t = random_matrix(30, 1, 2).col(0);
  auto a = init_dense_net({3, 4, 1}, Activation::identity, 3), b = a;
  TrainOptions opt;
  opt.epochs = 10;
  opt.seed = 77;
  train_regression(a, x, t, opt);
  train_regression(b, x, t, opt);
  EXPECT_TRUE(a == b);
}
