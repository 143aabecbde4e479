#include <doctest.h>

#include <cmath>

#include "derl/errors.hpp"
#include "derl/nn.hpp"
#include "test_util.hpp"

using namespace derl;

TEST_CASE("init_net is deterministic and zero-biased") {
  const auto a = nn::init_mlp({3, 2}, 7);
  const auto b = nn::init_mlp({3, 2}, 7);
  CHECK(a.layers[0].weight == b.layers[0].weight);
  CHECK(a.layers[0].bias.isZero(0.0));
  const auto c = nn::init_mlp({3, 2}, 8);
  CHECK(a.layers[0].weight != c.layers[0].weight);
}

TEST_CASE("init_net draws weights with std 0.001") {
  // Statistical oracle: the sample std over 1e6 draws sits within 1% of
  // the target.
  const auto net = nn::init_mlp({1000, 1000, 4}, 42);
  const auto& w = net.layers[0].weight;
  const double mean = w.mean();
  const double sd =
      std::sqrt((w.array() - mean).square().sum() / (w.size() - 1));
  CHECK(sd == doctest::Approx(0.001).epsilon(0.01));
}

TEST_CASE("init_net validates sizes") {
  CHECK_THROWS_AS(nn::init_mlp({3}, 1), ConfigError);
  CHECK_THROWS_AS(nn::init_mlp({3, 0}, 1), ConfigError);
}

TEST_CASE("forward matches hand-computed affine maps") {
  nn::DenseNet net;
  nn::Layer l;
  l.weight.resize(2, 2);
  l.weight << 1, 2, 3, 4;
  l.bias = Eigen::VectorXd::Zero(2);
  l.activation = nn::Activation::Linear;
  net.layers.push_back(l);

  Eigen::VectorXd x(2);
  x << 1, 1;
  const Eigen::VectorXd y = nn::forward(net, x);
  CHECK(y[0] == doctest::Approx(3.0));
  CHECK(y[1] == doctest::Approx(7.0));
}

TEST_CASE("zero net maps to zero; relu clips") {
  auto net = nn::init_mlp({3, 3}, 1, 0.0);
  Eigen::VectorXd x(3);
  x << 1.0, -2.0, 0.5;
  CHECK(nn::forward(net, x).isZero(0.0));

  nn::DenseNet relu_net;
  nn::Layer l;
  l.weight = Eigen::MatrixXd::Identity(2, 2);
  l.bias = Eigen::VectorXd::Zero(2);
  l.activation = nn::Activation::Relu;
  relu_net.layers.push_back(l);
  Eigen::VectorXd v(2);
  v << -1.0, 2.0;
  const Eigen::VectorXd out = nn::forward(relu_net, v);
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 2.0);
}

TEST_CASE("forward rejects dimension mismatch") {
  const auto net = nn::init_mlp({3, 2}, 7);
  CHECK_THROWS_AS(nn::forward(net, Eigen::VectorXd::Zero(4)), ShapeError);
}

TEST_CASE("backward: zero upstream gives zero gradients") {
  const auto net = testutil::random_net({4, 5, 3}, 2);
  const Eigen::VectorXd x = Rng(3).normal_vector(4);
  const auto g = nn::backward(net, x, Eigen::MatrixXd::Zero(3, 1));
  CHECK(g.squared_norm() == 0.0);
  CHECK(g.input.isZero(0.0));
}

TEST_CASE("backward: bias gradient of a linear layer is the upstream") {
  nn::DenseNet net;
  nn::Layer l;
  l.weight = Eigen::MatrixXd::Random(3, 2);
  l.bias = Eigen::VectorXd::Zero(3);
  l.activation = nn::Activation::Linear;
  net.layers.push_back(l);
  const auto g = nn::backward(net, Eigen::VectorXd::Random(2),
                              Eigen::MatrixXd::Ones(3, 1));
  CHECK(g.layers[0].bias.isApprox(Eigen::VectorXd::Ones(3)));
}

TEST_CASE("backward matches central finite differences") {
  // Finite-difference oracle over random small networks, including relu.
  for (std::uint64_t seed : {11, 12, 13, 14, 15}) {
    const bool smooth = seed % 2 == 0;
    const auto net = testutil::random_net({4, 8, 6, 2}, seed, smooth);
    Rng rng(seed * 100);
    const Eigen::VectorXd x = rng.normal_vector(4);
    const Eigen::VectorXd up = rng.normal_vector(2);

    const auto analytic = nn::backward(net, x, up);
    const auto fd = testutil::fd_gradients(net, [&](const nn::DenseNet& n) {
      return up.dot(nn::forward(n, x));
    });
    CHECK(testutil::max_rel_err(analytic, fd) < 1e-4);
  }
}

TEST_CASE("backward input gradient matches finite differences") {
  const auto net = testutil::random_net({3, 6, 2}, 21);
  Rng rng(22);
  Eigen::VectorXd x = rng.normal_vector(3);
  const Eigen::VectorXd up = rng.normal_vector(2);
  const auto g = nn::backward(net, x, up);
  const double h = 1e-5;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double hi = up.dot(nn::forward(net, x));
    x[i] = orig - h;
    const double lo = up.dot(nn::forward(net, x));
    x[i] = orig;
    CHECK(testutil::rel_err(g.input(i, 0), (hi - lo) / (2 * h)) < 1e-4);
  }
}

TEST_CASE("batched forward/backward agree with per-sample calls") {
  const auto net = testutil::random_net({3, 5, 2}, 31);
  Rng rng(32);
  const Eigen::MatrixXd xs = rng.normal_matrix(3, 4);
  const Eigen::MatrixXd ups = rng.normal_matrix(2, 4);
  const auto batched = nn::backward(net, xs, ups);
  auto accum = nn::GradientBundle::zeros_like(net);
  for (int i = 0; i < 4; ++i) {
    const auto gi = nn::backward(net, xs.col(i), ups.col(i));
    accum.add_scaled(gi, 1.0);
    CHECK(batched.input.col(i).isApprox(gi.input.col(0), 1e-12));
  }
  CHECK(testutil::max_rel_err(batched, accum) < 1e-10);
}

TEST_CASE("sgd step") {
  nn::DenseNet net;
  nn::Layer l;
  l.weight = Eigen::MatrixXd::Constant(1, 1, 1.0);
  l.bias = Eigen::VectorXd::Zero(1);
  net.layers.push_back(l);
  auto g = nn::GradientBundle::zeros_like(net);
  g.layers[0].weight(0, 0) = 2.0;
  auto opt = nn::OptimizerState::sgd(0.1);
  nn::optimizer_step(opt, net, g);
  CHECK(net.layers[0].weight(0, 0) == doctest::Approx(0.8));
}

TEST_CASE("adam first step has magnitude ~ lr") {
  // Closed-form: with constant gradient, the bias-corrected first step is
  // lr * g / (|g| + eps) ~ lr * sign(g).
  auto net = nn::init_mlp({2, 2}, 5, 0.0);
  auto g = nn::GradientBundle::zeros_like(net);
  g.layers[0].weight.setConstant(3.0);
  auto opt = nn::OptimizerState::adam(0.01);
  nn::optimizer_step(opt, net, g);
  CHECK(net.layers[0].weight(0, 0) ==
        doctest::Approx(-0.01).epsilon(1e-6));
}

TEST_CASE("zero gradient is a fixed point") {
  auto net = testutil::random_net({3, 4, 3}, 8);
  const auto before = net;
  auto g = nn::GradientBundle::zeros_like(net);
  auto adam = nn::OptimizerState::adam(0.1);
  nn::optimizer_step(adam, net, g);
  auto sgd = nn::OptimizerState::sgd(0.1);
  nn::optimizer_step(sgd, net, g);
  CHECK(net.layers[0].weight == before.layers[0].weight);
  CHECK(net.layers[1].weight == before.layers[1].weight);
}

TEST_CASE("optimizer rejects non-finite gradients with the layer index") {
  auto net = testutil::random_net({2, 2}, 9);
  auto g = nn::GradientBundle::zeros_like(net);
  g.layers[0].weight(0, 0) = std::numeric_limits<double>::quiet_NaN();
  auto opt = nn::OptimizerState::sgd(0.1);
  CHECK_THROWS_WITH_AS(nn::optimizer_step(opt, net, g),
                       doctest::Contains("layer 0"), NumericError);
}

TEST_CASE("softmax basics") {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(3);
  const Eigen::VectorXd y = nn::softmax(x);
  for (int i = 0; i < 3; ++i) CHECK(y[i] == doctest::Approx(1.0 / 3));

  Eigen::VectorXd z(2);
  z << std::log(2.0), 0.0;
  const Eigen::VectorXd s = nn::softmax(z);
  CHECK(s[0] == doctest::Approx(2.0 / 3).epsilon(1e-12));
  CHECK(s[1] == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("softmax is overflow-safe and shift-invariant") {
  Eigen::VectorXd big(2);
  big << 1000.0, 0.0;
  const Eigen::VectorXd y = nn::softmax(big);
  CHECK(y[0] == doctest::Approx(1.0));
  CHECK(y.allFinite());

  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd x = rng.normal_vector(5);
    const double c = 10.0 * rng.normal();
    const Eigen::VectorXd a = nn::softmax(x);
    const Eigen::VectorXd b =
        nn::softmax(x + Eigen::VectorXd::Constant(5, c));
    CHECK(a.sum() == doctest::Approx(1.0).epsilon(1e-12));
    for (int i = 0; i < 5; ++i)
      CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  }
}

TEST_CASE("softmax rejects empty input") {
  CHECK_THROWS_AS(nn::softmax(Eigen::VectorXd()), ShapeError);
}

TEST_CASE("softmax_backward matches finite differences") {
  Rng rng(91);
  Eigen::VectorXd x = rng.normal_vector(4);
  const Eigen::VectorXd up = rng.normal_vector(4);
  const Eigen::VectorXd y = nn::softmax(x);
  const Eigen::VectorXd g = nn::softmax_backward(y, up);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < 4; ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double hi = up.dot(nn::softmax(x));
    x[i] = orig - h;
    const double lo = up.dot(nn::softmax(x));
    x[i] = orig;
    CHECK(testutil::rel_err(g[i], (hi - lo) / (2 * h)) < 1e-4);
  }
}
