#include "derl/nn.hpp"

#include <cmath>

#include "derl/errors.hpp"

namespace derl::nn {

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Linear: return "linear";
    case Activation::Tanh: return "tanh";
  }
  return "linear";
}

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::Relu;
  if (name == "linear") return Activation::Linear;
  if (name == "tanh") return Activation::Tanh;
  throw ConfigError("unknown activation: " + name);
}

Eigen::Index DenseNet::parameter_count() const {
  Eigen::Index n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

void DenseNet::validate() const {
  if (layers.empty()) throw ShapeError("DenseNet has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.bias.size() != l.weight.rows())
      throw ShapeError("layer " + std::to_string(i) + ": bias/weight mismatch");
    if (i > 0 && layers[i - 1].weight.rows() != l.weight.cols())
      throw ShapeError("layer " + std::to_string(i) +
                       ": input size does not chain with previous layer");
    if (!l.weight.allFinite() || !l.bias.allFinite())
      throw NumericError("layer " + std::to_string(i) +
                         ": non-finite parameters");
  }
}

GradientBundle GradientBundle::zeros_like(const DenseNet& net,
                                          Eigen::Index batch) {
  GradientBundle g;
  g.layers.reserve(net.layers.size());
  for (const auto& l : net.layers) {
    g.layers.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                        Eigen::VectorXd::Zero(l.bias.size())});
  }
  g.input = Eigen::MatrixXd::Zero(net.input_size(), batch);
  return g;
}

void GradientBundle::add_scaled(const GradientBundle& other, double scale) {
  if (layers.size() != other.layers.size())
    throw ShapeError("gradient bundles have different layer counts");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].weight += scale * other.layers[i].weight;
    layers[i].bias += scale * other.layers[i].bias;
  }
}

double GradientBundle::squared_norm() const {
  double s = 0.0;
  for (const auto& l : layers) s += l.weight.squaredNorm() + l.bias.squaredNorm();
  return s;
}

DenseNet init_net(const std::vector<int>& layer_sizes,
                  const std::vector<Activation>& activations,
                  std::uint64_t seed, double init_std) {
  if (layer_sizes.size() < 2)
    throw ConfigError("init_net: need at least two layer sizes");
  for (int s : layer_sizes)
    if (s < 1) throw ConfigError("init_net: layer sizes must be >= 1");
  if (activations.size() != layer_sizes.size() - 1)
    throw ConfigError("init_net: need one activation per layer");

  DenseNet net;
  net.seed = seed;
  Rng rng(seed);
  for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i) {
    Layer l;
    l.weight.resize(layer_sizes[i + 1], layer_sizes[i]);
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c)
        l.weight(r, c) = init_std * rng.normal();
    l.bias = Eigen::VectorXd::Zero(layer_sizes[i + 1]);
    l.activation = activations[i];
    net.layers.push_back(std::move(l));
  }
  return net;
}

DenseNet init_mlp(const std::vector<int>& layer_sizes, std::uint64_t seed,
                  double init_std) {
  std::vector<Activation> acts(layer_sizes.size() - 1, Activation::Relu);
  if (!acts.empty()) acts.back() = Activation::Linear;
  return init_net(layer_sizes, acts, seed, init_std);
}

namespace {

void apply_activation(Activation a, Eigen::MatrixXd& m) {
  switch (a) {
    case Activation::Relu:
      m = m.cwiseMax(0.0);
      break;
    case Activation::Tanh:
      m = m.array().tanh().matrix();
      break;
    case Activation::Linear:
      break;
  }
}

// d(activation)/d(pre) evaluated from pre/post activations.
Eigen::MatrixXd activation_grad(Activation a, const Eigen::MatrixXd& pre,
                                const Eigen::MatrixXd& post) {
  switch (a) {
    case Activation::Relu:
      return (pre.array() > 0.0).cast<double>().matrix();
    case Activation::Tanh:
      return (1.0 - post.array().square()).matrix();
    case Activation::Linear:
      return Eigen::MatrixXd::Ones(pre.rows(), pre.cols());
  }
  return Eigen::MatrixXd::Ones(pre.rows(), pre.cols());
}

}  // namespace

ForwardTrace forward_trace(const DenseNet& net, const Eigen::MatrixXd& xs) {
  if (xs.rows() != net.input_size())
    throw ShapeError("forward: input has " + std::to_string(xs.rows()) +
                     " rows, network expects " +
                     std::to_string(net.input_size()));
  ForwardTrace t;
  t.pre.reserve(net.layers.size());
  t.post.reserve(net.layers.size());
  Eigen::MatrixXd cur = xs;
  for (const auto& l : net.layers) {
    Eigen::MatrixXd z = l.weight * cur;
    z.colwise() += l.bias;
    t.pre.push_back(z);
    apply_activation(l.activation, z);
    t.post.push_back(z);
    cur = t.post.back();
  }
  return t;
}

Eigen::MatrixXd forward_batch(const DenseNet& net, const Eigen::MatrixXd& xs) {
  return forward_trace(net, xs).output();
}

Eigen::VectorXd forward(const DenseNet& net, const Eigen::VectorXd& x) {
  return forward_batch(net, x).col(0);
}

GradientBundle backward_from_trace(const DenseNet& net,
                                   const Eigen::MatrixXd& xs,
                                   const ForwardTrace& trace,
                                   const Eigen::MatrixXd& upstream) {
  const auto n_layers = static_cast<std::ptrdiff_t>(net.layers.size());
  if (upstream.rows() != net.output_size() || upstream.cols() != xs.cols())
    throw ShapeError("backward: upstream shape mismatch");
  if (!upstream.allFinite()) throw NumericError("backward: non-finite upstream");

  GradientBundle g;
  g.layers.resize(net.layers.size());

  Eigen::MatrixXd delta = upstream;
  for (std::ptrdiff_t i = n_layers - 1; i >= 0; --i) {
    const Layer& l = net.layers[i];
    delta = delta.cwiseProduct(
        activation_grad(l.activation, trace.pre[i], trace.post[i]));
    const Eigen::MatrixXd& below = (i == 0) ? xs : trace.post[i - 1];
    g.layers[i].weight = delta * below.transpose();
    g.layers[i].bias = delta.rowwise().sum();
    delta = (l.weight.transpose() * delta).eval();
  }
  g.input = delta;
  return g;
}

GradientBundle backward(const DenseNet& net, const Eigen::MatrixXd& xs,
                        const Eigen::MatrixXd& upstream) {
  return backward_from_trace(net, xs, forward_trace(net, xs), upstream);
}

OptimizerState OptimizerState::sgd(double lr) {
  OptimizerState s;
  s.kind = OptimizerKind::Sgd;
  s.learning_rate = lr;
  return s;
}

OptimizerState OptimizerState::adam(double lr, double beta1, double beta2,
                                    double epsilon) {
  OptimizerState s;
  s.kind = OptimizerKind::Adam;
  s.learning_rate = lr;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.epsilon = epsilon;
  return s;
}

void optimizer_step(OptimizerState& state, DenseNet& net,
                    const GradientBundle& grads) {
  if (grads.layers.size() != net.layers.size())
    throw ShapeError("optimizer_step: gradient/parameter layer mismatch");
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (!grads.layers[i].weight.allFinite() || !grads.layers[i].bias.allFinite())
      throw NumericError("optimizer_step: non-finite gradient in layer " +
                         std::to_string(i));
  }

  if (state.kind == OptimizerKind::Sgd) {
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      net.layers[i].weight -= state.learning_rate * grads.layers[i].weight;
      net.layers[i].bias -= state.learning_rate * grads.layers[i].bias;
    }
    ++state.step_count;
    return;
  }

  if (state.first_moment.empty()) {
    for (const auto& l : net.layers) {
      state.first_moment.push_back(
          {Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
           Eigen::VectorXd::Zero(l.bias.size())});
      state.second_moment.push_back(
          {Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
           Eigen::VectorXd::Zero(l.bias.size())});
    }
  }

  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const auto& g = grads.layers[i];
    m.weight = state.beta1 * m.weight + (1.0 - state.beta1) * g.weight;
    m.bias = state.beta1 * m.bias + (1.0 - state.beta1) * g.bias;
    v.weight = state.beta2 * v.weight.array().matrix() +
               (1.0 - state.beta2) * g.weight.cwiseProduct(g.weight);
    v.bias = state.beta2 * v.bias +
             (1.0 - state.beta2) * g.bias.cwiseProduct(g.bias);
    const Eigen::MatrixXd mw_hat = m.weight / bc1;
    const Eigen::VectorXd mb_hat = m.bias / bc1;
    const Eigen::MatrixXd vw_hat = v.weight / bc2;
    const Eigen::VectorXd vb_hat = v.bias / bc2;
    net.layers[i].weight.array() -=
        state.learning_rate * mw_hat.array() /
        (vw_hat.array().sqrt() + state.epsilon);
    net.layers[i].bias.array() -= state.learning_rate * mb_hat.array() /
                                  (vb_hat.array().sqrt() + state.epsilon);
  }
}

Eigen::VectorXd softmax(const Eigen::VectorXd& x) {
  if (x.size() == 0) throw ShapeError("softmax: empty vector");
  if (!x.allFinite()) throw NumericError("softmax: non-finite input");
  const double m = x.maxCoeff();
  Eigen::VectorXd e = (x.array() - m).exp();
  return e / e.sum();
}

Eigen::VectorXd softmax_backward(const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& upstream) {
  const double dot = upstream.dot(y);
  return y.cwiseProduct(upstream.array().matrix() -
                        Eigen::VectorXd::Constant(y.size(), dot));
}

}  // namespace derl::nn
