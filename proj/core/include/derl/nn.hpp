#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "derl/rng.hpp"

namespace derl::nn {

enum class Activation { Relu, Linear, Tanh };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct Layer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
  Activation activation = Activation::Linear;
};

// A dense feedforward chain. Consecutive layer dimensions must agree;
// validate() enforces that along with parameter finiteness.
struct DenseNet {
  std::vector<Layer> layers;
  std::uint64_t seed = 0;

  Eigen::Index input_size() const { return layers.front().weight.cols(); }
  Eigen::Index output_size() const { return layers.back().weight.rows(); }
  Eigen::Index parameter_count() const;
  void validate() const;
};

struct LayerGrad {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
};

// Partial derivatives of a scalar objective w.r.t. every parameter of a
// DenseNet, plus the derivative w.r.t. the network input.
struct GradientBundle {
  std::vector<LayerGrad> layers;
  Eigen::MatrixXd input;  // in x batch

  static GradientBundle zeros_like(const DenseNet& net, Eigen::Index batch = 1);
  void add_scaled(const GradientBundle& other, double scale);
  double squared_norm() const;  // parameters only
};

// Weights i.i.d. Normal(0, init_std^2) drawn from the given seed in layer
// order, row-major within each weight matrix; biases zero.
DenseNet init_net(const std::vector<int>& layer_sizes,
                  const std::vector<Activation>& activations,
                  std::uint64_t seed, double init_std = 1e-3);

// Convenience: relu hidden layers, linear output.
DenseNet init_mlp(const std::vector<int>& layer_sizes, std::uint64_t seed,
                  double init_std = 1e-3);

Eigen::VectorXd forward(const DenseNet& net, const Eigen::VectorXd& x);

// Batched forward over column-stacked inputs (in x n) -> (out x n).
Eigen::MatrixXd forward_batch(const DenseNet& net, const Eigen::MatrixXd& xs);

// Activations cached during a forward pass, reused by backward.
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> pre;   // pre-activation per layer, out x n
  std::vector<Eigen::MatrixXd> post;  // post-activation per layer, out x n
  const Eigen::MatrixXd& output() const { return post.back(); }
};

ForwardTrace forward_trace(const DenseNet& net, const Eigen::MatrixXd& xs);

// Exact reverse-mode gradients of sum_b <upstream_col_b, forward(net, x_b)>
// w.r.t. all parameters and the inputs. upstream is out x n.
GradientBundle backward(const DenseNet& net, const Eigen::MatrixXd& xs,
                        const Eigen::MatrixXd& upstream);

// Variant reusing an existing trace (xs must be the trace's input).
GradientBundle backward_from_trace(const DenseNet& net,
                                   const Eigen::MatrixXd& xs,
                                   const ForwardTrace& trace,
                                   const Eigen::MatrixXd& upstream);

enum class OptimizerKind { Sgd, Adam };

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step_count = 0;
  std::vector<LayerGrad> first_moment;   // adam only
  std::vector<LayerGrad> second_moment;  // adam only

  static OptimizerState sgd(double lr);
  static OptimizerState adam(double lr, double beta1 = 0.9,
                             double beta2 = 0.999, double epsilon = 1e-8);
};

// In-place parameter update. sgd: p -= lr * g. adam: bias-corrected update.
// Throws NumericError naming the offending layer on non-finite gradients.
void optimizer_step(OptimizerState& state, DenseNet& net,
                    const GradientBundle& grads);

// Numerically stable softmax (max subtraction); output sums to one.
Eigen::VectorXd softmax(const Eigen::VectorXd& x);

// Jacobian-vector product of softmax at x applied to upstream:
// J^T u = y .* (u - <u, y>) with y = softmax(x).
Eigen::VectorXd softmax_backward(const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& upstream);

}  // namespace derl::nn
