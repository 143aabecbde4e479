#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>

#include "derl/nn.hpp"
#include "derl/rng.hpp"

namespace testutil {

// Central finite differences of a scalar objective w.r.t. every parameter of
// the net; the objective is re-evaluated on a freshly perturbed copy.
inline derl::nn::GradientBundle fd_gradients(
    const derl::nn::DenseNet& net,
    const std::function<double(const derl::nn::DenseNet&)>& objective,
    double h = 1e-5) {
  derl::nn::GradientBundle g = derl::nn::GradientBundle::zeros_like(net);
  derl::nn::DenseNet work = net;
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    auto& w = work.layers[li].weight;
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        const double orig = w(r, c);
        w(r, c) = orig + h;
        const double up = objective(work);
        w(r, c) = orig - h;
        const double down = objective(work);
        w(r, c) = orig;
        g.layers[li].weight(r, c) = (up - down) / (2.0 * h);
      }
    }
    auto& b = work.layers[li].bias;
    for (Eigen::Index r = 0; r < b.size(); ++r) {
      const double orig = b[r];
      b[r] = orig + h;
      const double up = objective(work);
      b[r] = orig - h;
      const double down = objective(work);
      b[r] = orig;
      g.layers[li].bias[r] = (up - down) / (2.0 * h);
    }
  }
  return g;
}

// Central differences at h = 1e-5 resolve gradients to roughly
// eps * |f| / (2h) ~ 1e-9 absolute; the 1e-3 floor makes the 1e-4 relative
// bound equivalent to a 1e-7 absolute bound on near-zero entries, well above
// that noise and far below any real gradient defect.
inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1e-3, std::abs(a), std::abs(b)});
}

// Worst per-parameter relative error between two bundles.
inline double max_rel_err(const derl::nn::GradientBundle& a,
                          const derl::nn::GradientBundle& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    for (Eigen::Index r = 0; r < a.layers[i].weight.rows(); ++r)
      for (Eigen::Index c = 0; c < a.layers[i].weight.cols(); ++c)
        worst = std::max(worst, rel_err(a.layers[i].weight(r, c),
                                        b.layers[i].weight(r, c)));
    for (Eigen::Index r = 0; r < a.layers[i].bias.size(); ++r)
      worst = std::max(worst, rel_err(a.layers[i].bias[r],
                                      b.layers[i].bias[r]));
  }
  return worst;
}

// Random net with weights large enough that finite differences are well
// conditioned (tanh keeps the objective smooth).
inline derl::nn::DenseNet random_net(const std::vector<int>& sizes,
                                     std::uint64_t seed, bool smooth = true) {
  std::vector<derl::nn::Activation> acts(sizes.size() - 1,
                                         smooth ? derl::nn::Activation::Tanh
                                                : derl::nn::Activation::Relu);
  acts.back() = derl::nn::Activation::Linear;
  derl::nn::DenseNet net = derl::nn::init_net(sizes, acts, seed, 0.5);
  derl::Rng rng(seed + 999);
  for (auto& l : net.layers)
    for (Eigen::Index i = 0; i < l.bias.size(); ++i)
      l.bias[i] = 0.3 * rng.normal();
  return net;
}

}  // namespace testutil
