#include "derl/foml.hpp"

#include <algorithm>
#include <cmath>

#include "derl/errors.hpp"

namespace derl::foml {

namespace {

void check_congruent(const nn::DenseNet& a, const nn::DenseNet& b) {
  if (a.layers.size() != b.layers.size())
    throw ShapeError("parameter bundles are not shape-congruent");
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    if (a.layers[i].weight.rows() != b.layers[i].weight.rows() ||
        a.layers[i].weight.cols() != b.layers[i].weight.cols())
      throw ShapeError("parameter bundles are not shape-congruent");
  }
}

double net_sq_distance(const nn::DenseNet& a, const nn::DenseNet& b) {
  check_congruent(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    s += (a.layers[i].weight - b.layers[i].weight).squaredNorm();
    s += (a.layers[i].bias - b.layers[i].bias).squaredNorm();
  }
  return s;
}

void net_online_step(nn::DenseNet& p, const nn::GradientBundle& g,
                     const nn::DenseNet& anchor, double a1, double b1) {
  check_congruent(p, anchor);
  const double pull = 2.0 * a1 * b1;
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    if (!g.layers[i].weight.allFinite() || !g.layers[i].bias.allFinite())
      throw NumericError("online_update: non-finite gradient in layer " +
                         std::to_string(i));
    p.layers[i].weight += -a1 * g.layers[i].weight +
                          pull * (anchor.layers[i].weight - p.layers[i].weight);
    p.layers[i].bias += -a1 * g.layers[i].bias +
                        pull * (anchor.layers[i].bias - p.layers[i].bias);
  }
}

void net_anchor_step(nn::DenseNet& zeta, const nn::GradientBundle& live_grad,
                     double coupled_scale,
                     const std::vector<const nn::DenseNet*>& history,
                     double a2, double b2) {
  const double pull = 2.0 * a2 * b2;
  for (std::size_t i = 0; i < zeta.layers.size(); ++i) {
    Eigen::MatrixXd wsum = Eigen::MatrixXd::Zero(
        zeta.layers[i].weight.rows(), zeta.layers[i].weight.cols());
    Eigen::VectorXd bsum = Eigen::VectorXd::Zero(zeta.layers[i].bias.size());
    for (const nn::DenseNet* h : history) {
      wsum += zeta.layers[i].weight - h->layers[i].weight;
      bsum += zeta.layers[i].bias - h->layers[i].bias;
    }
    zeta.layers[i].weight +=
        -a2 * coupled_scale * live_grad.layers[i].weight - pull * wsum;
    zeta.layers[i].bias +=
        -a2 * coupled_scale * live_grad.layers[i].bias - pull * bsum;
  }
}

}  // namespace

double regularizer(const wae::Autoencoder& live,
                   const wae::Autoencoder& anchor) {
  return net_sq_distance(live.encoder, anchor.encoder) +
         net_sq_distance(live.decoder, anchor.decoder);
}

void apply_online_step(wae::Autoencoder& live, const wae::Gradients& grads,
                       const wae::Autoencoder& anchor, double alpha1,
                       double beta1) {
  net_online_step(live.encoder, grads.encoder, anchor.encoder, alpha1, beta1);
  net_online_step(live.decoder, grads.decoder, anchor.decoder, alpha1, beta1);
}

wae::LossParts online_update(wae::Autoencoder& live,
                             const wae::Autoencoder& anchor,
                             const wae::Batch& train, const Rates& rates,
                             Rng& rng) {
  if (rates.alpha1 <= 0.0)
    throw ConfigError("online_update: alpha1 must be positive");
  const wae::Draws draws = wae::make_draws(live.dim_z(), train.size(), rng);
  wae::Gradients grads;
  const wae::KernelSpec unused{1.0};
  // The online loss is the reconstruction term only (lambda = 0).
  const wae::LossParts parts =
      wae::wae_loss(live, train, 0.0, unused, draws, &grads);
  apply_online_step(live, grads, anchor, rates.alpha1, rates.beta1);
  return parts;
}

void anchor_update(wae::Autoencoder& anchor,
                   const std::deque<wae::Autoencoder>& history,
                   const wae::Autoencoder& live, const wae::Batch& val,
                   const Rates& rates, Rng& rng) {
  if (history.empty())
    throw StateError("anchor_update: empty parameter history");
  const wae::Draws draws = wae::make_draws(live.dim_z(), val.size(), rng);
  wae::Gradients grads;
  const wae::KernelSpec unused{1.0};
  wae::wae_loss(live, val, 0.0, unused, draws, &grads);
  const double coupled = 2.0 * rates.alpha1 * rates.beta1;

  std::vector<const nn::DenseNet*> enc_hist, dec_hist;
  for (const auto& h : history) {
    enc_hist.push_back(&h.encoder);
    dec_hist.push_back(&h.decoder);
  }
  net_anchor_step(anchor.encoder, grads.encoder, coupled, enc_hist,
                  rates.alpha2, rates.beta2);
  net_anchor_step(anchor.decoder, grads.decoder, coupled, dec_hist,
                  rates.alpha2, rates.beta2);
}

StreamBuffer::StreamBuffer(StreamConfig config, std::uint64_t seed)
    : config_(config), rng_(seed) {
  if (config_.stream_size < 2)
    throw ConfigError("StreamBuffer: stream size must be >= 2");
  if (config_.train_fraction <= 0.0 || config_.train_fraction >= 1.0)
    throw ConfigError("StreamBuffer: train fraction must be in (0, 1)");
  if (config_.max_history < 0)
    throw ConfigError("StreamBuffer: history length must be >= 0");
}

bool StreamBuffer::push(env::TransitionTuple t) {
  pending_.push_back(std::move(t));
  return stream_ready();
}

WindowUpdateLog StreamBuffer::run_window_update(wae::Autoencoder& live,
                                                wae::Autoencoder& anchor,
                                                const Rates& rates) {
  if (!stream_ready())
    throw StateError("run_window_update: stream incomplete (" +
                     std::to_string(pending_.size()) + " of " +
                     std::to_string(config_.stream_size) + " transitions)");

  std::vector<env::TransitionTuple> stream(
      pending_.begin(), pending_.begin() + config_.stream_size);
  pending_.erase(pending_.begin(), pending_.begin() + config_.stream_size);
  for (const auto& t : stream) memory_.push_back(t);

  // Chronological split.
  const int n_train = std::max(
      2, static_cast<int>(config_.train_fraction * config_.stream_size));
  const int n_val = std::max(2, config_.stream_size - n_train);
  std::vector<std::size_t> train_idx, val_idx;
  for (int i = 0; i < n_train; ++i) train_idx.push_back(i);
  const wae::Batch train = wae::batch_from_transitions(stream, train_idx);

  const wae::Autoencoder before = live;
  WindowUpdateLog log;
  log.window = completed_;
  log.loss_before = wae::eval_recon_mse(live, train);
  for (int e = 0; e < config_.epochs; ++e)
    online_update(live, anchor, train, rates, rng_);
  log.loss_after = wae::eval_recon_mse(live, train);
  log.param_delta_norm = std::sqrt(regularizer(live, before));

  history_.push_back(live);
  while (static_cast<int>(history_.size()) >
         config_.max_history + 1)
    history_.pop_front();

  // Anchor validation data: sampled uniformly from the memory buffer.
  std::vector<std::size_t> val_sample;
  for (int i = 0; i < n_val; ++i)
    val_sample.push_back(rng_.integer(memory_.size()));
  const wae::Batch val = wae::batch_from_transitions(memory_, val_sample);

  const wae::Autoencoder anchor_before = anchor;
  anchor_update(anchor, history_, live, val, rates, rng_);
  log.anchor_delta_norm = std::sqrt(regularizer(anchor, anchor_before));

  ++completed_;
  return log;
}

}  // namespace derl::foml
