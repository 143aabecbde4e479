#pragma once

#include <deque>
#include <vector>

#include "derl/market.hpp"
#include "derl/rng.hpp"
#include "derl/wae.hpp"

namespace derl::foml {

struct Rates {
  double alpha1 = 1e-4;  // online step size
  double beta1 = 1e-3;   // online regularization weight
  double alpha2 = 5e-4;  // anchor step size
  double beta2 = 5e-3;   // anchor regularization weight
};

// R(phi, theta, zeta) = |(phi, theta) - zeta|^2 over all parameters.
double regularizer(const wae::Autoencoder& live,
                   const wae::Autoencoder& anchor);

// params <- params - alpha1 * grad + 2 alpha1 beta1 (anchor - params),
// applied layerwise to encoder and decoder.
void apply_online_step(wae::Autoencoder& live, const wae::Gradients& grads,
                       const wae::Autoencoder& anchor, double alpha1,
                       double beta1);

// One online update: the new-data direction is the gradient of the
// reconstruction loss over the training split (sampled encodings), the meta
// direction pulls toward the anchor. Returns the pre-step loss.
wae::LossParts online_update(wae::Autoencoder& live,
                             const wae::Autoencoder& anchor,
                             const wae::Batch& train, const Rates& rates,
                             Rng& rng);

// zeta <- zeta - alpha2 * grad_zeta L(live; val)
//              - 2 alpha2 beta2 sum_{k=0..J} (zeta - history_k).
// grad_zeta L is computed through the one-step coupling of the online rule:
// the anchor enters the live parameters with factor 2 alpha1 beta1, so
// grad_zeta L = 2 alpha1 beta1 * grad_params L(live; val).
void anchor_update(wae::Autoencoder& anchor,
                   const std::deque<wae::Autoencoder>& history,
                   const wae::Autoencoder& live, const wae::Batch& val,
                   const Rates& rates, Rng& rng);

struct StreamConfig {
  int stream_size = 42;       // |U|
  double train_fraction = 0.8;
  int max_history = 5;        // J; the history keeps up to J + 1 entries
  int epochs = 5;             // online updates per stream
};

struct WindowUpdateLog {
  int window = 0;
  double loss_before = 0.0;
  double loss_after = 0.0;
  double param_delta_norm = 0.0;
  double anchor_delta_norm = 0.0;
};

// Accumulates per-window data streams and drives the update protocol.
class StreamBuffer {
public:
  StreamBuffer(StreamConfig config, std::uint64_t seed);

  // Returns true when a full stream of |U| transitions is ready.
  bool push(env::TransitionTuple t);

  bool stream_ready() const {
    return static_cast<int>(pending_.size()) >= config_.stream_size;
  }
  int completed_windows() const { return completed_; }
  const std::deque<wae::Autoencoder>& history() const { return history_; }
  const std::vector<env::TransitionTuple>& memory() const { return memory_; }
  const StreamConfig& config() const { return config_; }

  // Consumes the pending stream: chronological train/val split, `epochs`
  // online updates on the train split, an anchor update on data sampled from
  // the memory buffer, and a history append (evicting beyond J).
  WindowUpdateLog run_window_update(wae::Autoencoder& live,
                                    wae::Autoencoder& anchor,
                                    const Rates& rates);

private:
  StreamConfig config_;
  Rng rng_;
  std::vector<env::TransitionTuple> pending_;
  std::vector<env::TransitionTuple> memory_;
  std::deque<wae::Autoencoder> history_;
  int completed_ = 0;
};

}  // namespace derl::foml
