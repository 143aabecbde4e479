#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "derl/market.hpp"
#include "derl/nn.hpp"
#include "derl/rng.hpp"

namespace derl::td3 {

struct Config {
  double gamma = 0.999;
  double actor_lr = 2e-4;
  double critic_lr = 2e-4;
  double tau = 0.005;
  int policy_delay = 5;        // actor + target cadence, in critic updates
  double explore_sigma = 0.1;  // exploration noise, logit units
  double smooth_sigma = 0.02;  // target smoothing noise
  double noise_clip = 0.5;
  int batch_size = 40;
  int buffer_capacity = 100000;
  int warmup_steps = 100;      // interactions before updates begin
  std::vector<int> hidden = {256, 256, 256};
};

// Uniform-sampling ring buffer over raw-state transitions. Embedding is
// applied at sample time with whatever encoder is current.
class ReplayBuffer {
public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(env::TransitionTuple t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const env::TransitionTuple& at(std::size_t i) const { return items_[i]; }

  std::vector<std::size_t> sample_indices(int n, Rng& rng) const;

private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<env::TransitionTuple> items_;
};

struct Agent {
  nn::DenseNet actor, critic1, critic2;
  nn::DenseNet target_actor, target_critic1, target_critic2;
  nn::OptimizerState actor_opt, critic1_opt, critic2_opt;
  Config config;
  long update_count = 0;

  Eigen::Index dim_z() const { return actor.input_size(); }
  Eigen::Index dim_a() const { return actor.output_size(); }
};

// Actor [dim_z, hidden..., dim_a] with simplex projection at the head;
// twin critics [dim_z + dim_a, hidden..., 1]; targets start as copies.
Agent make_agent(int dim_z, int dim_a, const Config& config,
                 std::uint64_t seed);

// Deterministic policy plus exploration noise in logit space, then the
// long-only projection.
env::PortfolioAction select_action(const nn::DenseNet& actor,
                                   const Eigen::VectorXd& z, double sigma,
                                   Rng& rng);

// Batch already embedded with the current encoder snapshot.
struct EmbeddedBatch {
  Eigen::MatrixXd z;       // dim_z x n
  Eigen::MatrixXd a;       // dim_a x n
  Eigen::VectorXd r;       // n
  Eigen::MatrixXd z_next;  // dim_z x n

  Eigen::Index size() const { return z.cols(); }
};

// Mean squared TD error of one critic against fixed targets, with exact
// gradients; exposed for gradient checks.
double critic_loss_grad(const nn::DenseNet& critic, const Eigen::MatrixXd& z,
                        const Eigen::MatrixXd& a, const Eigen::VectorXd& y,
                        nn::GradientBundle* grads);

// J = 1/n sum_i Q(z_i, pi(z_i)) with the projected policy; gradient w.r.t.
// the actor parameters via the critic's action gradient.
double actor_objective_grad(const nn::DenseNet& actor,
                            const nn::DenseNet& critic,
                            const Eigen::MatrixXd& z,
                            nn::GradientBundle* grads);

// y_i = r_i + gamma * min(Q'_1, Q'_2)(z'_i, atilde_i) with smoothed target
// actions atilde = project(pi'(z') + clipped noise).
Eigen::VectorXd critic_targets(const Agent& agent, const EmbeddedBatch& batch,
                               Rng& rng);

// Regress both critics toward y; returns the mean TD loss across the pair.
double critic_update(Agent& agent, const EmbeddedBatch& batch,
                     const Eigen::VectorXd& y);

// Gradient ascent on Q1 through the projected policy; returns -J.
double actor_update(Agent& agent, const EmbeddedBatch& batch);

// target <- tau * source + (1 - tau) * target.
void soft_update(nn::DenseNet& target, const nn::DenseNet& source, double tau);

struct UpdateLog {
  double td_loss = 0.0;
  double actor_loss = 0.0;
  bool actor_updated = false;
};

// One TD3 update: critics every call, actor and targets on the delayed
// cadence.
UpdateLog update(Agent& agent, const EmbeddedBatch& batch, Rng& rng);

using EmbedFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct TrainHooks {
  // Called with the most recent `refresh_every` transitions.
  std::function<void(const std::vector<env::TransitionTuple>&)> encoder_refresh;
  int refresh_every = 0;  // 0 disables refreshes
};

struct StepLogRow {
  long step = 0;
  double reward = 0.0;
  double td_loss = 0.0;
  double actor_loss = 0.0;
  std::size_t buffer_size = 0;
};

struct TrainResult {
  long steps = 0;
  std::vector<StepLogRow> log;
  std::vector<env::TransitionTuple> visited;  // in interaction order
};

// Interact/store/update loop over the environment's decision range.
// Episodes wrap to the start of the range; fully deterministic for fixed
// seeds and a deterministic embed function.
TrainResult train_loop(env::MarketEnv& env, const EmbedFn& embed,
                       ReplayBuffer& buffer, Agent& agent, long steps,
                       Rng& rng, const TrainHooks& hooks = {},
                       int log_every = 100);

}  // namespace derl::td3
