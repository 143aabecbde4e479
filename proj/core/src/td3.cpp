#include "derl/td3.hpp"

#include <algorithm>
#include <cmath>

#include "derl/errors.hpp"

namespace derl::td3 {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw ConfigError("replay buffer capacity must be > 0");
  items_.reserve(std::min<std::size_t>(capacity_, 1 << 16));
}

void ReplayBuffer::push(env::TransitionTuple t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
  } else {
    items_[next_] = std::move(t);
    next_ = (next_ + 1) % capacity_;
  }
}

std::vector<std::size_t> ReplayBuffer::sample_indices(int n, Rng& rng) const {
  if (items_.empty()) throw StateError("cannot sample from an empty buffer");
  std::vector<std::size_t> idx(static_cast<std::size_t>(n));
  for (auto& i : idx) i = rng.integer(items_.size());
  return idx;
}

Agent make_agent(int dim_z, int dim_a, const Config& config,
                 std::uint64_t seed) {
  if (config.tau <= 0.0 || config.tau > 1.0)
    throw ConfigError("td3: tau must be in (0, 1]");
  if (config.gamma < 0.0 || config.gamma > 1.0)
    throw ConfigError("td3: gamma must be in [0, 1]");
  if (config.policy_delay < 1)
    throw ConfigError("td3: policy delay must be >= 1");

  auto sizes_actor = std::vector<int>{dim_z};
  sizes_actor.insert(sizes_actor.end(), config.hidden.begin(),
                     config.hidden.end());
  sizes_actor.push_back(dim_a);
  auto sizes_critic = std::vector<int>{dim_z + dim_a};
  sizes_critic.insert(sizes_critic.end(), config.hidden.begin(),
                      config.hidden.end());
  sizes_critic.push_back(1);

  Agent agent;
  agent.config = config;
  agent.actor = nn::init_mlp(sizes_actor, seed);
  agent.critic1 = nn::init_mlp(sizes_critic, seed + 1);
  agent.critic2 = nn::init_mlp(sizes_critic, seed + 2);
  agent.target_actor = agent.actor;
  agent.target_critic1 = agent.critic1;
  agent.target_critic2 = agent.critic2;
  agent.actor_opt = nn::OptimizerState::adam(config.actor_lr);
  agent.critic1_opt = nn::OptimizerState::adam(config.critic_lr);
  agent.critic2_opt = nn::OptimizerState::adam(config.critic_lr);
  return agent;
}

env::PortfolioAction select_action(const nn::DenseNet& actor,
                                   const Eigen::VectorXd& z, double sigma,
                                   Rng& rng) {
  Eigen::VectorXd logits = nn::forward(actor, z);
  if (sigma > 0.0) logits += sigma * rng.normal_vector(logits.size());
  return env::project_long_only(logits);
}

namespace {

Eigen::MatrixXd stack_za(const Eigen::MatrixXd& z, const Eigen::MatrixXd& a) {
  Eigen::MatrixXd u(z.rows() + a.rows(), z.cols());
  u.topRows(z.rows()) = z;
  u.bottomRows(a.rows()) = a;
  return u;
}

Eigen::MatrixXd project_columns(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.cols(); ++i)
    out.col(i) = nn::softmax(logits.col(i));
  return out;
}

}  // namespace

double critic_loss_grad(const nn::DenseNet& critic, const Eigen::MatrixXd& z,
                        const Eigen::MatrixXd& a, const Eigen::VectorXd& y,
                        nn::GradientBundle* grads) {
  const Eigen::Index n = z.cols();
  const Eigen::MatrixXd input = stack_za(z, a);
  const nn::ForwardTrace trace = nn::forward_trace(critic, input);
  const Eigen::VectorXd q = trace.output().transpose();
  const Eigen::VectorXd err = q - y;
  const double loss = err.squaredNorm() / static_cast<double>(n);
  if (grads) {
    const Eigen::MatrixXd upstream =
        (2.0 / static_cast<double>(n)) * err.transpose();
    *grads = nn::backward_from_trace(critic, input, trace, upstream);
  }
  return loss;
}

double actor_objective_grad(const nn::DenseNet& actor,
                            const nn::DenseNet& critic,
                            const Eigen::MatrixXd& z,
                            nn::GradientBundle* grads) {
  const Eigen::Index n = z.cols();
  const nn::ForwardTrace actor_trace = nn::forward_trace(actor, z);
  const Eigen::MatrixXd actions = project_columns(actor_trace.output());

  const Eigen::MatrixXd input = stack_za(z, actions);
  const nn::ForwardTrace critic_trace = nn::forward_trace(critic, input);
  const double j = critic_trace.output().sum() / static_cast<double>(n);
  if (!grads) return j;

  // dJ/dQ = 1/n per sample; pull the action part of the critic input
  // gradient back through the softmax head into the actor.
  const Eigen::MatrixXd ones =
      Eigen::MatrixXd::Constant(1, n, 1.0 / static_cast<double>(n));
  const nn::GradientBundle critic_grads =
      nn::backward_from_trace(critic, input, critic_trace, ones);
  const Eigen::MatrixXd dq_da = critic_grads.input.bottomRows(actions.rows());

  Eigen::MatrixXd dlogits(actions.rows(), n);
  for (Eigen::Index i = 0; i < n; ++i)
    dlogits.col(i) = nn::softmax_backward(actions.col(i), dq_da.col(i));
  *grads = nn::backward_from_trace(actor, z, actor_trace, dlogits);
  return j;
}

Eigen::VectorXd critic_targets(const Agent& agent, const EmbeddedBatch& batch,
                               Rng& rng) {
  const Eigen::Index n = batch.size();
  const Config& cfg = agent.config;

  Eigen::MatrixXd logits = nn::forward_batch(agent.target_actor, batch.z_next);
  for (Eigen::Index c = 0; c < n; ++c)
    for (Eigen::Index r = 0; r < logits.rows(); ++r)
      logits(r, c) += std::clamp(cfg.smooth_sigma * rng.normal(),
                                 -cfg.noise_clip, cfg.noise_clip);
  const Eigen::MatrixXd atilde = project_columns(logits);

  const Eigen::MatrixXd input = stack_za(batch.z_next, atilde);
  const Eigen::VectorXd q1 =
      nn::forward_batch(agent.target_critic1, input).transpose();
  const Eigen::VectorXd q2 =
      nn::forward_batch(agent.target_critic2, input).transpose();
  const Eigen::VectorXd y = batch.r + cfg.gamma * q1.cwiseMin(q2);
  if (!y.allFinite()) throw NumericError("td3: non-finite critic target");
  return y;
}

double critic_update(Agent& agent, const EmbeddedBatch& batch,
                     const Eigen::VectorXd& y) {
  nn::GradientBundle g1, g2;
  const double l1 = critic_loss_grad(agent.critic1, batch.z, batch.a, y, &g1);
  const double l2 = critic_loss_grad(agent.critic2, batch.z, batch.a, y, &g2);
  nn::optimizer_step(agent.critic1_opt, agent.critic1, g1);
  nn::optimizer_step(agent.critic2_opt, agent.critic2, g2);
  return 0.5 * (l1 + l2);
}

double actor_update(Agent& agent, const EmbeddedBatch& batch) {
  nn::GradientBundle grads;
  const double j =
      actor_objective_grad(agent.actor, agent.critic1, batch.z, &grads);
  // Ascent on J: feed the negated gradient to the minimizing optimizer.
  for (auto& l : grads.layers) {
    l.weight = -l.weight;
    l.bias = -l.bias;
  }
  nn::optimizer_step(agent.actor_opt, agent.actor, grads);
  return -j;
}

void soft_update(nn::DenseNet& target, const nn::DenseNet& source,
                 double tau) {
  if (target.layers.size() != source.layers.size())
    throw ShapeError("soft_update: layer count mismatch");
  for (std::size_t i = 0; i < target.layers.size(); ++i) {
    target.layers[i].weight =
        tau * source.layers[i].weight + (1.0 - tau) * target.layers[i].weight;
    target.layers[i].bias =
        tau * source.layers[i].bias + (1.0 - tau) * target.layers[i].bias;
  }
}

UpdateLog update(Agent& agent, const EmbeddedBatch& batch, Rng& rng) {
  UpdateLog log;
  const Eigen::VectorXd y = critic_targets(agent, batch, rng);
  log.td_loss = critic_update(agent, batch, y);
  ++agent.update_count;
  if (agent.update_count % agent.config.policy_delay == 0) {
    log.actor_loss = actor_update(agent, batch);
    log.actor_updated = true;
    soft_update(agent.target_critic1, agent.critic1, agent.config.tau);
    soft_update(agent.target_critic2, agent.critic2, agent.config.tau);
    soft_update(agent.target_actor, agent.actor, agent.config.tau);
  }
  return log;
}

TrainResult train_loop(env::MarketEnv& env, const EmbedFn& embed,
                       ReplayBuffer& buffer, Agent& agent, long steps,
                       Rng& rng, const TrainHooks& hooks, int log_every) {
  TrainResult result;
  std::deque<env::TransitionTuple> recent;
  env.reset();

  double last_td = 0.0, last_actor = 0.0;
  for (long step = 1; step <= steps; ++step) {
    if (env.done()) env.reset();

    const Eigen::VectorXd z = embed(env::flatten(env.state()));
    const env::PortfolioAction action =
        select_action(agent.actor, z, agent.config.explore_sigma, rng);
    const auto sr = env.step_action(action);
    if (sr.bankrupt) {
      env.reset();
      continue;
    }
    buffer.push(sr.transition);
    result.visited.push_back(sr.transition);
    if (hooks.refresh_every > 0) {
      recent.push_back(sr.transition);
      while (static_cast<int>(recent.size()) > hooks.refresh_every)
        recent.pop_front();
    }

    if (static_cast<int>(buffer.size()) >=
        std::max(agent.config.batch_size, agent.config.warmup_steps)) {
      const auto idx = buffer.sample_indices(agent.config.batch_size, rng);
      EmbeddedBatch batch;
      const auto n = static_cast<Eigen::Index>(idx.size());
      batch.z.resize(agent.dim_z(), n);
      batch.z_next.resize(agent.dim_z(), n);
      batch.a.resize(agent.dim_a(), n);
      batch.r.resize(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& t = buffer.at(idx[static_cast<std::size_t>(i)]);
        batch.z.col(i) = embed(t.state);
        batch.z_next.col(i) = embed(t.next_state);
        batch.a.col(i) = t.action;
        batch.r[i] = t.reward;
      }
      const UpdateLog ul = update(agent, batch, rng);
      last_td = ul.td_loss;
      if (ul.actor_updated) last_actor = ul.actor_loss;
    }

    if (hooks.refresh_every > 0 && hooks.encoder_refresh &&
        step % hooks.refresh_every == 0) {
      hooks.encoder_refresh(
          std::vector<env::TransitionTuple>(recent.begin(), recent.end()));
    }

    if (log_every > 0 && step % log_every == 0) {
      result.log.push_back({step, sr.transition.reward, last_td, last_actor,
                            buffer.size()});
    }
  }
  result.steps = steps;
  return result;
}

}  // namespace derl::td3
