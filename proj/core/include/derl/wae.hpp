#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "derl/market.hpp"
#include "derl/nn.hpp"
#include "derl/rng.hpp"

namespace derl::wae {

// Inverse multiquadratic kernel k(x,y) = scale^2 / (scale^2 + |x-y|^2).
struct KernelSpec {
  double scale = 1.0;
};

double imq_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                  const KernelSpec& kernel);

// Plug-in estimator over two equally sized draws (rows = samples):
//   1/(n(n-1)) sum_{l != j} [k(a_l,a_j) + k(b_l,b_j)]
//   - 2/n^2    sum_{l,j} k(a_l,b_j)
// Symmetric in its arguments; may be slightly negative. Throws on n < 2.
double mmd(const Eigen::MatrixXd& sample_a, const Eigen::MatrixXd& sample_b,
           const KernelSpec& kernel);

// Encoder head produces (mu, log-variance) of a diagonal Gaussian; the
// log-variance is clamped to [-10, 10]. The decoder is a deterministic mean
// map on [z; a].
struct Autoencoder {
  nn::DenseNet encoder;  // dim_s -> 2 * dim_z
  nn::DenseNet decoder;  // dim_z + dim_a -> dim_s

  Eigen::Index dim_s() const { return encoder.input_size(); }
  Eigen::Index dim_z() const { return encoder.output_size() / 2; }
  Eigen::Index dim_a() const { return decoder.input_size() - dim_z(); }
  void validate() const;
};

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

Autoencoder make_autoencoder(int dim_s, int dim_a, int dim_z,
                             const std::vector<int>& hidden,
                             std::uint64_t seed, double init_std = 1e-3);

// Column-stacked transition batch.
struct Batch {
  Eigen::MatrixXd states;       // dim_s x n
  Eigen::MatrixXd actions;      // dim_a x n
  Eigen::MatrixXd next_states;  // dim_s x n

  Eigen::Index size() const { return states.cols(); }
};

Batch batch_from_transitions(const std::vector<env::TransitionTuple>& ts);
Batch batch_from_transitions(const std::vector<env::TransitionTuple>& ts,
                             const std::vector<std::size_t>& indices);

// Inference-mode embedding: the encoder mean.
Eigen::VectorXd encode_mean(const Autoencoder& ae, const Eigen::VectorXd& s);
Eigen::MatrixXd encode_mean_batch(const Autoencoder& ae,
                                  const Eigen::MatrixXd& states);

// Training-mode embedding: z = mu + sigma .* eps, eps ~ N(0, I).
Eigen::VectorXd encode_sample(const Autoencoder& ae, const Eigen::VectorXd& s,
                              Rng& rng);

Eigen::VectorXd decode(const Autoencoder& ae, const Eigen::VectorXd& z,
                       const Eigen::VectorXd& a);

// Noise frozen ahead of a loss evaluation so gradients can be checked by
// finite differences on identical draws.
struct Draws {
  Eigen::MatrixXd eps;    // dim_z x n, reparameterization noise
  Eigen::MatrixXd prior;  // dim_z x n, draws from the standard Gaussian prior
};

Draws make_draws(Eigen::Index dim_z, Eigen::Index n, Rng& rng);

struct LossParts {
  double total = 0.0;
  double recon = 0.0;
  double mmd = 0.0;
};

struct Gradients {
  nn::GradientBundle encoder;
  nn::GradientBundle decoder;
};

// loss = 1/n sum_i |s'_i - decode(ztilde_i, a_i)|^2
//        + lambda * mmd(prior draws, encoder draws).
// Exact reverse-mode gradients (reparameterized through the encoder) are
// written to *grads when non-null.
LossParts wae_loss(const Autoencoder& ae, const Batch& batch, double lambda,
                   const KernelSpec& kernel, const Draws& draws,
                   Gradients* grads = nullptr);

// One optimizer step on fresh draws; returns the pre-step loss.
LossParts wae_train_step(Autoencoder& ae, const Batch& batch, double lambda,
                         const KernelSpec& kernel,
                         nn::OptimizerState& encoder_opt,
                         nn::OptimizerState& decoder_opt, Rng& rng);

struct VaeLossParts {
  double total = 0.0;
  double recon = 0.0;
  double kl = 0.0;
};

// Optional variant: reconstruction plus the analytic Gaussian KL
// 0.5 sum_j (mu_j^2 + sigma_j^2 - 1 - log sigma_j^2).
VaeLossParts vae_loss(const Autoencoder& ae, const Batch& batch,
                      const Draws& draws, Gradients* grads = nullptr);

// Deterministic reconstruction error using mean encodings; used for
// monitoring and for before/after comparisons without consuming rng.
double eval_recon_mse(const Autoencoder& ae, const Batch& batch);

}  // namespace derl::wae
