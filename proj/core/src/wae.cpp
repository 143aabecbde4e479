#include "derl/wae.hpp"

#include <cmath>

#include "derl/errors.hpp"

namespace derl::wae {

namespace {

double imq_cols(const Eigen::Ref<const Eigen::VectorXd>& x,
                const Eigen::Ref<const Eigen::VectorXd>& y, double c2) {
  return c2 / (c2 + (x - y).squaredNorm());
}

// MMD over column-stacked samples plus the gradient w.r.t. the columns of b.
double mmd_cols(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double c2,
                Eigen::MatrixXd* grad_b) {
  const Eigen::Index n = a.cols();
  if (n < 2 || b.cols() != n)
    throw ShapeError("mmd: need two equally sized batches with n >= 2");
  if (a.rows() != b.rows()) throw ShapeError("mmd: dimension mismatch");

  const double inv_pair = 1.0 / static_cast<double>(n * (n - 1));
  const double inv_cross = 2.0 / static_cast<double>(n * n);

  if (grad_b) grad_b->setZero(b.rows(), n);

  double within = 0.0;
  for (Eigen::Index l = 0; l < n; ++l) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (l == j) continue;
      within += imq_cols(a.col(l), a.col(j), c2);
      const Eigen::VectorXd diff = b.col(l) - b.col(j);
      const double denom = c2 + diff.squaredNorm();
      within += c2 / denom;
      if (grad_b) {
        // d k(b_l, b_j) / d b_l = -2 c2 (b_l - b_j) / denom^2; the (j, l)
        // pair contributes the mirrored term, handled when l and j swap.
        grad_b->col(l) -= inv_pair * 2.0 * c2 / (denom * denom) * diff;
        grad_b->col(j) += inv_pair * 2.0 * c2 / (denom * denom) * diff;
      }
    }
  }

  double cross = 0.0;
  for (Eigen::Index l = 0; l < n; ++l) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const Eigen::VectorXd diff = a.col(l) - b.col(j);
      const double denom = c2 + diff.squaredNorm();
      cross += c2 / denom;
      if (grad_b)
        grad_b->col(j) -= inv_cross * 2.0 * c2 / (denom * denom) * diff;
    }
  }
  return inv_pair * within - inv_cross * cross;
}

struct EncoderHead {
  Eigen::MatrixXd mu;        // dz x n
  Eigen::MatrixXd logvar;    // clamped
  Eigen::MatrixXd sigma;
  Eigen::MatrixXd clamp_on;  // 1 where the raw logvar is inside the clamp
};

EncoderHead split_head(const Eigen::MatrixXd& enc_out, Eigen::Index dz) {
  EncoderHead h;
  h.mu = enc_out.topRows(dz);
  const Eigen::MatrixXd raw = enc_out.bottomRows(dz);
  h.clamp_on = ((raw.array() > kLogVarMin).cast<double>() *
                (raw.array() < kLogVarMax).cast<double>())
                   .matrix();
  h.logvar = raw.array().min(kLogVarMax).max(kLogVarMin).matrix();
  h.sigma = (0.5 * h.logvar.array()).exp().matrix();
  return h;
}

}  // namespace

double imq_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                  const KernelSpec& kernel) {
  const double c2 = kernel.scale * kernel.scale;
  return c2 / (c2 + (x - y).squaredNorm());
}

double mmd(const Eigen::MatrixXd& sample_a, const Eigen::MatrixXd& sample_b,
           const KernelSpec& kernel) {
  return mmd_cols(sample_a.transpose(), sample_b.transpose(),
                  kernel.scale * kernel.scale, nullptr);
}

void Autoencoder::validate() const {
  encoder.validate();
  decoder.validate();
  if (encoder.output_size() % 2 != 0)
    throw ShapeError("encoder output must be even (mu, logvar)");
  if (decoder.input_size() <= dim_z())
    throw ShapeError("decoder input must be dim_z + dim_a");
  if (decoder.output_size() != dim_s())
    throw ShapeError("decoder output must match dim_s");
}

Autoencoder make_autoencoder(int dim_s, int dim_a, int dim_z,
                             const std::vector<int>& hidden,
                             std::uint64_t seed, double init_std) {
  std::vector<int> enc_sizes{dim_s};
  enc_sizes.insert(enc_sizes.end(), hidden.begin(), hidden.end());
  enc_sizes.push_back(2 * dim_z);
  std::vector<int> dec_sizes{dim_z + dim_a};
  dec_sizes.insert(dec_sizes.end(), hidden.begin(), hidden.end());
  dec_sizes.push_back(dim_s);
  Autoencoder ae;
  ae.encoder = nn::init_mlp(enc_sizes, seed, init_std);
  ae.decoder = nn::init_mlp(dec_sizes, seed + 1, init_std);
  ae.validate();
  return ae;
}

Batch batch_from_transitions(const std::vector<env::TransitionTuple>& ts) {
  std::vector<std::size_t> idx(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) idx[i] = i;
  return batch_from_transitions(ts, idx);
}

Batch batch_from_transitions(const std::vector<env::TransitionTuple>& ts,
                             const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw ShapeError("empty transition batch");
  const auto n = static_cast<Eigen::Index>(indices.size());
  const auto& first = ts[indices[0]];
  Batch b;
  b.states.resize(first.state.size(), n);
  b.actions.resize(first.action.size(), n);
  b.next_states.resize(first.next_state.size(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& t = ts[indices[static_cast<std::size_t>(i)]];
    b.states.col(i) = t.state;
    b.actions.col(i) = t.action;
    b.next_states.col(i) = t.next_state;
  }
  return b;
}

Eigen::MatrixXd encode_mean_batch(const Autoencoder& ae,
                                  const Eigen::MatrixXd& states) {
  return nn::forward_batch(ae.encoder, states).topRows(ae.dim_z());
}

Eigen::VectorXd encode_mean(const Autoencoder& ae, const Eigen::VectorXd& s) {
  return encode_mean_batch(ae, s).col(0);
}

Eigen::VectorXd encode_sample(const Autoencoder& ae, const Eigen::VectorXd& s,
                              Rng& rng) {
  const Eigen::Index dz = ae.dim_z();
  EncoderHead h = split_head(nn::forward_batch(ae.encoder, s), dz);
  return h.mu.col(0) +
         h.sigma.col(0).cwiseProduct(rng.normal_vector(dz));
}

Eigen::VectorXd decode(const Autoencoder& ae, const Eigen::VectorXd& z,
                       const Eigen::VectorXd& a) {
  Eigen::VectorXd u(z.size() + a.size());
  u << z, a;
  return nn::forward(ae.decoder, u);
}

Draws make_draws(Eigen::Index dim_z, Eigen::Index n, Rng& rng) {
  Draws d;
  d.eps = rng.normal_matrix(dim_z, n);
  d.prior = rng.normal_matrix(dim_z, n);
  return d;
}

LossParts wae_loss(const Autoencoder& ae, const Batch& batch, double lambda,
                   const KernelSpec& kernel, const Draws& draws,
                   Gradients* grads) {
  const Eigen::Index n = batch.size();
  if (n < 2) throw ShapeError("wae_loss: batch size must be >= 2");
  const Eigen::Index dz = ae.dim_z();

  const nn::ForwardTrace enc_trace = nn::forward_trace(ae.encoder, batch.states);
  EncoderHead head = split_head(enc_trace.output(), dz);
  const Eigen::MatrixXd ztilde = head.mu + head.sigma.cwiseProduct(draws.eps);

  Eigen::MatrixXd dec_in(dz + batch.actions.rows(), n);
  dec_in.topRows(dz) = ztilde;
  dec_in.bottomRows(batch.actions.rows()) = batch.actions;
  const nn::ForwardTrace dec_trace = nn::forward_trace(ae.decoder, dec_in);
  const Eigen::MatrixXd err = dec_trace.output() - batch.next_states;

  LossParts parts;
  parts.recon = err.squaredNorm() / static_cast<double>(n);

  const double c2 = kernel.scale * kernel.scale;
  Eigen::MatrixXd mmd_grad;
  parts.mmd = mmd_cols(draws.prior, ztilde, c2, grads ? &mmd_grad : nullptr);
  parts.total = parts.recon + lambda * parts.mmd;
  if (!std::isfinite(parts.total))
    throw NumericError("wae_loss: non-finite loss");
  if (!grads) return parts;

  const Eigen::MatrixXd d_shat = (2.0 / static_cast<double>(n)) * err;
  grads->decoder =
      nn::backward_from_trace(ae.decoder, dec_in, dec_trace, d_shat);

  Eigen::MatrixXd d_ztilde =
      grads->decoder.input.topRows(dz) + lambda * mmd_grad;
  Eigen::MatrixXd upstream(2 * dz, n);
  upstream.topRows(dz) = d_ztilde;
  upstream.bottomRows(dz) = d_ztilde.cwiseProduct(draws.eps)
                                .cwiseProduct(head.sigma)
                                .cwiseProduct(head.clamp_on) *
                            0.5;
  grads->encoder =
      nn::backward_from_trace(ae.encoder, batch.states, enc_trace, upstream);
  return parts;
}

LossParts wae_train_step(Autoencoder& ae, const Batch& batch, double lambda,
                         const KernelSpec& kernel,
                         nn::OptimizerState& encoder_opt,
                         nn::OptimizerState& decoder_opt, Rng& rng) {
  const Draws draws = make_draws(ae.dim_z(), batch.size(), rng);
  Gradients grads;
  const LossParts parts = wae_loss(ae, batch, lambda, kernel, draws, &grads);
  nn::optimizer_step(encoder_opt, ae.encoder, grads.encoder);
  nn::optimizer_step(decoder_opt, ae.decoder, grads.decoder);
  return parts;
}

VaeLossParts vae_loss(const Autoencoder& ae, const Batch& batch,
                      const Draws& draws, Gradients* grads) {
  const Eigen::Index n = batch.size();
  if (n < 1) throw ShapeError("vae_loss: empty batch");
  const Eigen::Index dz = ae.dim_z();

  const nn::ForwardTrace enc_trace = nn::forward_trace(ae.encoder, batch.states);
  EncoderHead head = split_head(enc_trace.output(), dz);
  const Eigen::MatrixXd ztilde = head.mu + head.sigma.cwiseProduct(draws.eps);

  Eigen::MatrixXd dec_in(dz + batch.actions.rows(), n);
  dec_in.topRows(dz) = ztilde;
  dec_in.bottomRows(batch.actions.rows()) = batch.actions;
  const nn::ForwardTrace dec_trace = nn::forward_trace(ae.decoder, dec_in);
  const Eigen::MatrixXd err = dec_trace.output() - batch.next_states;

  VaeLossParts parts;
  parts.recon = err.squaredNorm() / static_cast<double>(n);
  // Mean analytic KL(N(mu, sigma^2) || N(0, I)) over the batch.
  const Eigen::ArrayXXd mu2 = head.mu.array().square();
  const Eigen::ArrayXXd var = head.sigma.array().square();
  parts.kl = 0.5 * (mu2 + var - 1.0 - head.logvar.array()).sum() /
             static_cast<double>(n);
  parts.total = parts.recon + parts.kl;
  if (!std::isfinite(parts.total))
    throw NumericError("vae_loss: non-finite loss");
  if (!grads) return parts;

  const Eigen::MatrixXd d_shat = (2.0 / static_cast<double>(n)) * err;
  grads->decoder =
      nn::backward_from_trace(ae.decoder, dec_in, dec_trace, d_shat);

  const double inv_n = 1.0 / static_cast<double>(n);
  const Eigen::MatrixXd d_ztilde = grads->decoder.input.topRows(dz);
  Eigen::MatrixXd upstream(2 * dz, n);
  // d total / d mu = d_ztilde + mu / n.
  upstream.topRows(dz) = d_ztilde + inv_n * head.mu;
  // d total / d logvar = 0.5 (d_ztilde .* eps .* sigma) + 0.5 (var - 1)/n,
  // gated by the clamp.
  upstream.bottomRows(dz) =
      (0.5 * d_ztilde.cwiseProduct(draws.eps).cwiseProduct(head.sigma) +
       (0.5 * inv_n) * (var - 1.0).matrix())
          .cwiseProduct(head.clamp_on);
  grads->encoder =
      nn::backward_from_trace(ae.encoder, batch.states, enc_trace, upstream);
  return parts;
}

double eval_recon_mse(const Autoencoder& ae, const Batch& batch) {
  const Eigen::Index n = batch.size();
  const Eigen::Index dz = ae.dim_z();
  const Eigen::MatrixXd z = encode_mean_batch(ae, batch.states);
  Eigen::MatrixXd dec_in(dz + batch.actions.rows(), n);
  dec_in.topRows(dz) = z;
  dec_in.bottomRows(batch.actions.rows()) = batch.actions;
  const Eigen::MatrixXd err =
      nn::forward_batch(ae.decoder, dec_in) - batch.next_states;
  return err.squaredNorm() / static_cast<double>(n);
}

}  // namespace derl::wae
