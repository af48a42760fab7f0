#pragma once

#include <span>
#include <utility>
#include <vector>

#include "dp2vae/nn.hpp"
#include "dp2vae/numerics.hpp"

namespace dp2vae {

/// Layer sizes of the conditional VAE. Defaults are the MNIST desk configuration.
struct CvaeShape {
  Eigen::Index data_dim = 784;
  int num_classes = 10;
  Eigen::Index latent_dim = 8;
  std::vector<Eigen::Index> encoder_hidden{256, 128};
  std::vector<Eigen::Index> decoder_hidden{128, 256};

  bool operator==(const CvaeShape&) const = default;
};

/// Encoder maps [x; onehot(y)] to [mu; logvar]; decoder maps [z; onehot(y)] to
/// sigmoid pixel means.
struct CvaeParams {
  CvaeShape shape;
  Net encoder;
  Net decoder;
};

Net make_encoder(const CvaeShape& shape, RngStream& rng);
Net make_decoder(const CvaeShape& shape, RngStream& rng);

/// Builds zero-parameter networks with the right architecture.
Net encoder_architecture(const CvaeShape& shape);
Net decoder_architecture(const CvaeShape& shape);

/// Stacks one-hot label rows under `top`; labels are validated.
Matrix append_onehot(const Eigen::Ref<const Matrix>& top, std::span<const int> labels, int num_classes);

struct Posterior {
  Vector mu;
  Vector logvar;
};

Posterior encode(const CvaeShape& shape, const Net& encoder, const Eigen::Ref<const Vector>& x, int label);

/// z = mu + exp(logvar / 2) * eps with eps ~ N(0, I) drawn from rng.
Vector reparameterize(const Eigen::Ref<const Vector>& mu, const Eigen::Ref<const Vector>& logvar,
                      RngStream& rng);

struct ElboTerms {
  double recon = 0;  // E_q[log p(x|z)], single-sample estimate
  double kl = 0;     // KL(q(z|x) || N(0, I))
  double elbo = 0;   // recon - kl
};

/// Terms and gradients of the loss -ELBO, averaged over the batch.
struct ElboGradients {
  ElboTerms terms;
  Vector grad_encoder;
  Vector grad_decoder;
};

/// Batched ELBO with caller-supplied reparameterization noise (latent_dim x B).
/// Columns of `x` are samples.
ElboGradients elbo_and_grads(const CvaeParams& params, const Eigen::Ref<const Matrix>& x,
                             std::span<const int> labels, const Eigen::Ref<const Matrix>& noise);

/// Draws the noise from rng, column by column.
ElboGradients elbo_and_grads(const CvaeParams& params, const Eigen::Ref<const Matrix>& x,
                             std::span<const int> labels, RngStream& rng);

/// Single example.
ElboGradients elbo_and_grads(const CvaeParams& params, const Eigen::Ref<const Vector>& x, int label,
                             RngStream& rng);

/// Loss value only; used by finite-difference checks.
double negative_elbo(const CvaeParams& params, const Eigen::Ref<const Matrix>& x,
                     std::span<const int> labels, const Eigen::Ref<const Matrix>& noise);

/// Samples z ~ N(0, I) per label and decodes. Only the decoder is an input:
/// this is the release boundary. Returns data_dim x labels.size().
Matrix generate(const CvaeShape& shape, const Net& decoder, std::span<const int> labels, RngStream& rng);

}  // namespace dp2vae
