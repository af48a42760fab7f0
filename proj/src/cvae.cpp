#include "dp2vae/cvae.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dp2vae {

namespace {

constexpr double kPixelClip = 1e-7;
// exp(logvar) is evaluated on logvar clamped to this range.
constexpr double kLogvarLimit = 80.0;

std::vector<Eigen::Index> layer_dims(Eigen::Index in, const std::vector<Eigen::Index>& hidden,
                                     Eigen::Index out) {
  std::vector<Eigen::Index> dims{in};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  return dims;
}

std::vector<Activation> hidden_then(std::size_t hidden, Activation last) {
  std::vector<Activation> acts(hidden, Activation::kRelu);
  acts.push_back(last);
  return acts;
}

void validate_pixels(const Eigen::Ref<const Matrix>& x) {
  if (x.size() > 0 && !(x.minCoeff() >= 0.0 && x.maxCoeff() <= 1.0)) {
    throw InvalidParameter("pixel values must lie in [0, 1]");
  }
}

struct ForwardPass {
  ForwardResult<double> enc;
  ForwardResult<double> dec;
  Matrix mu, logvar, stddev;
  double recon = 0, kl = 0;
  Eigen::Index batch = 0;
};

ForwardPass run_forward(const CvaeParams& p, const Eigen::Ref<const Matrix>& x,
                        std::span<const int> labels, const Eigen::Ref<const Matrix>& noise) {
  const auto& s = p.shape;
  if (x.rows() != s.data_dim) throw ShapeError("elbo: data dimension mismatch");
  if (static_cast<std::size_t>(x.cols()) != labels.size()) throw ShapeError("elbo: one label per sample");
  if (noise.rows() != s.latent_dim || noise.cols() != x.cols()) throw ShapeError("elbo: noise shape mismatch");
  validate_pixels(x);

  ForwardPass f;
  f.batch = x.cols();
  f.enc = forward(p.encoder, append_onehot(x, labels, s.num_classes));
  f.mu = f.enc.output.topRows(s.latent_dim);
  f.logvar = f.enc.output.bottomRows(s.latent_dim);
  const Matrix clamped = f.logvar.cwiseMax(-kLogvarLimit).cwiseMin(kLogvarLimit);
  f.stddev = (0.5 * clamped.array()).exp().matrix();
  const Matrix z = f.mu + f.stddev.cwiseProduct(noise);
  f.dec = forward(p.decoder, append_onehot(z, labels, s.num_classes));

  const Matrix xhat = f.dec.output.cwiseMax(kPixelClip).cwiseMin(1.0 - kPixelClip);
  f.recon = (x.array() * xhat.array().log() + (1.0 - x.array()) * (1.0 - xhat.array()).log()).sum();
  f.kl = 0.5 * (f.mu.array().square() + clamped.array().exp() - 1.0 - f.logvar.array()).sum();
  return f;
}

}  // namespace

Net encoder_architecture(const CvaeShape& s) {
  return Net(layer_dims(s.data_dim + s.num_classes, s.encoder_hidden, 2 * s.latent_dim),
             hidden_then(s.encoder_hidden.size(), Activation::kIdentity));
}

Net decoder_architecture(const CvaeShape& s) {
  return Net(layer_dims(s.latent_dim + s.num_classes, s.decoder_hidden, s.data_dim),
             hidden_then(s.decoder_hidden.size(), Activation::kSigmoid));
}

Net make_encoder(const CvaeShape& s, RngStream& rng) {
  return glorot_uniform<double>(layer_dims(s.data_dim + s.num_classes, s.encoder_hidden, 2 * s.latent_dim),
                                hidden_then(s.encoder_hidden.size(), Activation::kIdentity), rng);
}

Net make_decoder(const CvaeShape& s, RngStream& rng) {
  return glorot_uniform<double>(layer_dims(s.latent_dim + s.num_classes, s.decoder_hidden, s.data_dim),
                                hidden_then(s.decoder_hidden.size(), Activation::kSigmoid), rng);
}

Matrix append_onehot(const Eigen::Ref<const Matrix>& top, std::span<const int> labels, int num_classes) {
  if (static_cast<std::size_t>(top.cols()) != labels.size()) {
    throw ShapeError("append_onehot: one label per column");
  }
  Matrix out = Matrix::Zero(top.rows() + num_classes, top.cols());
  out.topRows(top.rows()) = top;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    const int y = labels[j];
    if (y < 0 || y >= num_classes) {
      throw InvalidLabel("label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) + ")");
    }
    out(top.rows() + y, static_cast<Eigen::Index>(j)) = 1.0;
  }
  return out;
}

Posterior encode(const CvaeShape& s, const Net& encoder, const Eigen::Ref<const Vector>& x, int label) {
  if (x.size() != s.data_dim) throw ShapeError("encode: data dimension mismatch");
  validate_pixels(x);
  const int labels[] = {label};
  const auto r = forward(encoder, append_onehot(x, labels, s.num_classes));
  return Posterior{r.output.col(0).head(s.latent_dim), r.output.col(0).tail(s.latent_dim)};
}

Vector reparameterize(const Eigen::Ref<const Vector>& mu, const Eigen::Ref<const Vector>& logvar,
                      RngStream& rng) {
  if (mu.size() != logvar.size()) throw ShapeError("reparameterize: mu/logvar length mismatch");
  if (!mu.allFinite() || !logvar.allFinite()) throw NumericError("reparameterize: non-finite input");
  Vector z(mu.size());
  for (Eigen::Index j = 0; j < mu.size(); ++j) {
    const double lv = std::clamp(logvar(j), -kLogvarLimit, kLogvarLimit);
    z(j) = mu(j) + std::exp(0.5 * lv) * rng.next_gaussian();
  }
  return z;
}

double negative_elbo(const CvaeParams& params, const Eigen::Ref<const Matrix>& x,
                     std::span<const int> labels, const Eigen::Ref<const Matrix>& noise) {
  const auto f = run_forward(params, x, labels, noise);
  return (f.kl - f.recon) / static_cast<double>(f.batch);
}

ElboGradients elbo_and_grads(const CvaeParams& params, const Eigen::Ref<const Matrix>& x,
                             std::span<const int> labels, const Eigen::Ref<const Matrix>& noise) {
  const auto& s = params.shape;
  auto f = run_forward(params, x, labels, noise);
  const double inv_b = 1.0 / static_cast<double>(f.batch);

  // d(loss)/d(xhat). Clipped pixels have zero derivative.
  const Matrix& xhat = f.dec.output;
  Matrix dxhat(xhat.rows(), xhat.cols());
  for (Eigen::Index j = 0; j < xhat.cols(); ++j) {
    for (Eigen::Index i = 0; i < xhat.rows(); ++i) {
      const double c = xhat(i, j);
      dxhat(i, j) = (c > kPixelClip && c < 1.0 - kPixelClip) ? inv_b * (c - x(i, j)) / (c * (1.0 - c)) : 0.0;
    }
  }
  auto dec_back = backward(params.decoder, f.dec.tape, dxhat);
  const Matrix dz = dec_back.input_grad.topRows(s.latent_dim);

  Matrix dout(2 * s.latent_dim, f.batch);
  dout.topRows(s.latent_dim) = dz + inv_b * f.mu;
  auto dlogvar = dout.bottomRows(s.latent_dim);
  for (Eigen::Index j = 0; j < f.batch; ++j) {
    for (Eigen::Index i = 0; i < s.latent_dim; ++i) {
      const bool inside = std::abs(f.logvar(i, j)) < kLogvarLimit;
      const double sd = f.stddev(i, j);
      dlogvar(i, j) = inside ? dz(i, j) * noise(i, j) * 0.5 * sd + inv_b * 0.5 * (sd * sd - 1.0)
                             : -inv_b * 0.5;
    }
  }
  auto enc_back = backward(params.encoder, f.enc.tape, dout);

  ElboGradients out;
  out.terms.recon = f.recon * inv_b;
  out.terms.kl = f.kl * inv_b;
  out.terms.elbo = out.terms.recon - out.terms.kl;
  out.grad_encoder = std::move(enc_back.param_grad);
  out.grad_decoder = std::move(dec_back.param_grad);
  if (!out.grad_encoder.allFinite() || !out.grad_decoder.allFinite() || !std::isfinite(out.terms.elbo)) {
    throw NumericError("elbo_and_grads: non-finite loss or gradient");
  }
  return out;
}

ElboGradients elbo_and_grads(const CvaeParams& params, const Eigen::Ref<const Matrix>& x,
                             std::span<const int> labels, RngStream& rng) {
  Matrix noise(params.shape.latent_dim, x.cols());
  for (Eigen::Index j = 0; j < noise.cols(); ++j)
    for (Eigen::Index i = 0; i < noise.rows(); ++i) noise(i, j) = rng.next_gaussian();
  return elbo_and_grads(params, x, labels, noise);
}

ElboGradients elbo_and_grads(const CvaeParams& params, const Eigen::Ref<const Vector>& x, int label,
                             RngStream& rng) {
  const int labels[] = {label};
  return elbo_and_grads(params, Eigen::Ref<const Matrix>(x), std::span<const int>(labels), rng);
}

Matrix generate(const CvaeShape& s, const Net& decoder, std::span<const int> labels, RngStream& rng) {
  if (decoder.input_dim() != s.latent_dim + s.num_classes || decoder.output_dim() != s.data_dim) {
    throw ShapeError("generate: decoder does not match the CVAE shape");
  }
  if (labels.empty()) return Matrix(s.data_dim, 0);
  Matrix z(s.latent_dim, static_cast<Eigen::Index>(labels.size()));
  for (Eigen::Index j = 0; j < z.cols(); ++j)
    for (Eigen::Index i = 0; i < z.rows(); ++i) z(i, j) = rng.next_gaussian();
  return forward(decoder, append_onehot(z, labels, s.num_classes)).output;
}

}  // namespace dp2vae
