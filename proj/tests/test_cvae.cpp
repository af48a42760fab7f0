#include <doctest.h>

#include "dp2vae/cvae.hpp"
#include "test_util.hpp"

using namespace dp2vae;
using dp2vae::testing::random_matrix;
using dp2vae::testing::random_pixels;
using dp2vae::testing::relative_error;

namespace {

RngStream test_rng(std::uint64_t seed) { return RngStream(seed, stream_id(StreamPurpose::kTest)); }

CvaeShape small_shape() {
  CvaeShape s;
  s.data_dim = 6;
  s.num_classes = 3;
  s.latent_dim = 2;
  s.encoder_hidden = {5, 4};
  s.decoder_hidden = {4, 5};
  return s;
}

CvaeParams random_params(const CvaeShape& shape, RngStream& rng) {
  return CvaeParams{shape, make_encoder(shape, rng), make_decoder(shape, rng)};
}

// Encoder with zero weights whose outputs are exactly the given bias.
Net constant_encoder(const CvaeShape& shape, double mu, double logvar) {
  Net enc = encoder_architecture(shape);
  const auto last = enc.num_layers() - 1;
  enc.mutable_bias(last).head(shape.latent_dim).setConstant(mu);
  enc.mutable_bias(last).tail(shape.latent_dim).setConstant(logvar);
  return enc;
}

}  // namespace

TEST_CASE("architecture of the MNIST configuration") {
  const CvaeShape shape;
  const Net enc = encoder_architecture(shape);
  const Net dec = decoder_architecture(shape);
  CHECK(enc.input_dim() == 794);
  CHECK(enc.output_dim() == 16);
  CHECK(dec.input_dim() == 18);
  CHECK(dec.output_dim() == 784);
  CHECK(enc.layer(2).activation == Activation::kIdentity);
  CHECK(dec.layer(2).activation == Activation::kSigmoid);
}

TEST_CASE("encode: deterministic, zero weights give the bias, label checked") {
  const auto shape = small_shape();
  auto rng = test_rng(1);
  const auto params = random_params(shape, rng);
  const Vector x = random_pixels(rng, shape.data_dim, 1);
  const auto a = encode(shape, params.encoder, x, 1);
  const auto b = encode(shape, params.encoder, x, 1);
  CHECK(a.mu == b.mu);
  CHECK(a.logvar == b.logvar);

  const auto p = encode(shape, constant_encoder(shape, 0.3, -1.5), x, 2);
  CHECK(p.mu == Vector::Constant(2, 0.3));
  CHECK(p.logvar == Vector::Constant(2, -1.5));

  CHECK_THROWS_AS(encode(shape, params.encoder, x, 3), InvalidLabel);
  CHECK_THROWS_AS(encode(shape, params.encoder, x, -1), InvalidLabel);
}

TEST_CASE("encode: mean responds linearly to a small pixel change") {
  const CvaeShape shape;
  auto rng = test_rng(2);
  const auto params = random_params(shape, rng);
  Vector x = random_pixels(rng, shape.data_dim, 1);
  const Vector mu0 = encode(shape, params.encoder, x, 4).mu;
  const double h = 1e-6;
  Vector xh = x;
  xh(100) += h;
  Vector x2h = x;
  x2h(100) += 2 * h;
  const double d1 = (encode(shape, params.encoder, xh, 4).mu - mu0).norm();
  const double d2 = (encode(shape, params.encoder, x2h, 4).mu - mu0).norm();
  // Local Lipschitz estimate from the h step bounds the 2h step.
  CHECK(d2 <= 2 * (d1 / h) * h * (1 + 1e-3) + 1e-12);
  CHECK(d1 < 1e-3);
}

TEST_CASE("reparameterize: vanishing noise, moments, determinism") {
  auto rng = test_rng(3);
  const Vector mu = Vector::LinSpaced(4, -1, 2);
  const Vector z = reparameterize(mu, Vector::Constant(4, -50.0), rng);
  CHECK((z - mu).cwiseAbs().maxCoeff() <= 1e-10);

  const int n = 100000;
  Vector sum = Vector::Zero(3), sq = Vector::Zero(3);
  for (int i = 0; i < n; ++i) {
    const Vector s = reparameterize(Vector::Zero(3), Vector::Zero(3), rng);
    sum += s;
    sq += s.cwiseAbs2();
  }
  const Vector mean = sum / n;
  const Vector var = (sq - n * mean.cwiseAbs2()) / (n - 1);
  for (Eigen::Index j = 0; j < 3; ++j) CHECK(std::abs(var(j) - 1.0) <= 0.02);

  auto r1 = test_rng(4), r2 = test_rng(4);
  CHECK(reparameterize(mu, Vector::Zero(4), r1) == reparameterize(mu, Vector::Zero(4), r2));
}

TEST_CASE("elbo: closed-form KL values") {
  const auto shape = small_shape();
  auto rng = test_rng(5);
  const Net dec = make_decoder(shape, rng);
  const Vector x = random_pixels(rng, shape.data_dim, 1);

  const auto prior = elbo_and_grads(CvaeParams{shape, constant_encoder(shape, 0.0, 0.0), dec}, x, 0, rng);
  CHECK(prior.terms.kl == doctest::Approx(0.0));

  const auto shifted = elbo_and_grads(CvaeParams{shape, constant_encoder(shape, 1.0, 0.0), dec}, x, 0, rng);
  CHECK(shifted.terms.kl == doctest::Approx(0.5 * static_cast<double>(shape.latent_dim)));
  CHECK(shifted.terms.elbo == doctest::Approx(shifted.terms.recon - shifted.terms.kl));
  CHECK(shifted.terms.elbo <= shifted.terms.recon);
}

TEST_CASE("elbo: KL is nonnegative and recon is a log-likelihood") {
  auto rng = test_rng(6);
  const CvaeShape shape;
  for (int trial = 0; trial < 10; ++trial) {
    const auto params = random_params(shape, rng);
    const Matrix x = random_pixels(rng, shape.data_dim, 4);
    const std::vector<int> y{0, 3, 7, 9};
    const auto r = elbo_and_grads(params, x, y, rng);
    CHECK(r.terms.kl >= 0.0);
    CHECK(r.terms.recon <= 0.0);
    CHECK(r.grad_encoder.size() == params.encoder.num_params());
    CHECK(r.grad_decoder.size() == params.decoder.num_params());
  }
}

TEST_CASE("elbo: gradients match central differences with frozen noise") {
  const auto shape = small_shape();
  auto rng = test_rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    auto params = random_params(shape, rng);
    // Zero biases can leave a ReLU input at exactly 0, where the loss has a kink.
    params.encoder.mutable_params() += 0.1 * random_matrix(rng, params.encoder.num_params(), 1);
    params.decoder.mutable_params() += 0.1 * random_matrix(rng, params.decoder.num_params(), 1);
    const Matrix x = random_pixels(rng, shape.data_dim, 3);
    const std::vector<int> y{0, 2, 1};
    const Matrix noise = random_matrix(rng, shape.latent_dim, 3);
    const auto g = elbo_and_grads(params, x, y, noise);
    CHECK(g.terms.elbo == doctest::Approx(-negative_elbo(params, x, y, noise)));

    const double h = 1e-5;
    double worst = 0;
    for (Eigen::Index i = 0; i < params.encoder.num_params(); ++i) {
      CvaeParams p = params;
      p.encoder.mutable_params()(i) += h;
      const double up = negative_elbo(p, x, y, noise);
      p.encoder.mutable_params()(i) -= 2 * h;
      const double down = negative_elbo(p, x, y, noise);
      worst = std::max(worst, relative_error(g.grad_encoder(i), (up - down) / (2 * h)));
    }
    for (Eigen::Index i = 0; i < params.decoder.num_params(); ++i) {
      CvaeParams p = params;
      p.decoder.mutable_params()(i) += h;
      const double up = negative_elbo(p, x, y, noise);
      p.decoder.mutable_params()(i) -= 2 * h;
      const double down = negative_elbo(p, x, y, noise);
      worst = std::max(worst, relative_error(g.grad_decoder(i), (up - down) / (2 * h)));
    }
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("elbo: batch gradient is the mean of single-example gradients") {
  const auto shape = small_shape();
  auto rng = test_rng(8);
  const auto params = random_params(shape, rng);
  const Matrix x = random_pixels(rng, shape.data_dim, 4);
  const std::vector<int> y{2, 0, 1, 1};
  const Matrix noise = random_matrix(rng, shape.latent_dim, 4);
  const auto batch = elbo_and_grads(params, x, y, noise);
  Vector sum_dec = Vector::Zero(params.decoder.num_params());
  for (int j = 0; j < 4; ++j) {
    const std::vector<int> yj{y[static_cast<std::size_t>(j)]};
    sum_dec += elbo_and_grads(params, x.col(j), yj, noise.col(j)).grad_decoder;
  }
  CHECK((batch.grad_decoder - sum_dec / 4).norm() <= 1e-12 * (1 + sum_dec.norm()));
}

TEST_CASE("elbo: invalid inputs") {
  const auto shape = small_shape();
  auto rng = test_rng(9);
  const auto params = random_params(shape, rng);
  Vector x = random_pixels(rng, shape.data_dim, 1);
  CHECK_THROWS_AS(elbo_and_grads(params, x, 5, rng), InvalidLabel);
  x(0) = 1.5;
  CHECK_THROWS_AS(elbo_and_grads(params, x, 0, rng), InvalidParameter);
  x(0) = std::nan("");
  CHECK_THROWS(elbo_and_grads(params, x, 0, rng));
}

TEST_CASE("generate: shape, range, determinism, empty input") {
  const CvaeShape shape;
  auto rng = test_rng(10);
  const Net dec = make_decoder(shape, rng);
  const std::vector<int> labels{0, 1, 2, 3, 4, 9, 9};
  auto r1 = test_rng(11), r2 = test_rng(11);
  const Matrix a = generate(shape, dec, labels, r1);
  const Matrix b = generate(shape, dec, labels, r2);
  CHECK(a == b);
  CHECK(a.rows() == 784);
  CHECK(a.cols() == 7);
  CHECK(all_finite(a));
  CHECK(a.minCoeff() > 0.0);
  CHECK(a.maxCoeff() < 1.0);
  CHECK(generate(shape, dec, std::vector<int>{}, r1).cols() == 0);
  CHECK_THROWS_AS(generate(shape, dec, std::vector<int>{10}, r1), InvalidLabel);
}
