#include <doctest.h>

#include <filesystem>

#include "dp2vae/evaluation.hpp"
#include "test_util.hpp"

using namespace dp2vae;
using dp2vae::testing::random_matrix;
using dp2vae::testing::random_psd;

namespace {

RngStream test_rng(std::uint64_t seed) { return RngStream(seed, stream_id(StreamPurpose::kTest)); }

LabeledDataset mnist(const char* images, const char* labels) {
  const std::filesystem::path dir = DP2VAE_DATA_DIR;
  return load_idx_dataset(dir / images, dir / labels);
}

GaussianFit fit_from(const Vector& mu, const Matrix& sigma) { return GaussianFit{mu, sigma}; }

}  // namespace

TEST_CASE("features: raw map is the identity") {
  auto rng = test_rng(1);
  const Matrix x = dp2vae::testing::random_pixels(rng, 10, 5);
  const auto map = fit_features(x, FeatureKind::kRawPixels);
  CHECK(project(map, x) == x);
  CHECK(map.output_dim(10) == 10);
}

TEST_CASE("features: PCA recovers exact low-rank data") {
  auto rng = test_rng(2);
  const Matrix basis = random_matrix(rng, 12, 2);
  const Vector offset = random_matrix(rng, 12, 1);
  const Matrix x = (basis * random_matrix(rng, 2, 40)).colwise() + offset;
  const auto map = fit_features(x, FeatureKind::kPca, 2);
  const Matrix f = project(map, x);
  CHECK(f.rows() == 2);
  const Matrix back = (map.projection * f).colwise() + map.mean;
  CHECK((back - x).norm() <= 1e-9 * x.norm());
  CHECK_THROWS_AS(fit_features(x.leftCols(1), FeatureKind::kPca, 2), InvalidParameter);
  CHECK_THROWS_AS(project(map, Matrix(Matrix::Zero(5, 2))), ShapeError);
}

TEST_CASE("features: PCA directions on MNIST are orthonormal") {
  const auto train = mnist("train-images-idx3-ubyte", "train-labels-idx1-ubyte");
  const auto map = fit_features(train.images, FeatureKind::kPca, 64);
  CHECK(map.projection.rows() == 784);
  CHECK(map.projection.cols() == 64);
  const Matrix gram = map.projection.transpose() * map.projection;
  CHECK((gram - Matrix::Identity(64, 64)).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("gaussian_fit: closed-form cases and errors") {
  const Matrix constant = Matrix::Constant(3, 7, 0.25);
  const auto c = gaussian_fit(constant);
  CHECK(c.mu == Vector::Constant(3, 0.25));
  CHECK(c.sigma.isZero(0));

  Matrix two(1, 2);
  two << 0, 2;
  const auto t = gaussian_fit(two);
  CHECK(t.mu(0) == 1.0);
  CHECK(t.sigma(0, 0) == 2.0);

  CHECK_THROWS_AS(gaussian_fit(Matrix(Matrix::Zero(3, 1))), DataError);
}

TEST_CASE("gaussian_fit: moments of 1e5 draws") {
  auto rng = test_rng(3);
  Matrix l(3, 3);
  l << 1, 0, 0, 0.5, 0.8, 0, -0.3, 0.2, 0.6;
  const Matrix sigma0 = l * l.transpose();
  Vector mu0(3);
  mu0 << 1, -2, 0.5;
  const Matrix x = (l * random_matrix(rng, 3, 100000)).colwise() + mu0;
  const auto f = gaussian_fit(x);
  CHECK((f.mu - mu0).cwiseAbs().maxCoeff() <= 0.02);
  CHECK((f.sigma - sigma0).cwiseAbs().maxCoeff() <= 0.02);
  CHECK((f.sigma - f.sigma.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(sym_eig_psd(f.sigma).eigenvalues.minCoeff() >= 0);
}

TEST_CASE("frechet: identical, translated, dimension mismatch") {
  auto rng = test_rng(4);
  const Matrix s = random_psd(rng, 6);
  const Vector mu = random_matrix(rng, 6, 1);
  CHECK(frechet_distance(fit_from(mu, s), fit_from(mu, s)) < 1e-6);

  const Matrix one = Matrix::Ones(1, 1);
  CHECK(frechet_distance(fit_from(Vector::Zero(1), one), fit_from(Vector::Ones(1), one)) ==
        doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(frechet_distance(fit_from(Vector::Zero(2), Matrix::Identity(2, 2)),
                                   fit_from(Vector::Zero(3), Matrix::Identity(3, 3))),
                  ShapeError);
}

TEST_CASE("frechet: symmetric and nonnegative on random PSD pairs") {
  auto rng = test_rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.uniform_index(10));
    const auto a = fit_from(random_matrix(rng, d, 1), random_psd(rng, d));
    const auto b = fit_from(random_matrix(rng, d, 1), random_psd(rng, d));
    const double ab = frechet_distance(a, b), ba = frechet_distance(b, a);
    CHECK(std::abs(ab - ba) <= 1e-8);
    CHECK(ab >= 0.0);
  }
}

TEST_CASE("frechet: real features against themselves and against noise") {
  const auto train = mnist("train-images-idx3-ubyte", "train-labels-idx1-ubyte");
  const auto test = mnist("test-images-idx3-ubyte", "test-labels-idx1-ubyte");
  const auto map = fit_features(train.images, FeatureKind::kPca, 64);
  const auto real = gaussian_fit(project(map, test.images));
  CHECK(frechet_distance(real, real) < 1e-6);
  auto rng = test_rng(6);
  const auto noise = gaussian_fit(project(map, dp2vae::testing::random_pixels(rng, 784, 1000)));
  CHECK(frechet_distance(real, noise) > frechet_distance(real, gaussian_fit(project(map, train.images))));
}

TEST_CASE("logreg: separable toy data is fit exactly") {
  auto rng = test_rng(7);
  LabeledDataset d;
  d.rows = 2;
  d.cols = 1;
  d.images.resize(2, 60);
  for (int j = 0; j < 60; ++j) {
    const int y = j % 2;
    d.labels.push_back(y);
    d.images(0, j) = y ? 0.7 + 0.3 * rng.next_uniform() : 0.3 * rng.next_uniform();
    d.images(1, j) = rng.next_uniform();
  }
  const auto clf = train_classifier(ClassifierKind::kLogReg, d, 1);
  CHECK(evaluate_accuracy(clf, d).accuracy == 1.0);
  CHECK((clf.final_grad_norm < 1e-5 || clf.epochs_run == 500));
}

TEST_CASE("classifier: degenerate training sets") {
  LabeledDataset d;
  d.rows = 2;
  d.cols = 1;
  d.images = Matrix::Constant(2, 5, 0.5);
  d.labels.assign(5, 3);
  CHECK_THROWS_AS(train_classifier(ClassifierKind::kLogReg, d, 1), DataError);
  CHECK_THROWS_AS(train_classifier(ClassifierKind::kMlp, d, 1), DataError);
  LabeledDataset empty;
  empty.rows = 2;
  empty.cols = 1;
  empty.images.resize(2, 0);
  CHECK_THROWS_AS(train_classifier(ClassifierKind::kLogReg, empty, 1), DataError);
}

TEST_CASE("mlp: 500 real training samples beat 0.6 on the real test set") {
  const auto train = mnist("train-images-idx3-ubyte", "train-labels-idx1-ubyte").head(500);
  const auto test = mnist("test-images-idx3-ubyte", "test-labels-idx1-ubyte");
  const auto clf = train_classifier(ClassifierKind::kMlp, train, 11);
  const auto r = evaluate_accuracy(clf, test);
  MESSAGE("mlp accuracy on 500 real samples: " << r.accuracy);
  CHECK(r.accuracy > 0.6);
}

TEST_CASE("accuracy: oracle predictor, random predictor, per-class identity") {
  std::vector<int> labels;
  for (int i = 0; i < 10000; ++i) labels.push_back(i % 10);
  CHECK(accuracy_report(labels, labels, 10).accuracy == 1.0);

  auto rng = test_rng(8);
  std::vector<int> guesses;
  for (std::size_t i = 0; i < labels.size(); ++i) guesses.push_back(static_cast<int>(rng.uniform_index(10)));
  const auto r = accuracy_report(guesses, labels, 10);
  CHECK(std::abs(r.accuracy - 0.1) <= 0.01);

  double weighted = 0;
  for (std::size_t c = 0; c < 10; ++c) weighted += r.per_class_accuracy[c] * static_cast<double>(r.per_class_count[c]);
  CHECK(weighted / 10000 == doctest::Approx(r.accuracy).epsilon(1e-14));

  CHECK_THROWS_AS(accuracy_report(std::vector<int>{}, std::vector<int>{}, 10), DataError);
  CHECK_THROWS_AS(accuracy_report(std::vector<int>{1}, std::vector<int>{1, 2}, 10), ShapeError);
}

TEST_CASE("evaluate_over_runs: mean over exactly the given seeds") {
  const auto train = mnist("train-images-idx3-ubyte", "train-labels-idx1-ubyte").head(200);
  const auto test = mnist("test-images-idx3-ubyte", "test-labels-idx1-ubyte").head(500);
  ClassifierOptions opts;
  opts.mlp_epochs = 3;
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  const auto r = evaluate_over_runs(ClassifierKind::kMlp, train, test, seeds, opts);
  CHECK(r.runs == 5);
  REQUIRE(r.run_accuracies.size() == 5);
  double sum = 0;
  for (double a : r.run_accuracies) {
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
    sum += a;
  }
  CHECK(r.mean_accuracy == doctest::Approx(sum / 5));
  CHECK(r.train_provenance == Provenance::kReal);
  CHECK_THROWS_AS(evaluate_over_runs(ClassifierKind::kMlp, train, test, std::vector<std::uint64_t>{}, opts),
                  InvalidParameter);
}
