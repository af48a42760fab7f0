#include "dp2vae/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "dp2vae/training.hpp"

namespace dp2vae {

namespace {

// Column-wise softmax, stabilized by the column max.
Matrix softmax(const Matrix& logits) {
  Matrix p = logits;
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    auto col = p.col(j);
    col.array() -= col.maxCoeff();
    col = col.array().exp().matrix();
    col /= col.sum();
  }
  return p;
}

Matrix onehot(std::span<const int> labels, int num_classes) {
  Matrix y = Matrix::Zero(num_classes, static_cast<Eigen::Index>(labels.size()));
  for (std::size_t j = 0; j < labels.size(); ++j) y(labels[j], static_cast<Eigen::Index>(j)) = 1.0;
  return y;
}

void check_train_set(const LabeledDataset& train, int num_classes) {
  if (train.size() == 0) throw DataError("classifier: empty training set");
  train.validate(num_classes);
  std::set<int> classes(train.labels.begin(), train.labels.end());
  if (classes.size() < 2) throw DataError("classifier: degenerate training data (single class)");
}

// Largest eigenvalue of A A^T / n for A = [X; 1], by power iteration.
double design_curvature(const Matrix& x) {
  const double n = static_cast<double>(x.cols());
  Vector v = Vector::Constant(x.rows() + 1, 1.0 / std::sqrt(static_cast<double>(x.rows() + 1)));
  double lambda = 0;
  for (int it = 0; it < 100; ++it) {
    const Vector xv = x.transpose() * v.head(x.rows()) + Vector::Constant(x.cols(), v(x.rows()));
    Vector w(v.size());
    w.head(x.rows()) = x * xv / n;
    w(x.rows()) = xv.sum() / n;
    const double next = w.norm();
    if (next == 0) return 0;
    v = w / next;
    if (std::abs(next - lambda) <= 1e-10 * next) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return lambda;
}

Classifier train_logreg(const LabeledDataset& train, const ClassifierOptions& o) {
  Classifier c;
  c.kind = ClassifierKind::kLogReg;
  c.num_classes = o.num_classes;
  c.net = Net({train.dim(), o.num_classes}, {Activation::kIdentity});
  const double n = static_cast<double>(train.size());
  const double l2 = 1.0 / n;
  // Softmax cross-entropy Hessian is bounded by lambda_max(A A^T / n) / 2.
  const double step = 1.0 / (0.5 * design_curvature(train.images) + l2);
  const Matrix y = onehot(train.labels, o.num_classes);

  for (c.epochs_run = 0; c.epochs_run < o.logreg_max_epochs; ++c.epochs_run) {
    auto fwd = forward(c.net, train.images);
    const Matrix dlogits = (softmax(fwd.output) - y) / n;
    Vector grad = backward(c.net, fwd.tape, dlogits).param_grad;
    const auto& layer = c.net.layer(0);
    grad.head(layer.weight_count()) += l2 * c.net.params().head(layer.weight_count());
    c.final_grad_norm = grad.norm();
    if (c.final_grad_norm < o.logreg_grad_tol) break;
    c.net.mutable_params() -= step * grad;
  }
  return c;
}

Classifier train_mlp(const LabeledDataset& train, std::uint64_t seed, const ClassifierOptions& o) {
  RngStream rng(seed, stream_id(StreamPurpose::kClassifier));
  Classifier c;
  c.kind = ClassifierKind::kMlp;
  c.num_classes = o.num_classes;
  c.net = glorot_uniform<double>({train.dim(), o.mlp_hidden, o.num_classes},
                                 {Activation::kRelu, Activation::kIdentity}, rng);
  Adam adam = Adam::zeros(c.net.num_params());
  const auto n = static_cast<std::size_t>(train.size());
  std::vector<int> labels;
  for (c.epochs_run = 0; c.epochs_run < o.mlp_epochs; ++c.epochs_run) {
    const auto order = sample_without_replacement(rng, n, n);
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(o.mlp_batch)) {
      const std::size_t end = std::min(n, start + static_cast<std::size_t>(o.mlp_batch));
      const auto idx = std::span<const std::size_t>(order).subspan(start, end - start);
      const LabeledDataset batch = train.subset(idx);
      auto fwd = forward(c.net, batch.images);
      const Matrix dlogits = (softmax(fwd.output) - onehot(batch.labels, o.num_classes)) /
                             static_cast<double>(batch.size());
      const Vector grad = backward(c.net, fwd.tape, dlogits).param_grad;
      c.final_grad_norm = grad.norm();
      adam_update(c.net.mutable_params(), grad, adam, o.mlp_lr);
    }
  }
  return c;
}

}  // namespace

FeatureMap fit_features(const Eigen::Ref<const Matrix>& real_images, FeatureKind kind, Eigen::Index d_f) {
  FeatureMap map;
  map.kind = kind;
  if (kind == FeatureKind::kRawPixels) return map;
  if (d_f < 1 || d_f > real_images.rows()) throw InvalidParameter("fit_features: d_f out of range");
  if (real_images.cols() < d_f) {
    throw InvalidParameter("fit_features: need at least d_f = " + std::to_string(d_f) + " samples, got " +
                           std::to_string(real_images.cols()));
  }
  map.mean = real_images.rowwise().mean();
  const Matrix centered = real_images.colwise() - map.mean;
  const Matrix cov = centered * centered.transpose() / static_cast<double>(std::max<Eigen::Index>(1, real_images.cols() - 1));
  const auto eig = sym_eig_psd(cov);
  map.projection = eig.eigenvectors.leftCols(d_f);
  // Fix the sign of each direction so the largest-magnitude entry is positive.
  for (Eigen::Index j = 0; j < d_f; ++j) {
    Eigen::Index i;
    map.projection.col(j).cwiseAbs().maxCoeff(&i);
    if (map.projection(i, j) < 0) map.projection.col(j) *= -1.0;
  }
  return map;
}

Matrix project(const FeatureMap& map, const Eigen::Ref<const Matrix>& images) {
  if (map.kind == FeatureKind::kRawPixels) return images;
  if (images.rows() != map.mean.size()) throw ShapeError("project: image dimension does not match the feature map");
  return map.projection.transpose() * (images.colwise() - map.mean);
}

GaussianFit gaussian_fit(const Eigen::Ref<const Matrix>& features) {
  if (features.cols() < 2) throw DataError("gaussian_fit: insufficient data (need >= 2 samples)");
  GaussianFit fit;
  fit.mu = features.rowwise().mean();
  const Matrix centered = features.colwise() - fit.mu;
  Matrix s = centered * centered.transpose() / static_cast<double>(features.cols() - 1);
  s = (s + s.transpose()) / 2.0;
  const auto eig = sym_eig_psd(s);
  if (eig.eigenvalues.size() > 0 && eig.eigenvalues.minCoeff() <= 0.0) {
    const Matrix r = eig.reconstruct();
    s = (r + r.transpose()) / 2.0;
  }
  fit.sigma = std::move(s);
  return fit;
}

double frechet_distance(const GaussianFit& a, const GaussianFit& b) {
  const auto d = a.mu.size();
  if (b.mu.size() != d || a.sigma.rows() != d || a.sigma.cols() != d || b.sigma.rows() != d || b.sigma.cols() != d) {
    throw ShapeError("frechet_distance: dimension mismatch");
  }
  const Matrix root_a = sqrtm_psd(a.sigma);
  Matrix inner = root_a * b.sigma * root_a;
  inner = (inner + inner.transpose()) / 2.0;
  const double tr_covmean = sqrtm_psd(inner).trace();
  const double value = (a.mu - b.mu).squaredNorm() + a.sigma.trace() + b.sigma.trace() - 2.0 * tr_covmean;
  if (value < 0.0) {
    const double scale = 1.0 + a.sigma.trace() + b.sigma.trace();
    if (value < -1e-8 * scale) throw NumericError("frechet_distance: negative trace residue " + std::to_string(value));
    return 0.0;
  }
  return value;
}

std::string to_string(ClassifierKind kind) { return kind == ClassifierKind::kLogReg ? "logreg" : "mlp"; }

Classifier train_classifier(ClassifierKind kind, const LabeledDataset& train, std::uint64_t seed,
                            const ClassifierOptions& options) {
  check_train_set(train, options.num_classes);
  return kind == ClassifierKind::kLogReg ? train_logreg(train, options) : train_mlp(train, seed, options);
}

std::vector<int> predict(const Classifier& classifier, const Eigen::Ref<const Matrix>& images) {
  const Matrix logits = forward(classifier.net, images).output;
  std::vector<int> out(static_cast<std::size_t>(logits.cols()));
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    Eigen::Index best;
    logits.col(j).maxCoeff(&best);
    out[static_cast<std::size_t>(j)] = static_cast<int>(best);
  }
  return out;
}

ClassifierReport accuracy_report(std::span<const int> predictions, std::span<const int> labels, int num_classes) {
  if (labels.empty()) throw DataError("accuracy: empty test set");
  if (predictions.size() != labels.size()) throw ShapeError("accuracy: one prediction per label");
  ClassifierReport r;
  r.per_class_accuracy.assign(static_cast<std::size_t>(num_classes), 0.0);
  r.per_class_count.assign(static_cast<std::size_t>(num_classes), 0);
  std::vector<std::int64_t> correct(static_cast<std::size_t>(num_classes), 0);
  std::int64_t total_correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= num_classes) throw InvalidLabel("accuracy: label out of range");
    r.per_class_count[static_cast<std::size_t>(y)]++;
    if (predictions[i] == y) {
      correct[static_cast<std::size_t>(y)]++;
      total_correct++;
    }
  }
  for (std::size_t c = 0; c < correct.size(); ++c) {
    if (r.per_class_count[c] > 0) {
      r.per_class_accuracy[c] = static_cast<double>(correct[c]) / static_cast<double>(r.per_class_count[c]);
    }
  }
  r.accuracy = static_cast<double>(total_correct) / static_cast<double>(labels.size());
  r.run_accuracies = {r.accuracy};
  r.mean_accuracy = r.accuracy;
  return r;
}

ClassifierReport evaluate_accuracy(const Classifier& classifier, const LabeledDataset& real_test) {
  if (real_test.size() == 0) throw DataError("evaluate_accuracy: empty test set");
  const auto preds = predict(classifier, real_test.images);
  auto r = accuracy_report(preds, real_test.labels, classifier.num_classes);
  r.kind = classifier.kind;
  return r;
}

ClassifierReport evaluate_over_runs(ClassifierKind kind, const LabeledDataset& train, const LabeledDataset& real_test,
                                    std::span<const std::uint64_t> seeds, const ClassifierOptions& options) {
  if (seeds.empty()) throw InvalidParameter("evaluate_over_runs: need at least one seed");
  ClassifierReport mean;
  mean.kind = kind;
  mean.train_provenance = train.provenance;
  mean.runs = static_cast<int>(seeds.size());
  mean.per_class_accuracy.assign(static_cast<std::size_t>(options.num_classes), 0.0);
  for (auto seed : seeds) {
    const auto r = evaluate_accuracy(train_classifier(kind, train, seed, options), real_test);
    mean.run_accuracies.push_back(r.accuracy);
    for (std::size_t c = 0; c < mean.per_class_accuracy.size(); ++c) mean.per_class_accuracy[c] += r.per_class_accuracy[c];
    mean.per_class_count = r.per_class_count;
  }
  const double runs = static_cast<double>(seeds.size());
  for (double& a : mean.per_class_accuracy) a /= runs;
  mean.mean_accuracy = std::accumulate(mean.run_accuracies.begin(), mean.run_accuracies.end(), 0.0) / runs;
  mean.accuracy = mean.mean_accuracy;
  return mean;
}

}  // namespace dp2vae
