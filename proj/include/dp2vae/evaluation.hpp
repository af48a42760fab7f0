#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dp2vae/data_io.hpp"
#include "dp2vae/nn.hpp"
#include "dp2vae/numerics.hpp"

namespace dp2vae {

enum class FeatureKind : std::uint8_t { kRawPixels, kPca };

/// Affine feature map x -> P^T (x - mean), fitted on real images only.
/// PCA features stand in for Inception activations, so Frechet distances
/// computed here are only comparable with each other.
struct FeatureMap {
  FeatureKind kind = FeatureKind::kRawPixels;
  Vector mean;        // empty for raw pixels
  Matrix projection;  // d_x x d_f, orthonormal columns; empty for raw pixels

  Eigen::Index output_dim(Eigen::Index input_dim) const {
    return kind == FeatureKind::kRawPixels ? input_dim : projection.cols();
  }
};

/// Columns of `real_images` are samples. For kPca, d_f principal directions.
FeatureMap fit_features(const Eigen::Ref<const Matrix>& real_images, FeatureKind kind, Eigen::Index d_f = 64);

/// Returns d_f x N features.
Matrix project(const FeatureMap& map, const Eigen::Ref<const Matrix>& images);

struct GaussianFit {
  Vector mu;
  Matrix sigma;
};

/// Mean and unbiased covariance of feature columns; needs >= 2 samples.
GaussianFit gaussian_fit(const Eigen::Ref<const Matrix>& features);

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a^{1/2} S_b S_a^{1/2})^{1/2}).
double frechet_distance(const GaussianFit& a, const GaussianFit& b);

enum class ClassifierKind : std::uint8_t { kLogReg, kMlp };

std::string to_string(ClassifierKind kind);

struct ClassifierOptions {
  int num_classes = 10;
  // logistic regression: full-batch gradient descent on mean cross-entropy
  // plus ||W||^2 / (2N); stops when the gradient norm drops below grad_tol.
  int logreg_max_epochs = 500;
  double logreg_grad_tol = 1e-5;
  // MLP: d -> 100 relu -> classes, Adam with default hyper-parameters.
  int mlp_hidden = 100;
  int mlp_epochs = 30;
  int mlp_batch = 64;
  double mlp_lr = 1e-3;
};

struct Classifier {
  ClassifierKind kind = ClassifierKind::kLogReg;
  int num_classes = 10;
  Net net;  // outputs logits
  int epochs_run = 0;
  double final_grad_norm = 0;
};

Classifier train_classifier(ClassifierKind kind, const LabeledDataset& train, std::uint64_t seed,
                            const ClassifierOptions& options = {});

std::vector<int> predict(const Classifier& classifier, const Eigen::Ref<const Matrix>& images);

struct ClassifierReport {
  ClassifierKind kind = ClassifierKind::kLogReg;
  Provenance train_provenance = Provenance::kSynthetic;
  double accuracy = 0;
  std::vector<double> per_class_accuracy;
  std::vector<std::int64_t> per_class_count;
  int runs = 1;
  std::vector<double> run_accuracies;
  double mean_accuracy = 0;
};

/// Overall and per-class accuracy of predictions against labels.
ClassifierReport accuracy_report(std::span<const int> predictions, std::span<const int> labels, int num_classes);

ClassifierReport evaluate_accuracy(const Classifier& classifier, const LabeledDataset& real_test);

/// Trains and tests once per seed; accuracy fields describe the mean.
ClassifierReport evaluate_over_runs(ClassifierKind kind, const LabeledDataset& train, const LabeledDataset& real_test,
                                    std::span<const std::uint64_t> seeds, const ClassifierOptions& options = {});

}  // namespace dp2vae
