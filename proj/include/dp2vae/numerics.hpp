#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include "dp2vae/errors.hpp"

namespace dp2vae {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Counter-based pseudo-random stream.
///
/// Output i of stream (seed, stream_id) is a SplitMix64-style hash of the
/// counter, keyed on the seed and then re-keyed on the stream id, so any
/// number of streams can be derived from one experiment seed without
/// coordination. Gaussian draws use the Marsaglia polar transform and cache
/// the second variate; the cache is part of the state.
class RngStream {
 public:
  struct State {
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;
    std::uint64_t counter = 0;
    bool has_spare = false;
    double spare = 0.0;

    bool operator==(const State&) const = default;
  };

  RngStream(std::uint64_t seed, std::uint64_t stream_id);
  explicit RngStream(const State& state);

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1) with 53 bits of resolution.
  double next_uniform();
  double next_gaussian();
  /// Unbiased draw from {0, ..., n-1}; n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);

  State state() const;
  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t seed_key_;
  std::uint64_t stream_key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Stream ids are (purpose, index) pairs packed into 64 bits.
enum class StreamPurpose : std::uint32_t {
  kPartition = 1,
  kEncoderInit = 2,
  kStage1DecoderInit = 3,
  kStage1Sampler = 4,
  kStage2DecoderInit = 5,
  kStage2Loop = 6,
  kGenerate = 7,
  kAudit = 8,
  kClassifier = 9,
  kStage1Eval = 10,
  kTest = 0xffff,
};

constexpr std::uint64_t stream_id(StreamPurpose purpose, std::uint32_t index = 0) {
  return (static_cast<std::uint64_t>(purpose) << 32) | index;
}

/// n i.i.d. draws from N(mean, stddev^2).
Vector gaussian_sample(RngStream& rng, std::size_t n, double mean, double stddev);

/// Adds N(0, stddev^2) noise to every entry of `out` in order.
void add_gaussian_noise(RngStream& rng, std::span<double> out, double stddev);

template <typename Scalar>
struct SymEigDecomposition {
  /// Descending.
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> eigenvalues;
  /// Orthonormal columns; column i pairs with eigenvalues(i).
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> eigenvectors;

  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> reconstruct() const {
    return eigenvectors * eigenvalues.asDiagonal() * eigenvectors.transpose();
  }
};

namespace detail {

template <typename Derived>
void require_square_symmetric(const Eigen::MatrixBase<Derived>& m,
                              typename Derived::Scalar tol) {
  using Scalar = typename Derived::Scalar;
  if (m.rows() != m.cols()) {
    throw ShapeError("expected a square matrix, got " + std::to_string(m.rows()) +
                     "x" + std::to_string(m.cols()));
  }
  if (m.size() == 0) return;
  const Scalar scale = std::max<Scalar>(Scalar(1), m.cwiseAbs().maxCoeff());
  const Scalar sym_tol = tol > 0 ? tol : Scalar(1e-10) * scale;
  const Scalar asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (!(asym <= sym_tol)) {
    throw ShapeError("matrix is not symmetric: max |m - m^T| = " +
                     std::to_string(static_cast<double>(asym)));
  }
}

}  // namespace detail

/// Eigendecomposition of a symmetric positive semi-definite matrix.
///
/// `tol` bounds both the accepted asymmetry and the magnitude below which
/// eigenvalues are treated as zero. With tol <= 0 the asymmetry bound is
/// 1e-10 * max(1, max|m_ij|) and the clamp bound is 1e-10 * max|lambda|.
/// Eigenvalues below -tol are rejected with NotPsdError.
template <typename Derived>
SymEigDecomposition<typename Derived::Scalar> sym_eig_psd(
    const Eigen::MatrixBase<Derived>& m, typename Derived::Scalar tol = 0) {
  using Scalar = typename Derived::Scalar;
  using MatrixS = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  detail::require_square_symmetric(m, tol);

  const MatrixS sym = (m + m.transpose()) / Scalar(2);
  Eigen::SelfAdjointEigenSolver<MatrixS> solver(sym);
  if (solver.info() != Eigen::Success) {
    throw NumericError("symmetric eigensolver did not converge");
  }
  const Eigen::Index n = sym.rows();
  SymEigDecomposition<Scalar> out;
  // Eigen sorts ascending.
  out.eigenvalues = solver.eigenvalues().reverse();
  out.eigenvectors = solver.eigenvectors().rowwise().reverse();
  if (n == 0) return out;

  const Scalar largest = out.eigenvalues.cwiseAbs().maxCoeff();
  const Scalar clamp_tol = tol > 0 ? tol : Scalar(1e-10) * largest;
  for (Eigen::Index i = 0; i < n; ++i) {
    Scalar& lambda = out.eigenvalues(i);
    if (lambda < -clamp_tol) {
      throw NotPsdError("matrix is not positive semi-definite: eigenvalue " +
                        std::to_string(static_cast<double>(lambda)));
    }
    if (lambda < 0) lambda = 0;
  }
  return out;
}

/// Principal square root of a symmetric PSD matrix; the result is symmetric PSD.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> sqrtm_psd(
    const Eigen::MatrixBase<Derived>& m, typename Derived::Scalar tol = 0) {
  using Scalar = typename Derived::Scalar;
  using MatrixS = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const auto eig = sym_eig_psd(m, tol);
  const MatrixS root = eig.eigenvectors * eig.eigenvalues.cwiseSqrt().asDiagonal() *
                       eig.eigenvectors.transpose();
  return (root + root.transpose()) / Scalar(2);
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace dp2vae
