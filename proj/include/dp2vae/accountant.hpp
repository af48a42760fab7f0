#pragma once

#include <cstdint>
#include <vector>

namespace dp2vae {

/// Renyi-DP epsilon at a grid of orders alpha > 1.
struct RdpCurve {
  std::vector<double> orders;
  std::vector<double> eps;

  /// Throws if orders are not > 1 and sorted, eps negative, or lengths differ.
  void validate() const;
  /// eps(alpha) = value at every order.
  static RdpCurve constant(const std::vector<double>& orders, double value);
};

/// Integer orders 2..256.
std::vector<double> default_orders();

struct PrivacyParams {
  double clip_bound = 1.0;        // C
  double noise_multiplier = 8.0;  // sigma; noise std is sigma * C
  double delta = 1e-5;

  void validate() const;
};

struct PrivacySpend {
  std::int64_t steps = 0;
  double epsilon = 0;
  double delta = 0;
  double best_order = 0;
};

/// (alpha, alpha * sensitivity^2 / (2 sigma^2)) for a Gaussian mechanism with noise std sigma.
double gaussian_rdp(double alpha, double sigma_noise, double sensitivity);

/// One Stage-2 decoder update: the clipped average gradient has sensitivity 2C
/// and noise std sigma*C, giving 2 alpha / sigma^2.
double decoder_step_rdp(double alpha, double sigma);

/// Binomial-expansion bound for the Gaussian mechanism (sensitivity 1, noise
/// multiplier z) subsampled at rate q, for integer alpha >= 2:
///   1/(alpha-1) * log sum_j C(alpha,j) (1-q)^(alpha-j) q^j exp(j(j-1)/(2 z^2)).
/// Evaluated with log-sum-exp.
double subsampled_gaussian_rdp(double alpha, double q, double z);

RdpCurve subsampled_gaussian_curve(const std::vector<double>& orders, double q, double z);
RdpCurve decoder_step_curve(const std::vector<double>& orders, double sigma);

/// Pointwise sum; all curves must share the order grid.
RdpCurve compose_rdp(const std::vector<RdpCurve>& curves);

/// `count` self-compositions, i.e. count * curve pointwise.
RdpCurve compose_repeated(const RdpCurve& curve, std::int64_t count);

struct DpConversion {
  double epsilon = 0;
  double best_order = 0;
};

/// min over the grid of eps(alpha) + log(1/delta) / (alpha - 1).
DpConversion rdp_to_dp(const RdpCurve& curve, double delta);

/// Privacy spend of T Stage-2 steps with K encoder subsets. Uses the
/// subsampled bound at rate q with effective noise multiplier sigma/2, and
/// falls back to the unamplified composition when that is tighter.
PrivacySpend eps_for_training(std::int64_t K, double sigma, std::int64_t T, double delta,
                              const std::vector<double>& orders = default_orders());

/// Same, with an explicit per-step sampling rate.
PrivacySpend eps_for_training_at_rate(double q, double sigma, std::int64_t T, double delta,
                                      const std::vector<double>& orders = default_orders());

}  // namespace dp2vae
