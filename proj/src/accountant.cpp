#include "dp2vae/accountant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dp2vae/errors.hpp"

namespace dp2vae {

namespace {

void require_order(double alpha) {
  if (!(alpha > 1.0) || !std::isfinite(alpha)) {
    throw InvalidParameter("invalid Renyi order " + std::to_string(alpha) + " (need alpha > 1)");
  }
}

double log_binomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

}  // namespace

void RdpCurve::validate() const {
  if (orders.size() != eps.size()) throw InvalidParameter("RdpCurve: orders and eps lengths differ");
  for (std::size_t i = 0; i < orders.size(); ++i) {
    require_order(orders[i]);
    if (i > 0 && !(orders[i] > orders[i - 1])) throw InvalidParameter("RdpCurve: orders must increase");
    if (!(eps[i] >= 0.0)) throw InvalidParameter("RdpCurve: eps must be >= 0");
  }
}

RdpCurve RdpCurve::constant(const std::vector<double>& orders, double value) {
  return RdpCurve{orders, std::vector<double>(orders.size(), value)};
}

std::vector<double> default_orders() {
  std::vector<double> orders;
  for (int a = 2; a <= 256; ++a) orders.push_back(a);
  return orders;
}

void PrivacyParams::validate() const {
  if (!(clip_bound > 0.0) || !std::isfinite(clip_bound)) throw InvalidParameter("clip bound C must be > 0");
  if (!(noise_multiplier > 0.0) || !std::isfinite(noise_multiplier)) {
    throw InvalidParameter("noise multiplier sigma must be > 0");
  }
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidParameter("delta must lie in (0, 1)");
}

double gaussian_rdp(double alpha, double sigma_noise, double sensitivity) {
  require_order(alpha);
  if (!(sigma_noise > 0.0)) throw InvalidParameter("gaussian_rdp: noise std must be > 0");
  if (!(sensitivity >= 0.0)) throw InvalidParameter("gaussian_rdp: sensitivity must be >= 0");
  return alpha * sensitivity * sensitivity / (2.0 * sigma_noise * sigma_noise);
}

double decoder_step_rdp(double alpha, double sigma) {
  require_order(alpha);
  if (!(sigma > 0.0)) throw InvalidParameter("decoder_step_rdp: sigma must be > 0");
  return 2.0 * alpha / (sigma * sigma);
}

double subsampled_gaussian_rdp(double alpha, double q, double z) {
  require_order(alpha);
  if (alpha != std::floor(alpha) || alpha > 1e6) {
    throw InvalidParameter("unsupported Renyi order " + std::to_string(alpha) +
                           " (subsampled bound needs an integer order)");
  }
  if (!(q >= 0.0 && q <= 1.0)) throw InvalidParameter("sampling rate q must lie in [0, 1]");
  if (!(z > 0.0)) throw InvalidParameter("noise multiplier z must be > 0");
  if (q == 0.0) return 0.0;

  const int a = static_cast<int>(alpha);
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(a) + 1);
  for (int j = 0; j <= a; ++j) {
    if (q == 1.0 && j < a) continue;  // (1-q)^(a-j) = 0
    const double t = log_binomial(a, j) + (j == a ? 0.0 : (a - j) * log_1mq) + j * log_q +
                     static_cast<double>(j) * (j - 1) / (2.0 * z * z);
    terms.push_back(t);
  }
  const double top = *std::max_element(terms.begin(), terms.end());
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - top);
  const double log_moment = top + std::log(sum);
  return std::max(0.0, log_moment / (alpha - 1.0));
}

RdpCurve subsampled_gaussian_curve(const std::vector<double>& orders, double q, double z) {
  RdpCurve c{orders, {}};
  c.eps.reserve(orders.size());
  for (double a : orders) c.eps.push_back(subsampled_gaussian_rdp(a, q, z));
  return c;
}

RdpCurve decoder_step_curve(const std::vector<double>& orders, double sigma) {
  RdpCurve c{orders, {}};
  c.eps.reserve(orders.size());
  for (double a : orders) c.eps.push_back(decoder_step_rdp(a, sigma));
  return c;
}

RdpCurve compose_rdp(const std::vector<RdpCurve>& curves) {
  if (curves.empty()) throw InvalidParameter("compose_rdp: no curves");
  RdpCurve out = curves.front();
  out.validate();
  for (std::size_t i = 1; i < curves.size(); ++i) {
    if (curves[i].orders != out.orders) throw InvalidParameter("compose_rdp: order grids differ");
    curves[i].validate();
    for (std::size_t k = 0; k < out.eps.size(); ++k) out.eps[k] += curves[i].eps[k];
  }
  return out;
}

RdpCurve compose_repeated(const RdpCurve& curve, std::int64_t count) {
  if (count < 0) throw InvalidParameter("compose_repeated: count must be >= 0");
  curve.validate();
  RdpCurve out = curve;
  for (double& e : out.eps) e *= static_cast<double>(count);
  return out;
}

DpConversion rdp_to_dp(const RdpCurve& curve, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidParameter("rdp_to_dp: delta must lie in (0, 1)");
  curve.validate();
  if (curve.orders.empty()) throw InvalidParameter("rdp_to_dp: empty curve");
  const double log_inv_delta = std::log(1.0 / delta);
  DpConversion best{std::numeric_limits<double>::infinity(), curve.orders.front()};
  for (std::size_t i = 0; i < curve.orders.size(); ++i) {
    const double e = curve.eps[i] + log_inv_delta / (curve.orders[i] - 1.0);
    if (e < best.epsilon) best = DpConversion{e, curve.orders[i]};
  }
  return best;
}

PrivacySpend eps_for_training_at_rate(double q, double sigma, std::int64_t T, double delta,
                                      const std::vector<double>& orders) {
  if (!(sigma > 0.0)) throw InvalidParameter("eps_for_training: sigma must be > 0");
  if (T < 0) throw InvalidParameter("eps_for_training: T must be >= 0");
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidParameter("eps_for_training: delta must lie in (0, 1)");
  if (T == 0) return PrivacySpend{0, 0.0, delta, 0.0};

  // Sensitivity 2C against noise std sigma*C: unit-sensitivity multiplier sigma/2.
  const RdpCurve amplified = compose_repeated(subsampled_gaussian_curve(orders, q, sigma / 2.0), T);
  const RdpCurve plain = compose_repeated(decoder_step_curve(orders, sigma), T);
  const DpConversion a = rdp_to_dp(amplified, delta);
  const DpConversion p = rdp_to_dp(plain, delta);
  const DpConversion& best = a.epsilon <= p.epsilon ? a : p;
  return PrivacySpend{T, best.epsilon, delta, best.best_order};
}

PrivacySpend eps_for_training(std::int64_t K, double sigma, std::int64_t T, double delta,
                              const std::vector<double>& orders) {
  if (K < 1) throw InvalidParameter("eps_for_training: K must be >= 1");
  return eps_for_training_at_rate(1.0 / static_cast<double>(K), sigma, T, delta, orders);
}

}  // namespace dp2vae
