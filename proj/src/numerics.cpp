#include "dp2vae/numerics.hpp"

#include <limits>

namespace dp2vae {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed),
      stream_id_(stream_id),
      seed_key_(mix64(seed + kGolden)),
      stream_key_(mix64(mix64(stream_id ^ 0x5851f42d4c957f2dULL) + seed_key_)) {}

RngStream::RngStream(const State& state) : RngStream(state.seed, state.stream_id) {
  counter_ = state.counter;
  has_spare_ = state.has_spare;
  spare_ = state.spare;
}

std::uint64_t RngStream::next_u64() {
  const std::uint64_t x = mix64(seed_key_ + counter_ * kGolden);
  ++counter_;
  return mix64(x ^ stream_key_);
}

double RngStream::next_uniform() {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::next_gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * next_uniform() - 1.0;
    v = 2.0 * next_uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

std::uint64_t RngStream::uniform_index(std::uint64_t n) {
  if (n == 0) throw InvalidParameter("uniform_index: n must be positive");
  // Reject the top partial block so every residue is equally likely.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t r;
  do {
    r = next_u64();
  } while (r >= limit);
  return r % n;
}

RngStream::State RngStream::state() const {
  return State{seed_, stream_id_, counter_, has_spare_, spare_};
}

Vector gaussian_sample(RngStream& rng, std::size_t n, double mean, double stddev) {
  if (!(stddev >= 0)) throw InvalidParameter("gaussian_sample: stddev must be >= 0");
  if (n == 0) throw InvalidParameter("gaussian_sample: n must be >= 1");
  Vector out(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out(i) = mean + stddev * rng.next_gaussian();
  }
  return out;
}

void add_gaussian_noise(RngStream& rng, std::span<double> out, double stddev) {
  if (!(stddev >= 0)) throw InvalidParameter("add_gaussian_noise: stddev must be >= 0");
  for (double& x : out) x += stddev * rng.next_gaussian();
}

}  // namespace dp2vae
