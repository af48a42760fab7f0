#include "dp2vae/training.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace dp2vae {

namespace {

Matrix gather(const LabeledDataset& data, std::span<const std::size_t> indices, std::vector<int>& labels) {
  Matrix x(data.dim(), static_cast<Eigen::Index>(indices.size()));
  labels.resize(indices.size());
  for (std::size_t j = 0; j < indices.size(); ++j) {
    x.col(static_cast<Eigen::Index>(j)) = data.images.col(static_cast<Eigen::Index>(indices[j]));
    labels[j] = data.labels[indices[j]];
  }
  return x;
}

std::string join(const std::vector<Eigen::Index>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<Eigen::Index> split_dims(const std::string& s) {
  std::vector<Eigen::Index> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(std::stoll(item));
  }
  return out;
}

std::string encoder_key(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "encoder/%06zu", k);
  return buf;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void check_consistent(const EncoderPool& pool, const Partition& partition, const LabeledDataset& data) {
  if (static_cast<std::int64_t>(pool.size()) != partition.K()) {
    throw InvalidParameter("encoder pool size does not match the partition");
  }
  if (partition.n != data.size()) throw InvalidParameter("partition does not cover this dataset");
}

}  // namespace

void TrainConfig::validate() const {
  if (num_subsets < 1) throw InvalidParameter("K must be >= 1");
  if (batch_size < 1) throw InvalidParameter("B must be >= 1");
  if (pretrain_iters < 0) throw InvalidParameter("T_p must be >= 0");
  if (train_steps < 0) throw InvalidParameter("T must be >= 0");
  if (!(pretrain_lr > 0.0)) throw InvalidParameter("eta_p must be > 0");
  if (!(lr > 0.0)) throw InvalidParameter("eta must be > 0");
  if (threads < 1) throw InvalidParameter("threads must be >= 1");
  if (shape.latent_dim < 1 || shape.data_dim < 1 || shape.num_classes < 2) {
    throw InvalidParameter("invalid CVAE shape");
  }
  privacy.validate();
}

Partition partition_dataset(std::int64_t n, std::int64_t K, std::uint64_t seed) {
  if (K < 1) throw InvalidParameter("partition: K must be >= 1");
  if (K > n) {
    throw InvalidParameter("partition: K = " + std::to_string(K) + " exceeds dataset size " + std::to_string(n));
  }
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), std::size_t{0});
  RngStream rng(seed, stream_id(StreamPurpose::kPartition));
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.uniform_index(i)]);
  }
  Partition p;
  p.n = n;
  p.seed = seed;
  p.subsets.resize(static_cast<std::size_t>(K));
  for (auto& s : p.subsets) s.reserve(static_cast<std::size_t>(n / K + 1));
  for (std::size_t i = 0; i < order.size(); ++i) p.subsets[i % static_cast<std::size_t>(K)].push_back(order[i]);
  return p;
}

Vector clip_to_norm(const Eigen::Ref<const Vector>& g, double C) {
  if (!(C > 0.0)) throw InvalidParameter("clip bound must be > 0");
  const double norm = g.norm();
  return g / std::max(1.0, norm / C);
}

std::vector<std::size_t> sample_without_replacement(RngStream& rng, std::size_t n, std::size_t count) {
  count = std::min(count, n);
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(pool[i], pool[i + rng.uniform_index(n - i)]);
  }
  pool.resize(count);
  return pool;
}

double mean_elbo(const CvaeParams& params, const LabeledDataset& data, std::span<const std::size_t> indices,
                 RngStream rng) {
  if (indices.empty()) return 0.0;
  std::vector<int> labels;
  const Matrix x = gather(data, indices, labels);
  Matrix noise(params.shape.latent_dim, x.cols());
  for (Eigen::Index j = 0; j < noise.cols(); ++j)
    for (Eigen::Index i = 0; i < noise.rows(); ++i) noise(i, j) = rng.next_gaussian();
  return -negative_elbo(params, x, labels, noise);
}

SubsetProgress pretrain_encoder(std::size_t k, const LabeledDataset& data, const Partition& partition,
                                const TrainConfig& config, Net& encoder, Adam& adam) {
  const auto idx = static_cast<std::uint32_t>(k);
  const auto& subset = partition.subsets.at(k);
  RngStream enc_init(config.seed, stream_id(StreamPurpose::kEncoderInit, idx));
  RngStream dec_init(config.seed, stream_id(StreamPurpose::kStage1DecoderInit, idx));
  RngStream sampler(config.seed, stream_id(StreamPurpose::kStage1Sampler, idx));
  const RngStream eval(config.seed, stream_id(StreamPurpose::kStage1Eval, idx));

  CvaeParams p{config.shape, make_encoder(config.shape, enc_init), make_decoder(config.shape, dec_init)};
  Adam enc_adam = Adam::zeros(p.encoder.num_params());
  Adam dec_adam = Adam::zeros(p.decoder.num_params());

  SubsetProgress progress;
  const auto requested = static_cast<std::size_t>(config.batch_size);
  progress.effective_batch = static_cast<std::int64_t>(std::min(requested, subset.size()));
  progress.batch_reduced = requested > subset.size();
  progress.elbo_init = mean_elbo(p, data, subset, eval);

  std::vector<std::size_t> batch(static_cast<std::size_t>(progress.effective_batch));
  std::vector<int> labels;
  for (std::int64_t t = 0; t < config.pretrain_iters && !subset.empty(); ++t) {
    const auto pos = sample_without_replacement(sampler, subset.size(), requested);
    for (std::size_t i = 0; i < pos.size(); ++i) batch[i] = subset[pos[i]];
    const Matrix x = gather(data, batch, labels);
    const auto g = elbo_and_grads(p, x, labels, sampler);
    const Vector g_dec = clip_to_norm(g.grad_decoder, config.privacy.clip_bound);
    const Vector g_enc = clip_to_norm(g.grad_encoder, config.privacy.clip_bound);
    adam_update(p.decoder.mutable_params(), g_dec, dec_adam, config.pretrain_lr);
    adam_update(p.encoder.mutable_params(), g_enc, enc_adam, config.pretrain_lr);
  }
  progress.elbo_final = mean_elbo(p, data, subset, eval);
  encoder = std::move(p.encoder);
  adam = std::move(enc_adam);
  return progress;
}

Stage1Result stage1_pretrain(const LabeledDataset& data, const Partition& partition, const TrainConfig& config) {
  config.validate();
  if (partition.n != data.size()) throw InvalidParameter("partition does not cover this dataset");
  const std::size_t K = partition.subsets.size();
  Stage1Result result;
  result.pool.shape = config.shape;
  result.pool.encoders.resize(K);
  result.pool.adam.resize(K);
  result.progress.resize(K);

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t k = next++; k < K; k = next++) {
      try {
        result.progress[k] = pretrain_encoder(k, data, partition, config, result.pool.encoders[k], result.pool.adam[k]);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(config.threads), K);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return result;
}

Stage2State stage2_init(EncoderPool pool, const TrainConfig& config) {
  RngStream init(config.seed, stream_id(StreamPurpose::kStage2DecoderInit));
  Stage2State s;
  s.decoder = make_decoder(config.shape, init);
  s.decoder_adam = Adam::zeros(s.decoder.num_params());
  s.pool = std::move(pool);
  s.rng = RngStream(config.seed, stream_id(StreamPurpose::kStage2Loop));
  return s;
}

StepMetrics stage2_step(Stage2State& state, const LabeledDataset& data, const Partition& partition,
                        const TrainConfig& config) {
  check_consistent(state.pool, partition, data);
  const auto K = static_cast<std::uint64_t>(partition.K());
  RngStream rng = state.rng;
  std::int64_t redraws = 0;

  std::uint64_t k = rng.uniform_index(K);
  while (partition.subsets[k].empty()) {
    if (++redraws > 64 * static_cast<std::int64_t>(K)) throw InvalidState("stage2: every subset is empty");
    k = rng.uniform_index(K);
  }
  const auto& subset = partition.subsets[k];

  StepMetrics m;
  m.subset = static_cast<std::int64_t>(k);
  const auto pos = sample_without_replacement(rng, subset.size(), static_cast<std::size_t>(config.batch_size));
  m.batch.reserve(pos.size());
  for (auto p : pos) m.batch.push_back(subset[p]);

  CvaeParams params{config.shape, state.pool.encoders[k], state.decoder};
  Adam enc_adam = state.pool.adam[k];
  Vector sum = Vector::Zero(params.decoder.num_params());
  double elbo = 0;
  for (std::size_t idx : m.batch) {
    const auto col = static_cast<Eigen::Index>(idx);
    const auto g = elbo_and_grads(params, Vector(data.images.col(col)), data.labels[idx], rng);
    sum += g.grad_decoder;
    elbo += g.terms.elbo;
    if (!config.freeze_encoders) {
      adam_update(params.encoder.mutable_params(), g.grad_encoder, enc_adam, config.lr);
    }
  }
  const double inv_b = 1.0 / static_cast<double>(m.batch.size());
  const Vector mean_grad = sum * inv_b;
  m.elbo = elbo * inv_b;
  m.grad_norm_pre = mean_grad.norm();
  Vector released = clip_to_norm(mean_grad, config.privacy.clip_bound);
  m.grad_norm_post = released.norm();
  add_gaussian_noise(rng, std::span<double>(released.data(), static_cast<std::size_t>(released.size())),
                     config.privacy.noise_multiplier * config.privacy.clip_bound);
  if (!released.allFinite() || !params.encoder.params().allFinite()) {
    throw NumericError("stage2: non-finite gradient at step " + std::to_string(state.step + 1));
  }

  // Commit.
  adam_update(state.decoder.mutable_params(), released, state.decoder_adam, config.lr);
  state.pool.encoders[k] = std::move(params.encoder);
  state.pool.adam[k] = std::move(enc_adam);
  state.rng = rng;
  state.redraws += redraws;
  state.step += 1;
  state.accountant_steps += 1;
  m.step = state.step;
  if (config.keep_released) m.released = std::move(released);
  return m;
}

double accounting_rate(const TrainConfig& config, const Partition& partition) {
  const double K = static_cast<double>(partition.K());
  if (config.amplification == AmplificationMode::kInverseK) return 1.0 / K;
  std::size_t smallest = partition.subsets.front().size();
  for (const auto& s : partition.subsets) smallest = std::min(smallest, s.size());
  if (smallest == 0) return 1.0;
  return std::min(1.0, static_cast<double>(config.batch_size) / static_cast<double>(smallest));
}

PrivacySpend privacy_spend(const TrainConfig& config, const Partition& partition, std::int64_t steps) {
  return eps_for_training_at_rate(accounting_rate(config, partition), config.privacy.noise_multiplier, steps,
                                  config.privacy.delta);
}

void stage2_run(Stage2State& state, const LabeledDataset& data, const Partition& partition,
                const TrainConfig& config, std::int64_t target_step, const MetricsSink& sink) {
  while (state.step < target_step) {
    StepMetrics m = stage2_step(state, data, partition, config);
    const bool checkpoint = (config.metrics_every > 0 && m.step % config.metrics_every == 0) || m.step == target_step;
    if (checkpoint) m.epsilon = privacy_spend(config, partition, state.accountant_steps).epsilon;
    if (sink) sink(m);
  }
}

Stage2Result stage2_train(EncoderPool pool, const LabeledDataset& data, const Partition& partition,
                          const TrainConfig& config, const MetricsSink& sink) {
  config.validate();
  Stage2State state = stage2_init(std::move(pool), config);
  check_consistent(state.pool, partition, data);
  stage2_run(state, data, partition, config, config.train_steps, sink);
  Stage2Result r;
  r.decoder = state.decoder;
  r.spend = privacy_spend(config, partition, state.accountant_steps);
  r.state = std::move(state);
  return r;
}

std::string metrics_csv_header() { return "step,k,elbo,grad_norm_pre,grad_norm_post,epsilon"; }

std::string metrics_csv_line(const StepMetrics& m) {
  std::string line = std::to_string(m.step) + "," + std::to_string(m.subset) + "," + format_double(m.elbo) + "," +
                     format_double(m.grad_norm_pre) + "," + format_double(m.grad_norm_post) + ",";
  if (m.epsilon) line += format_double(*m.epsilon);
  return line;
}

AuditResult released_divergence(const Eigen::Ref<const Vector>& mean_grad, const Eigen::Ref<const Vector>& mean_grad_adjacent,
                                const PrivacyParams& privacy, double alpha) {
  privacy.validate();
  if (mean_grad.size() != mean_grad_adjacent.size()) throw ShapeError("audit: gradient lengths differ");
  const double C = privacy.clip_bound;
  const double noise_std = privacy.noise_multiplier * C;
  const Vector diff = clip_to_norm(mean_grad, C) - clip_to_norm(mean_grad_adjacent, C);
  AuditResult r;
  // D_alpha(N(a, s^2 I) || N(b, s^2 I)) = alpha ||a - b||^2 / (2 s^2).
  r.d_alpha = gaussian_rdp(alpha, noise_std, diff.norm());
  r.bound = decoder_step_rdp(alpha, privacy.noise_multiplier);
  r.violated = r.d_alpha > r.bound * (1.0 + 1e-12);
  return r;
}

Vector batch_decoder_gradient(const CvaeParams& params, const Adam& encoder_adam, const LabeledDataset& batch,
                              const AuditOptions& options) {
  if (batch.size() == 0) throw InvalidParameter("audit: empty batch");
  CvaeParams local = params;
  Adam adam = encoder_adam;
  RngStream rng(options.noise_seed, stream_id(StreamPurpose::kAudit));
  Vector sum = Vector::Zero(local.decoder.num_params());
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    const auto g = elbo_and_grads(local, Vector(batch.images.col(i)), batch.labels[static_cast<std::size_t>(i)], rng);
    sum += g.grad_decoder;
    if (options.update_encoder) adam_update(local.encoder.mutable_params(), g.grad_encoder, adam, options.encoder_lr);
  }
  return sum / static_cast<double>(batch.size());
}

AuditResult audit_step_divergence(const LabeledDataset& batch, const LabeledDataset& adjacent,
                                  const CvaeParams& params, const PrivacyParams& privacy, double alpha,
                                  const AuditOptions& options) {
  if (batch.size() != adjacent.size() || batch.dim() != adjacent.dim()) {
    throw InvalidParameter("audit: batches must have the same size");
  }
  Eigen::Index differing = 0;
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    const auto u = static_cast<std::size_t>(i);
    if (batch.labels[u] != adjacent.labels[u] || batch.images.col(i) != adjacent.images.col(i)) ++differing;
  }
  if (differing > 1) {
    throw InvalidParameter("audit: batches are not adjacent (" + std::to_string(differing) + " records differ)");
  }
  const Adam fresh = Adam::zeros(params.encoder.num_params());
  const Vector a = batch_decoder_gradient(params, fresh, batch, options);
  const Vector b = batch_decoder_gradient(params, fresh, adjacent, options);
  return released_divergence(a, b, privacy, alpha);
}

void put_shape(Checkpoint& c, const CvaeShape& s) {
  c.set_meta("shape.data_dim", std::to_string(s.data_dim));
  c.set_meta("shape.num_classes", std::to_string(s.num_classes));
  c.set_meta("shape.latent_dim", std::to_string(s.latent_dim));
  c.set_meta("shape.encoder_hidden", join(s.encoder_hidden));
  c.set_meta("shape.decoder_hidden", join(s.decoder_hidden));
}

CvaeShape get_shape(const Checkpoint& c) {
  CvaeShape s;
  try {
    s.data_dim = std::stoll(c.meta("shape.data_dim"));
    s.num_classes = std::stoi(c.meta("shape.num_classes"));
    s.latent_dim = std::stoll(c.meta("shape.latent_dim"));
  } catch (const std::logic_error&) {
    throw FormatError("checkpoint: malformed shape metadata");
  }
  s.encoder_hidden = split_dims(c.meta("shape.encoder_hidden"));
  s.decoder_hidden = split_dims(c.meta("shape.decoder_hidden"));
  return s;
}

void put_partition(Checkpoint& c, const Partition& p) {
  std::vector<std::uint64_t> header{static_cast<std::uint64_t>(p.n), p.seed, p.subsets.size()};
  std::vector<std::uint64_t> offsets{0};
  std::vector<std::uint64_t> indices;
  for (const auto& s : p.subsets) {
    indices.insert(indices.end(), s.begin(), s.end());
    offsets.push_back(indices.size());
  }
  c.put_u64("partition/header", std::move(header));
  c.put_u64("partition/offsets", std::move(offsets));
  c.put_u64("partition/indices", std::move(indices));
}

Partition get_partition(const Checkpoint& c) {
  const auto& header = c.u64("partition/header");
  const auto& offsets = c.u64("partition/offsets");
  const auto& indices = c.u64("partition/indices");
  if (header.size() != 3 || offsets.size() != header[2] + 1 || offsets.back() != indices.size()) {
    throw FormatError("checkpoint: malformed partition");
  }
  Partition p;
  p.n = static_cast<std::int64_t>(header[0]);
  p.seed = header[1];
  p.subsets.resize(header[2]);
  for (std::size_t k = 0; k < p.subsets.size(); ++k) {
    if (offsets[k] > offsets[k + 1]) throw FormatError("checkpoint: malformed partition offsets");
    p.subsets[k].assign(indices.begin() + static_cast<std::ptrdiff_t>(offsets[k]),
                        indices.begin() + static_cast<std::ptrdiff_t>(offsets[k + 1]));
  }
  return p;
}

void put_rng(Checkpoint& c, const std::string& name, const RngStream& rng) {
  const auto s = rng.state();
  c.put_u64(name, {s.seed, s.stream_id, s.counter, s.has_spare ? 1u : 0u, std::bit_cast<std::uint64_t>(s.spare)});
}

RngStream get_rng(const Checkpoint& c, const std::string& name) {
  const auto& v = c.u64(name);
  if (v.size() != 5) throw FormatError("checkpoint: malformed RNG state '" + name + "'");
  return RngStream(RngStream::State{v[0], v[1], v[2], v[3] != 0, std::bit_cast<double>(v[4])});
}

void put_adam(Checkpoint& c, const std::string& prefix, const Adam& adam) {
  c.put(prefix + "/m", adam.m);
  c.put(prefix + "/v", adam.v);
  c.put_u64(prefix + "/t", {static_cast<std::uint64_t>(adam.t)});
  c.put(prefix + "/hyper", Vector(Eigen::Vector3d(adam.beta1, adam.beta2, adam.epsilon)));
}

Adam get_adam(const Checkpoint& c, const std::string& prefix) {
  Adam a;
  a.m = c.vector(prefix + "/m");
  a.v = c.vector(prefix + "/v");
  const auto& t = c.u64(prefix + "/t");
  const Vector hyper = c.vector(prefix + "/hyper");
  if (t.size() != 1 || hyper.size() != 3 || a.m.size() != a.v.size()) {
    throw FormatError("checkpoint: malformed Adam state '" + prefix + "'");
  }
  a.t = static_cast<std::int64_t>(t[0]);
  a.beta1 = hyper(0);
  a.beta2 = hyper(1);
  a.epsilon = hyper(2);
  return a;
}

namespace {

void put_pool(Checkpoint& c, const EncoderPool& pool) {
  c.set_meta("pool.size", std::to_string(pool.size()));
  for (std::size_t k = 0; k < pool.size(); ++k) {
    c.put(encoder_key(k) + "/params", pool.encoders[k].params());
    put_adam(c, encoder_key(k) + "/adam", pool.adam[k]);
  }
}

EncoderPool get_pool(const Checkpoint& c) {
  EncoderPool pool;
  pool.shape = get_shape(c);
  const std::size_t K = std::stoul(c.meta("pool.size"));
  const Net arch = encoder_architecture(pool.shape);
  for (std::size_t k = 0; k < K; ++k) {
    pool.encoders.push_back(unflatten(arch, c.vector(encoder_key(k) + "/params")));
    pool.adam.push_back(get_adam(c, encoder_key(k) + "/adam"));
  }
  return pool;
}

}  // namespace

Checkpoint pool_checkpoint(const EncoderPool& pool, const Partition& partition) {
  Checkpoint c;
  c.set_meta("kind", "encoder_pool");
  put_shape(c, pool.shape);
  put_pool(c, pool);
  put_partition(c, partition);
  return c;
}

EncoderPool pool_from_checkpoint(const Checkpoint& c) {
  if (c.meta("kind") != "encoder_pool" && c.meta("kind") != "stage2") {
    throw FormatError("checkpoint does not contain an encoder pool (kind=" + c.meta("kind") + ")");
  }
  return get_pool(c);
}

Checkpoint stage2_checkpoint(const Stage2State& state, const Partition& partition) {
  Checkpoint c;
  c.set_meta("kind", "stage2");
  put_shape(c, state.pool.shape);
  put_pool(c, state.pool);
  put_partition(c, partition);
  c.put("decoder/params", state.decoder.params());
  put_adam(c, "decoder/adam", state.decoder_adam);
  put_rng(c, "stage2/rng", state.rng);
  c.put_u64("stage2/counters", {static_cast<std::uint64_t>(state.step),
                                static_cast<std::uint64_t>(state.accountant_steps),
                                static_cast<std::uint64_t>(state.redraws)});
  return c;
}

Stage2State stage2_from_checkpoint(const Checkpoint& c) {
  if (c.meta("kind") != "stage2") throw FormatError("checkpoint is not a Stage-2 state (kind=" + c.meta("kind") + ")");
  Stage2State s;
  s.pool = get_pool(c);
  s.decoder = unflatten(decoder_architecture(s.pool.shape), c.vector("decoder/params"));
  s.decoder_adam = get_adam(c, "decoder/adam");
  s.rng = get_rng(c, "stage2/rng");
  const auto& counters = c.u64("stage2/counters");
  if (counters.size() != 3) throw FormatError("checkpoint: malformed Stage-2 counters");
  s.step = static_cast<std::int64_t>(counters[0]);
  s.accountant_steps = static_cast<std::int64_t>(counters[1]);
  s.redraws = static_cast<std::int64_t>(counters[2]);
  return s;
}

Checkpoint decoder_checkpoint(const CvaeShape& shape, const Net& decoder, const PrivacySpend& spend) {
  Checkpoint c;
  c.set_meta("kind", "decoder");
  put_shape(c, shape);
  c.put("decoder/params", decoder.params());
  c.set_meta("privacy.epsilon", format_double(spend.epsilon));
  c.set_meta("privacy.delta", format_double(spend.delta));
  c.set_meta("privacy.alpha", format_double(spend.best_order));
  c.set_meta("privacy.steps", std::to_string(spend.steps));
  return c;
}

ReleasedDecoder decoder_from_checkpoint(const Checkpoint& c) {
  if (c.meta("kind") != "decoder") throw FormatError("checkpoint is not a released decoder (kind=" + c.meta("kind") + ")");
  ReleasedDecoder r;
  r.shape = get_shape(c);
  r.decoder = unflatten(decoder_architecture(r.shape), c.vector("decoder/params"));
  return r;
}

Checkpoint partition_checkpoint(const Partition& partition) {
  Checkpoint c;
  c.set_meta("kind", "partition");
  put_partition(c, partition);
  return c;
}

}  // namespace dp2vae
