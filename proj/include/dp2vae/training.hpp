#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dp2vae/accountant.hpp"
#include "dp2vae/cvae.hpp"
#include "dp2vae/data_io.hpp"
#include "dp2vae/nn.hpp"

namespace dp2vae {

/// Per-step sampling rate handed to the accountant.
enum class AmplificationMode : std::uint8_t {
  kInverseK,       // q = 1/K: the chance a record's subset is queried
  kBatchFraction,  // q = B/|D_k| using the smallest subset, capped at 1
};

struct TrainConfig {
  CvaeShape shape;
  std::int64_t num_subsets = 20;      // K
  std::int64_t batch_size = 32;       // B
  std::int64_t pretrain_iters = 300;  // T_p
  std::int64_t train_steps = 500;     // T
  double pretrain_lr = 1e-3;          // eta_p
  double lr = 1e-3;                   // eta
  PrivacyParams privacy;
  std::uint64_t seed = 0;
  bool freeze_encoders = false;
  AmplificationMode amplification = AmplificationMode::kInverseK;
  int threads = 1;
  std::int64_t metrics_every = 50;
  /// Keep each released noisy decoder gradient in the step metrics.
  bool keep_released = false;

  void validate() const;
};

struct Partition {
  std::int64_t n = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<std::size_t>> subsets;

  std::int64_t K() const { return static_cast<std::int64_t>(subsets.size()); }
  bool operator==(const Partition&) const = default;
};

/// Shuffles 0..n-1 with the seed and deals records round-robin into K subsets.
Partition partition_dataset(std::int64_t n, std::int64_t K, std::uint64_t seed);

/// g / max(1, ||g|| / C).
Vector clip_to_norm(const Eigen::Ref<const Vector>& g, double C);

/// Draws min(count, n) distinct positions from 0..n-1.
std::vector<std::size_t> sample_without_replacement(RngStream& rng, std::size_t n, std::size_t count);

struct EncoderPool {
  CvaeShape shape;
  std::vector<Net> encoders;
  std::vector<Adam> adam;

  std::size_t size() const { return encoders.size(); }
};

struct SubsetProgress {
  double elbo_init = 0;   // mean ELBO over D_k before pre-training
  double elbo_final = 0;  // after T_p iterations, same evaluation noise
  std::int64_t effective_batch = 0;
  bool batch_reduced = false;
};

struct Stage1Result {
  EncoderPool pool;
  std::vector<SubsetProgress> progress;
};

/// Non-private pre-training of one encoder per subset, each with its own
/// throw-away decoder. Encoders run on up to config.threads workers; every
/// encoder draws only from its own streams so the result does not depend on
/// scheduling.
Stage1Result stage1_pretrain(const LabeledDataset& data, const Partition& partition, const TrainConfig& config);

/// Pre-trains encoder k alone.
SubsetProgress pretrain_encoder(std::size_t k, const LabeledDataset& data, const Partition& partition,
                                const TrainConfig& config, Net& encoder, Adam& adam);

/// Mean ELBO of (encoder, decoder) over the given records with fixed noise.
double mean_elbo(const CvaeParams& params, const LabeledDataset& data, std::span<const std::size_t> indices,
                 RngStream rng);

struct Stage2State {
  Net decoder;
  Adam decoder_adam;
  EncoderPool pool;
  RngStream rng{0, 0};
  std::int64_t step = 0;             // completed decoder updates
  std::int64_t accountant_steps = 0; // releases charged to the accountant
  std::int64_t redraws = 0;          // empty subsets skipped
};

struct StepMetrics {
  std::int64_t step = 0;
  std::int64_t subset = 0;
  double elbo = 0;
  double grad_norm_pre = 0;
  double grad_norm_post = 0;
  std::optional<double> epsilon;
  std::vector<std::size_t> batch;  // dataset indices
  Vector released;                 // only with keep_released
};

/// Fresh decoder from the seed alone, the given pool, and the Stage-2 stream.
Stage2State stage2_init(EncoderPool pool, const TrainConfig& config);

/// One Stage-2 iteration. On error the state is left untouched.
StepMetrics stage2_step(Stage2State& state, const LabeledDataset& data, const Partition& partition,
                        const TrainConfig& config);

double accounting_rate(const TrainConfig& config, const Partition& partition);
PrivacySpend privacy_spend(const TrainConfig& config, const Partition& partition, std::int64_t steps);

using MetricsSink = std::function<void(const StepMetrics&)>;

/// Runs steps until state.step == target_step.
void stage2_run(Stage2State& state, const LabeledDataset& data, const Partition& partition,
                const TrainConfig& config, std::int64_t target_step, const MetricsSink& sink = {});

struct Stage2Result {
  Net decoder;
  PrivacySpend spend;
  Stage2State state;
};

Stage2Result stage2_train(EncoderPool pool, const LabeledDataset& data, const Partition& partition,
                          const TrainConfig& config, const MetricsSink& sink = {});

std::string metrics_csv_header();
std::string metrics_csv_line(const StepMetrics& m);

struct AuditResult {
  double d_alpha = 0;
  double bound = 0;
  bool violated = false;
};

/// Exact Renyi divergence between N(clip(a), (sigma C)^2 I) and N(clip(b), (sigma C)^2 I).
AuditResult released_divergence(const Eigen::Ref<const Vector>& mean_grad, const Eigen::Ref<const Vector>& mean_grad_adjacent,
                                const PrivacyParams& privacy, double alpha);

struct AuditOptions {
  double encoder_lr = 1e-3;
  bool update_encoder = true;
  std::uint64_t noise_seed = 0;
};

/// Averaged per-example decoder gradient of a batch, computed exactly as a
/// Stage-2 step does (encoder updated after each example).
Vector batch_decoder_gradient(const CvaeParams& params, const Adam& encoder_adam, const LabeledDataset& batch,
                              const AuditOptions& options);

/// Batches must have equal size and differ in at most one record.
AuditResult audit_step_divergence(const LabeledDataset& batch, const LabeledDataset& adjacent,
                                  const CvaeParams& params, const PrivacyParams& privacy, double alpha,
                                  const AuditOptions& options = {});

// Checkpoint glue.
void put_shape(Checkpoint& c, const CvaeShape& shape);
CvaeShape get_shape(const Checkpoint& c);
void put_partition(Checkpoint& c, const Partition& p);
Partition get_partition(const Checkpoint& c);
void put_rng(Checkpoint& c, const std::string& name, const RngStream& rng);
RngStream get_rng(const Checkpoint& c, const std::string& name);
void put_adam(Checkpoint& c, const std::string& prefix, const Adam& adam);
Adam get_adam(const Checkpoint& c, const std::string& prefix);

Checkpoint pool_checkpoint(const EncoderPool& pool, const Partition& partition);
EncoderPool pool_from_checkpoint(const Checkpoint& c);

Checkpoint stage2_checkpoint(const Stage2State& state, const Partition& partition);
Stage2State stage2_from_checkpoint(const Checkpoint& c);

/// Decoder-only release artifact.
Checkpoint decoder_checkpoint(const CvaeShape& shape, const Net& decoder, const PrivacySpend& spend);

struct ReleasedDecoder {
  CvaeShape shape;
  Net decoder;
};

/// Reads only the decoder parameters and shape of a release artifact.
ReleasedDecoder decoder_from_checkpoint(const Checkpoint& c);

Checkpoint partition_checkpoint(const Partition& partition);

}  // namespace dp2vae
