#include "dp2vae/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#ifndef DP2VAE_VERSION
#define DP2VAE_VERSION "0.0.0"
#endif
#ifndef DP2VAE_DATA_DIR
#define DP2VAE_DATA_DIR "data/mnist5k"
#endif

namespace dp2vae {

namespace {

namespace fs = std::filesystem;

struct KeySpec {
  const char* key;
  const char* flag;
  const char* help;
};

// Flag spellings; the config-file and environment spelling is `key`.
constexpr KeySpec kKeys[] = {
    {"train_images", "train-images", "real training images (IDX)"},
    {"train_labels", "train-labels", "real training labels (IDX)"},
    {"test_images", "test-images", "real test images (IDX)"},
    {"test_labels", "test-labels", "real test labels (IDX)"},
    {"train_size", "train-size", "use only the first N training records (0 = all)"},
    {"K", "K", "number of encoder subsets"},
    {"B", "B", "batch size"},
    {"Tp", "Tp", "Stage-1 iterations per encoder"},
    {"T", "T", "Stage-2 decoder updates"},
    {"eta_p", "eta-p", "Stage-1 learning rate"},
    {"eta", "eta", "Stage-2 learning rate"},
    {"C", "C", "gradient clipping bound"},
    {"sigma", "sigma", "noise multiplier"},
    {"delta", "delta", "target delta"},
    {"dz", "dz", "latent dimension"},
    {"seed", "seed", "experiment seed"},
    {"freeze_encoders", "freeze-encoders", "keep encoders fixed during Stage 2 (true/false)"},
    {"amplification", "amplification", "sampling rate for accounting: inverse_k or batch_fraction"},
    {"threads", "threads", "Stage-1 worker threads"},
    {"metrics_every", "metrics-every", "attach epsilon to every n-th metrics row"},
    {"out", "out", "output directory"},
    {"partition", "partition", "partition file (default <out>/partition.ckpt)"},
    {"pool", "pool", "encoder pool checkpoint (default <out>/pool.ckpt)"},
    {"decoder", "decoder", "released decoder (default <out>/decoder.ckpt)"},
    {"synthetic_dir", "synthetic-dir", "synthetic IDX directory (default <out>/synthetic)"},
    {"resume", "resume", "Stage-2 state checkpoint to resume from"},
    {"samples_per_class", "samples-per-class", "generated samples per class"},
    {"eval_runs", "eval-runs", "classifier runs averaged by evaluate"},
    {"features", "features", "feature map for the Frechet distance: pca or raw"},
    {"df", "df", "PCA feature dimension"},
    {"classifier", "classifier", "logreg, mlp or both"},
    {"audit_trials", "audit-trials", "random adjacent batches checked by audit"},
    {"audit_batch", "audit-batch", "batch size used by audit"},
    {"audit_alpha", "audit-alpha", "Renyi order used by audit"},
};

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_report(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool known_key(const std::string& key) { return default_config_values().count(key) != 0; }

std::int64_t get_int(const ConfigValues& v, const std::string& key, std::int64_t min_value) {
  const std::string& s = v.at(key);
  std::int64_t out = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw UsageError("invalid value for " + key + ": '" + s + "' is not an integer");
  }
  if (out < min_value) {
    throw UsageError("invalid value for " + key + ": must be >= " + std::to_string(min_value) + ", got " + s);
  }
  return out;
}

std::uint64_t get_u64(const ConfigValues& v, const std::string& key) {
  const std::string& s = v.at(key);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw UsageError("invalid value for " + key + ": '" + s + "' is not a non-negative integer");
  }
  return out;
}

double get_double(const ConfigValues& v, const std::string& key) {
  const std::string& s = v.at(key);
  double out = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(out)) {
    throw UsageError("invalid value for " + key + ": '" + s + "' is not a finite number");
  }
  return out;
}

double get_positive(const ConfigValues& v, const std::string& key) {
  const double out = get_double(v, key);
  if (!(out > 0)) throw UsageError("invalid value for " + key + ": must be > 0, got " + v.at(key));
  return out;
}

bool get_bool(const ConfigValues& v, const std::string& key) {
  const std::string& s = v.at(key);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw UsageError("invalid value for " + key + ": expected true or false, got '" + s + "'");
}

std::string get_choice(const ConfigValues& v, const std::string& key, std::initializer_list<const char*> choices) {
  const std::string& s = v.at(key);
  for (const char* c : choices) {
    if (s == c) return s;
  }
  std::string list;
  for (const char* c : choices) list += std::string(list.empty() ? "" : ", ") + c;
  throw UsageError("invalid value for " + key + ": '" + s + "' is not one of " + list);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

void echo_config(const RunConfig& c, const std::string& command, const fs::path& dir) {
  fs::create_directories(dir);
  write_text(dir / (command + ".config.txt"), "command = " + command + "\n" + format_config(c));
}

LabeledDataset load_train(const RunConfig& c) {
  LabeledDataset d = load_idx_dataset(c.train_images, c.train_labels, Provenance::kReal);
  if (c.train_size > 0) {
    if (c.train_size > d.size()) {
      throw UsageError("invalid value for train_size: " + std::to_string(c.train_size) + " exceeds the " +
                       std::to_string(d.size()) + " available records");
    }
    d = d.head(c.train_size);
  }
  return d;
}

LabeledDataset load_test(const RunConfig& c) {
  return load_idx_dataset(c.test_images, c.test_labels, Provenance::kReal);
}

void require_match(const char* key, std::int64_t configured, std::int64_t found, const std::string& source) {
  if (configured != found) {
    throw UsageError("invalid value for " + std::string(key) + ": configured " + std::to_string(configured) + " but " +
                     source + " has " + std::to_string(found));
  }
}

std::pair<int, int> image_grid(Eigen::Index dim) {
  const auto side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(dim))));
  if (static_cast<Eigen::Index>(side) * side == dim) return {side, side};
  return {static_cast<int>(dim), 1};
}

int cmd_partition(const RunConfig& c, std::ostream& out) {
  const LabeledDataset data = load_train(c);
  const Partition p = partition_dataset(data.size(), c.train.num_subsets, c.train.seed);
  Checkpoint ck = partition_checkpoint(p);
  stamp_checkpoint(ck, c);
  fs::create_directories(c.out_dir);
  save_checkpoint(ck, c.partition_file());
  echo_config(c, "partition", c.out_dir);
  out << "records=" << p.n << " subsets=" << p.K() << " path=" << c.partition_file().string() << "\n";
  return 0;
}

int cmd_pretrain(const RunConfig& c, std::ostream& out) {
  const LabeledDataset data = load_train(c);
  const Checkpoint pc = load_checkpoint(c.partition_file());
  const Partition p = get_partition(pc);
  require_match("K", c.train.num_subsets, p.K(), "the partition file");
  if (p.n != data.size()) {
    throw DataError("partition covers " + std::to_string(p.n) + " records but the dataset has " +
                    std::to_string(data.size()));
  }
  const Stage1Result r = stage1_pretrain(data, p, c.train);
  Checkpoint ck = pool_checkpoint(r.pool, p);
  stamp_checkpoint(ck, c);
  fs::create_directories(c.out_dir);
  save_checkpoint(ck, c.pool_file());

  std::string csv = "k,size,effective_batch,elbo_init,elbo_final\n";
  std::int64_t improved = 0;
  for (std::size_t k = 0; k < r.progress.size(); ++k) {
    const auto& s = r.progress[k];
    csv += std::to_string(k) + "," + std::to_string(p.subsets[k].size()) + "," + std::to_string(s.effective_batch) +
           "," + fmt_double(s.elbo_init) + "," + fmt_double(s.elbo_final) + "\n";
    if (s.elbo_final > s.elbo_init) ++improved;
  }
  write_text(c.out_dir / "stage1.csv", csv);
  echo_config(c, "pretrain", c.out_dir);
  out << "encoders=" << r.pool.size() << " improved=" << improved << " path=" << c.pool_file().string() << "\n";
  return 0;
}

int cmd_train(const RunConfig& c, std::ostream& out) {
  const LabeledDataset data = load_train(c);
  Stage2State state;
  Partition p;
  const bool resuming = !c.resume_path.empty();
  if (resuming) {
    const Checkpoint rc = load_checkpoint(c.resume_path);
    state = stage2_from_checkpoint(rc);
    p = get_partition(rc);
    if (state.step > c.train.train_steps) {
      throw UsageError("invalid value for T: resume checkpoint is already at step " + std::to_string(state.step));
    }
  } else {
    const Checkpoint pc = load_checkpoint(c.pool_file());
    p = get_partition(pc);
    state = stage2_init(pool_from_checkpoint(pc), c.train);
  }
  require_match("K", c.train.num_subsets, p.K(), "the encoder pool");
  require_match("dz", c.train.shape.latent_dim, state.pool.shape.latent_dim, "the encoder pool");
  if (p.n != data.size()) {
    throw DataError("partition covers " + std::to_string(p.n) + " records but the dataset has " +
                    std::to_string(data.size()));
  }

  fs::create_directories(c.out_dir);
  std::ofstream metrics(c.out_dir / "metrics.csv",
                        std::ios::binary | (resuming ? std::ios::app : std::ios::trunc));
  if (!metrics) throw IoError("cannot open " + (c.out_dir / "metrics.csv").string());
  if (!resuming) metrics << metrics_csv_header() << "\n";
  stage2_run(state, data, p, c.train, c.train.train_steps,
             [&](const StepMetrics& m) { metrics << metrics_csv_line(m) << "\n"; });
  metrics.close();

  const PrivacySpend spend = privacy_spend(c.train, p, state.accountant_steps);
  Checkpoint dk = decoder_checkpoint(state.pool.shape, state.decoder, spend);
  stamp_checkpoint(dk, c);
  save_checkpoint(dk, c.decoder_file());
  Checkpoint sk = stage2_checkpoint(state, p);
  stamp_checkpoint(sk, c);
  save_checkpoint(sk, c.out_dir / "stage2.ckpt");

  std::string report = "epsilon=" + fmt_report(spend.epsilon) + "\ndelta=" + fmt_report(spend.delta) +
                       "\nalpha=" + fmt_report(spend.best_order) + "\nsteps=" + std::to_string(state.step) +
                       "\naccountant_steps=" + std::to_string(state.accountant_steps) +
                       "\nredraws=" + std::to_string(state.redraws) + "\n";
  write_text(c.out_dir / "train_report.txt", report + "version=" + version_string() + "\n" + format_config(c));
  echo_config(c, "train", c.out_dir);
  out << report;
  return 0;
}

int cmd_generate(const RunConfig& c, std::ostream& out) {
  const ReleasedDecoder released = decoder_from_checkpoint(load_checkpoint(c.decoder_file()));
  std::vector<int> labels;
  for (int y = 0; y < released.shape.num_classes; ++y) {
    labels.insert(labels.end(), static_cast<std::size_t>(c.samples_per_class), y);
  }
  RngStream rng(c.train.seed, stream_id(StreamPurpose::kGenerate));
  LabeledDataset synthetic;
  synthetic.images = generate(released.shape, released.decoder, labels, rng);
  synthetic.labels = std::move(labels);
  synthetic.provenance = Provenance::kSynthetic;
  std::tie(synthetic.rows, synthetic.cols) = image_grid(released.shape.data_dim);
  const fs::path dir = c.synthetic_directory();
  fs::create_directories(dir);
  const auto paths = write_synthetic(synthetic, dir);
  echo_config(c, "generate", dir);
  out << "samples=" << synthetic.size() << " images=" << paths.images.string() << "\n";
  return 0;
}

int cmd_evaluate(const RunConfig& c, std::ostream& out) {
  const LabeledDataset real_train = load_train(c);
  const LabeledDataset real_test = load_test(c);
  const fs::path dir = c.synthetic_directory();
  const LabeledDataset synthetic = load_idx_dataset(dir / "synthetic-images-idx3-ubyte",
                                                    dir / "synthetic-labels-idx1-ubyte", Provenance::kSynthetic);

  const FeatureMap map = fit_features(real_train.images, c.features, c.feature_dim);
  const double frechet = frechet_distance(gaussian_fit(project(map, real_test.images)),
                                          gaussian_fit(project(map, synthetic.images)));

  std::string csv = "metric,value,seed\n";
  std::string summary;
  std::string report = "frechet=" + fmt_report(frechet) + "\n";
  csv += "frechet," + fmt_double(frechet) + ",\n";

  std::vector<std::uint64_t> seeds;
  for (std::int64_t r = 0; r < c.eval_runs; ++r) seeds.push_back(c.train.seed + static_cast<std::uint64_t>(r));
  std::vector<ClassifierKind> kinds;
  if (c.classifiers != "mlp") kinds.push_back(ClassifierKind::kLogReg);
  if (c.classifiers != "logreg") kinds.push_back(ClassifierKind::kMlp);
  for (const auto kind : kinds) {
    const auto rep = evaluate_over_runs(kind, synthetic, real_test, seeds);
    const std::string name = to_string(kind);
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      csv += name + "_accuracy," + fmt_double(rep.run_accuracies[i]) + "," + std::to_string(seeds[i]) + "\n";
      summary += "{\"classifier\": \"" + name + "\", \"train\": \"synthetic\", \"seed\": " + std::to_string(seeds[i]) +
                 ", \"accuracy\": " + fmt_report(rep.run_accuracies[i]) + "}\n";
    }
    csv += name + "_mean_accuracy," + fmt_double(rep.mean_accuracy) + ",\n";
    for (std::size_t k = 0; k < rep.per_class_accuracy.size(); ++k) {
      csv += name + "_class" + std::to_string(k) + "_accuracy," + fmt_double(rep.per_class_accuracy[k]) + ",\n";
    }
    report += name + "_accuracy=" + fmt_report(rep.mean_accuracy) + "\n";
  }
  fs::create_directories(c.out_dir);
  write_text(c.out_dir / "eval_report.csv", csv);
  write_text(c.out_dir / "eval_summary.txt", summary);
  write_text(c.out_dir / "eval_report.txt", report + "version=" + version_string() + "\n" + format_config(c));
  echo_config(c, "evaluate", c.out_dir);
  out << report;
  return 0;
}

int cmd_accountant(const RunConfig& c, std::ostream& out) {
  PrivacySpend spend;
  if (c.train.amplification == AmplificationMode::kInverseK) {
    spend = eps_for_training(c.train.num_subsets, c.train.privacy.noise_multiplier, c.train.train_steps,
                             c.train.privacy.delta);
  } else {
    const LabeledDataset data = load_train(c);
    spend = privacy_spend(c.train, partition_dataset(data.size(), c.train.num_subsets, c.train.seed),
                          c.train.train_steps);
  }
  out << "epsilon=" << fmt_report(spend.epsilon) << " delta=" << fmt_report(spend.delta)
      << " alpha=" << fmt_report(spend.best_order) << "\n";
  return 0;
}

int cmd_audit(const RunConfig& c, std::ostream& out) {
  const LabeledDataset data = load_train(c);
  const auto n = static_cast<std::size_t>(data.size());
  const auto batch = static_cast<std::size_t>(c.audit_batch);
  if (batch + 1 > n) throw UsageError("invalid value for audit_batch: needs at least audit_batch + 1 records");
  CvaeShape shape = c.train.shape;
  shape.data_dim = data.dim();

  double max_d = 0;
  double bound = 0;
  std::int64_t violations = 0;
  for (std::int64_t t = 0; t < c.audit_trials; ++t) {
    RngStream rng(c.train.seed, stream_id(StreamPurpose::kAudit, static_cast<std::uint32_t>(t)));
    CvaeParams params{shape, make_encoder(shape, rng), make_decoder(shape, rng)};
    auto idx = sample_without_replacement(rng, n, batch + 1);
    const std::size_t replacement = idx.back();
    idx.pop_back();
    auto adjacent_idx = idx;
    adjacent_idx[rng.uniform_index(batch)] = replacement;
    AuditOptions opts;
    opts.encoder_lr = c.train.lr;
    opts.update_encoder = !c.train.freeze_encoders;
    opts.noise_seed = rng.next_u64();
    const auto r = audit_step_divergence(data.subset(idx), data.subset(adjacent_idx), params, c.train.privacy,
                                         c.audit_alpha, opts);
    max_d = std::max(max_d, r.d_alpha);
    bound = r.bound;
    if (r.violated) ++violations;
  }
  std::string report = "trials=" + std::to_string(c.audit_trials) + " alpha=" + fmt_report(c.audit_alpha) +
                       " max_d_alpha=" + fmt_report(max_d) + " bound=" + fmt_report(bound) +
                       " violations=" + std::to_string(violations) + "\n";
  fs::create_directories(c.out_dir);
  write_text(c.out_dir / "audit_report.txt", report + "version=" + version_string() + "\n" + format_config(c));
  echo_config(c, "audit", c.out_dir);
  out << report;
  return violations == 0 ? 0 : 1;
}

}  // namespace

fs::path RunConfig::partition_file() const { return partition_path.empty() ? out_dir / "partition.ckpt" : partition_path; }
fs::path RunConfig::pool_file() const { return pool_path.empty() ? out_dir / "pool.ckpt" : pool_path; }
fs::path RunConfig::decoder_file() const { return decoder_path.empty() ? out_dir / "decoder.ckpt" : decoder_path; }
fs::path RunConfig::synthetic_directory() const { return synthetic_dir.empty() ? out_dir / "synthetic" : synthetic_dir; }

std::string version_string() { return std::string("dp2vae ") + DP2VAE_VERSION; }

const ConfigValues& default_config_values() {
  static const ConfigValues defaults = [] {
    const fs::path data = DP2VAE_DATA_DIR;
    const TrainConfig t;
    const RunConfig r;
    ConfigValues v;
    v["train_images"] = (data / "train-images-idx3-ubyte").string();
    v["train_labels"] = (data / "train-labels-idx1-ubyte").string();
    v["test_images"] = (data / "test-images-idx3-ubyte").string();
    v["test_labels"] = (data / "test-labels-idx1-ubyte").string();
    v["train_size"] = "0";
    v["K"] = std::to_string(t.num_subsets);
    v["B"] = std::to_string(t.batch_size);
    v["Tp"] = std::to_string(t.pretrain_iters);
    v["T"] = std::to_string(t.train_steps);
    v["eta_p"] = fmt_double(t.pretrain_lr);
    v["eta"] = fmt_double(t.lr);
    v["C"] = fmt_double(t.privacy.clip_bound);
    v["sigma"] = fmt_double(t.privacy.noise_multiplier);
    v["delta"] = fmt_double(t.privacy.delta);
    v["dz"] = std::to_string(t.shape.latent_dim);
    v["seed"] = std::to_string(t.seed);
    v["freeze_encoders"] = "false";
    v["amplification"] = "inverse_k";
    v["threads"] = std::to_string(t.threads);
    v["metrics_every"] = std::to_string(t.metrics_every);
    v["out"] = r.out_dir.string();
    v["partition"] = "";
    v["pool"] = "";
    v["decoder"] = "";
    v["synthetic_dir"] = "";
    v["resume"] = "";
    v["samples_per_class"] = std::to_string(r.samples_per_class);
    v["eval_runs"] = std::to_string(r.eval_runs);
    v["features"] = "pca";
    v["df"] = std::to_string(r.feature_dim);
    v["classifier"] = r.classifiers;
    v["audit_trials"] = std::to_string(r.audit_trials);
    v["audit_batch"] = std::to_string(r.audit_batch);
    v["audit_alpha"] = fmt_double(r.audit_alpha);
    return v;
  }();
  return defaults;
}

ConfigValues read_config_file(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("invalid value for config: cannot read " + path.string());
  ConfigValues v;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path.string() + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (!known_key(key)) throw UsageError(path.string() + ":" + std::to_string(lineno) + ": unknown key " + key);
    v[key] = trim(line.substr(eq + 1));
  }
  return v;
}

ConfigValues environment_overrides() {
  ConfigValues v;
  for (const auto& [key, unused] : default_config_values()) {
    std::string name = "DP2VAE_";
    for (char ch : key) name += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    if (const char* value = std::getenv(name.c_str())) v[key] = value;
  }
  return v;
}

RunConfig parse_config(const ConfigValues& given) {
  ConfigValues v = default_config_values();
  for (const auto& [key, value] : given) {
    if (!known_key(key)) throw UsageError("unknown configuration key " + key);
    v[key] = value;
  }

  RunConfig c;
  c.train_images = v.at("train_images");
  c.train_labels = v.at("train_labels");
  c.test_images = v.at("test_images");
  c.test_labels = v.at("test_labels");
  c.train_size = get_int(v, "train_size", 0);

  TrainConfig& t = c.train;
  t.num_subsets = get_int(v, "K", 1);
  t.batch_size = get_int(v, "B", 1);
  t.pretrain_iters = get_int(v, "Tp", 0);
  t.train_steps = get_int(v, "T", 0);
  t.pretrain_lr = get_positive(v, "eta_p");
  t.lr = get_positive(v, "eta");
  t.privacy.clip_bound = get_positive(v, "C");
  t.privacy.noise_multiplier = get_positive(v, "sigma");
  t.privacy.delta = get_positive(v, "delta");
  if (!(t.privacy.delta < 1)) throw UsageError("invalid value for delta: must be in (0, 1), got " + v.at("delta"));
  t.shape.latent_dim = static_cast<int>(get_int(v, "dz", 1));
  t.seed = get_u64(v, "seed");
  t.freeze_encoders = get_bool(v, "freeze_encoders");
  t.amplification = get_choice(v, "amplification", {"inverse_k", "batch_fraction"}) == "inverse_k"
                        ? AmplificationMode::kInverseK
                        : AmplificationMode::kBatchFraction;
  t.threads = static_cast<int>(get_int(v, "threads", 1));
  t.metrics_every = get_int(v, "metrics_every", 1);

  c.out_dir = v.at("out");
  if (c.out_dir.empty()) throw UsageError("invalid value for out: must not be empty");
  c.partition_path = v.at("partition");
  c.pool_path = v.at("pool");
  c.decoder_path = v.at("decoder");
  c.synthetic_dir = v.at("synthetic_dir");
  c.resume_path = v.at("resume");
  c.samples_per_class = get_int(v, "samples_per_class", 1);
  c.eval_runs = get_int(v, "eval_runs", 1);
  c.features = get_choice(v, "features", {"pca", "raw"}) == "pca" ? FeatureKind::kPca : FeatureKind::kRawPixels;
  c.feature_dim = get_int(v, "df", 1);
  c.classifiers = get_choice(v, "classifier", {"logreg", "mlp", "both"});
  c.audit_trials = get_int(v, "audit_trials", 1);
  c.audit_batch = get_int(v, "audit_batch", 1);
  c.audit_alpha = get_double(v, "audit_alpha");
  if (!(c.audit_alpha > 1)) throw UsageError("invalid value for audit_alpha: must be > 1, got " + v.at("audit_alpha"));
  return c;
}

ConfigValues to_values(const RunConfig& c) {
  const TrainConfig& t = c.train;
  ConfigValues v;
  v["train_images"] = c.train_images.string();
  v["train_labels"] = c.train_labels.string();
  v["test_images"] = c.test_images.string();
  v["test_labels"] = c.test_labels.string();
  v["train_size"] = std::to_string(c.train_size);
  v["K"] = std::to_string(t.num_subsets);
  v["B"] = std::to_string(t.batch_size);
  v["Tp"] = std::to_string(t.pretrain_iters);
  v["T"] = std::to_string(t.train_steps);
  v["eta_p"] = fmt_double(t.pretrain_lr);
  v["eta"] = fmt_double(t.lr);
  v["C"] = fmt_double(t.privacy.clip_bound);
  v["sigma"] = fmt_double(t.privacy.noise_multiplier);
  v["delta"] = fmt_double(t.privacy.delta);
  v["dz"] = std::to_string(t.shape.latent_dim);
  v["seed"] = std::to_string(t.seed);
  v["freeze_encoders"] = t.freeze_encoders ? "true" : "false";
  v["amplification"] = t.amplification == AmplificationMode::kInverseK ? "inverse_k" : "batch_fraction";
  v["threads"] = std::to_string(t.threads);
  v["metrics_every"] = std::to_string(t.metrics_every);
  v["out"] = c.out_dir.string();
  v["partition"] = c.partition_path.string();
  v["pool"] = c.pool_path.string();
  v["decoder"] = c.decoder_path.string();
  v["synthetic_dir"] = c.synthetic_dir.string();
  v["resume"] = c.resume_path.string();
  v["samples_per_class"] = std::to_string(c.samples_per_class);
  v["eval_runs"] = std::to_string(c.eval_runs);
  v["features"] = c.features == FeatureKind::kPca ? "pca" : "raw";
  v["df"] = std::to_string(c.feature_dim);
  v["classifier"] = c.classifiers;
  v["audit_trials"] = std::to_string(c.audit_trials);
  v["audit_batch"] = std::to_string(c.audit_batch);
  v["audit_alpha"] = fmt_double(c.audit_alpha);
  return v;
}

std::string format_config(const RunConfig& config) {
  std::string s;
  for (const auto& [key, value] : to_values(config)) s += key + " = " + value + "\n";
  s += "version = " + version_string() + "\n";
  return s;
}

void stamp_checkpoint(Checkpoint& checkpoint, const RunConfig& config) {
  for (const auto& [key, value] : to_values(config)) checkpoint.set_meta("config." + key, value);
  checkpoint.set_meta("version", version_string());
}

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Differentially private two-stage CVAE for synthetic data", "dp2vae"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version_string());

  std::string config_file;
  app.add_option("--config", config_file, "flat 'key = value' configuration file");
  ConfigValues flag_values;
  std::vector<std::pair<std::string, CLI::Option*>> options;
  for (const auto& spec : kKeys) {
    if (std::string(spec.key) == "freeze_encoders") continue;
    auto* opt = app.add_option(std::string("--") + spec.flag, flag_values[spec.key], spec.help);
    opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    options.emplace_back(spec.key, opt);
  }
  bool freeze = false;
  auto* freeze_flag = app.add_flag("--freeze-encoders", freeze, "keep encoders fixed during Stage 2");

  const std::pair<const char*, const char*> commands[] = {
      {"partition", "split the training set into K disjoint subsets"},
      {"pretrain", "Stage 1: non-private encoder pre-training, writes the encoder pool"},
      {"train", "Stage 2: private decoder training, writes the released decoder and privacy report"},
      {"generate", "sample labelled synthetic images from a released decoder"},
      {"evaluate", "Frechet distance and train-on-synthetic, test-on-real accuracy"},
      {"accountant", "print epsilon for (K, sigma, T, delta)"},
      {"audit", "check the per-step Renyi divergence on random adjacent batches"},
  };
  for (const auto& [name, desc] : commands) app.add_subcommand(name, desc)->fallthrough();

  std::vector<const char*> argv{"dp2vae"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << version_string() << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    ConfigValues values;
    if (!config_file.empty()) values = read_config_file(config_file);
    for (const auto& [key, value] : environment_overrides()) values[key] = value;
    for (const auto& [key, opt] : options) {
      if (opt->count() > 0) values[key] = flag_values[key];
    }
    if (freeze_flag->count() > 0) values["freeze_encoders"] = freeze ? "true" : "false";
    const RunConfig config = parse_config(values);

    const std::string command = app.get_subcommands().front()->get_name();
    if (command == "partition") return cmd_partition(config, out);
    if (command == "pretrain") return cmd_pretrain(config, out);
    if (command == "train") return cmd_train(config, out);
    if (command == "generate") return cmd_generate(config, out);
    if (command == "evaluate") return cmd_evaluate(config, out);
    if (command == "accountant") return cmd_accountant(config, out);
    return cmd_audit(config, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace dp2vae
