#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "dp2vae/evaluation.hpp"
#include "dp2vae/training.hpp"

namespace dp2vae {

/// Raw key -> value strings, before validation.
using ConfigValues = std::map<std::string, std::string>;

struct RunConfig {
  std::filesystem::path train_images;
  std::filesystem::path train_labels;
  std::filesystem::path test_images;
  std::filesystem::path test_labels;
  std::int64_t train_size = 0;  // 0 keeps every training record

  TrainConfig train;

  std::filesystem::path out_dir = "out";
  // Artifact paths; empty means the default name inside out_dir.
  std::filesystem::path partition_path;
  std::filesystem::path pool_path;
  std::filesystem::path decoder_path;
  std::filesystem::path synthetic_dir;
  std::filesystem::path resume_path;

  std::int64_t samples_per_class = 200;
  std::int64_t eval_runs = 5;
  FeatureKind features = FeatureKind::kPca;
  std::int64_t feature_dim = 64;
  std::string classifiers = "both";  // logreg | mlp | both

  std::int64_t audit_trials = 100;
  std::int64_t audit_batch = 8;
  double audit_alpha = 2.0;

  std::filesystem::path partition_file() const;
  std::filesystem::path pool_file() const;
  std::filesystem::path decoder_file() const;
  std::filesystem::path synthetic_directory() const;
};

std::string version_string();

/// Every recognised key with its default value.
const ConfigValues& default_config_values();

/// Flat "key = value" lines; '#' starts a comment. Unknown keys are usage errors.
ConfigValues read_config_file(const std::filesystem::path& path);

/// DP2VAE_<KEY> environment overrides for every known key.
ConfigValues environment_overrides();

/// Validates every value; errors are UsageError naming the offending key.
RunConfig parse_config(const ConfigValues& values);

/// Canonical values of a resolved config; parse_config(to_values(c)) == c.
ConfigValues to_values(const RunConfig& config);

/// Sorted "key = value" lines followed by the version line.
std::string format_config(const RunConfig& config);

/// Stores the resolved config and version in checkpoint metadata.
void stamp_checkpoint(Checkpoint& checkpoint, const RunConfig& config);

/// Entry point of the command-line tool. Returns the process exit code:
/// 0 success, 2 usage error, 1 any other failure.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dp2vae
