#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dp2vae/numerics.hpp"

namespace dp2vae {

enum class Provenance : std::uint8_t { kReal, kSynthetic };

/// Images are columns of a (rows*cols) x N matrix with pixels in [0, 1].
struct LabeledDataset {
  Matrix images;
  std::vector<int> labels;
  Provenance provenance = Provenance::kReal;
  int rows = 28;
  int cols = 28;

  Eigen::Index size() const { return images.cols(); }
  Eigen::Index dim() const { return images.rows(); }
  /// Throws DataError on count mismatch, pixel range or label range violations.
  void validate(int num_classes = 10) const;
  LabeledDataset subset(std::span<const std::size_t> indices) const;
  /// First n records.
  LabeledDataset head(Eigen::Index n) const;
};

struct IdxImages {
  Matrix pixels;  // rows*cols x count, scaled by 1/255
  int rows = 0;
  int cols = 0;
};

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

IdxImages read_idx_images(const std::filesystem::path& path);
std::vector<int> read_idx_labels(const std::filesystem::path& path);

/// Parsers over an in-memory buffer; `source` only labels error messages.
IdxImages parse_idx_images(std::span<const std::uint8_t> bytes, const std::string& source);
std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes, const std::string& source);

LabeledDataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels,
                                Provenance provenance = Provenance::kReal);

void write_idx_images(const std::filesystem::path& path, const Matrix& pixels, int rows, int cols);
void write_idx_labels(const std::filesystem::path& path, std::span<const int> labels);

struct SyntheticPaths {
  std::filesystem::path images;
  std::filesystem::path labels;
};

/// Writes a synthetic-tagged dataset as an IDX image/label pair, quantizing
/// pixels with round(255 x).
SyntheticPaths write_synthetic(const LabeledDataset& dataset, const std::filesystem::path& dir);

/// Named tensor table plus string metadata.
///
/// File layout, all integers little-endian:
///   "DP2VAECK" | u32 version | u32 n_meta | n_meta x (str key, str value)
///   | u32 n_tensors | n_tensors x (str name, u8 dtype, u32 ndim, ndim x u64 dim, payload)
///   | u64 FNV-1a of every preceding byte
/// where str is u32 length + bytes, dtype 1 = f64 and 2 = u64.
class Checkpoint {
 public:
  static constexpr std::uint32_t kVersion = 1;

  struct Tensor {
    std::vector<std::uint64_t> shape;
    std::vector<double> f64;
    std::vector<std::uint64_t> u64;
    bool is_u64 = false;

    bool operator==(const Tensor&) const = default;
  };

  void set_meta(const std::string& key, const std::string& value) { meta_[key] = value; }
  bool has_meta(const std::string& key) const { return meta_.count(key) != 0; }
  const std::string& meta(const std::string& key) const;
  const std::map<std::string, std::string>& metadata() const { return meta_; }

  void put(const std::string& name, const Matrix& m);
  void put(const std::string& name, const Vector& v);
  void put_scalar(const std::string& name, double value);
  void put_u64(const std::string& name, std::vector<std::uint64_t> values);

  bool has(const std::string& name) const { return tensors_.count(name) != 0; }
  const Tensor& tensor(const std::string& name) const;
  Vector vector(const std::string& name) const;
  Matrix matrix(const std::string& name) const;
  double scalar(const std::string& name) const;
  const std::vector<std::uint64_t>& u64(const std::string& name) const;
  const std::map<std::string, Tensor>& tensors() const { return tensors_; }

  std::vector<std::uint8_t> serialize() const;
  static Checkpoint deserialize(std::span<const std::uint8_t> bytes, const std::string& source);

  bool operator==(const Checkpoint&) const = default;

 private:
  std::map<std::string, std::string> meta_;
  std::map<std::string, Tensor> tensors_;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace dp2vae
