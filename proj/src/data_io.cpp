#include "dp2vae/data_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

namespace dp2vae {

namespace {

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::string source)
      : bytes_(bytes), source_(std::move(source)) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw FormatError(source_ + ": truncated " + what + " at offset " + std::to_string(pos_) + " (need " +
                        std::to_string(n) + " bytes, have " + std::to_string(remaining()) + ")");
    }
  }
  std::uint32_t be32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[pos_++];
    return v;
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes_[pos_++];
  }
  std::uint32_t le32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t le64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::string str(const char* what) {
    const auto n = le32(what);
    auto s = take(n, what);
    return std::string(s.begin(), s.end());
  }
  void expect_end() const {
    if (remaining() != 0) {
      throw FormatError(source_ + ": " + std::to_string(remaining()) + " trailing bytes at offset " +
                        std::to_string(pos_));
    }
  }
  const std::string& source() const { return source_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

class ByteWriter {
 public:
  void be32(std::uint32_t v) {
    for (int i = 3; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u8(std::uint8_t v) { out.push_back(v); }
  void le32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void le64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void str(const std::string& s) {
    le32(static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t> out;
};

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr char kCheckpointMagic[8] = {'D', 'P', '2', 'V', 'A', 'E', 'C', 'K'};

}  // namespace

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

void LabeledDataset::validate(int num_classes) const {
  if (static_cast<std::size_t>(images.cols()) != labels.size()) {
    throw DataError("dataset has " + std::to_string(images.cols()) + " images but " +
                    std::to_string(labels.size()) + " labels");
  }
  if (images.rows() != static_cast<Eigen::Index>(rows) * cols) {
    throw DataError("image dimension does not match rows x cols");
  }
  if (images.size() > 0 && !(images.minCoeff() >= 0.0 && images.maxCoeff() <= 1.0)) {
    throw DataError("pixel values outside [0, 1]");
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw DataError("label " + std::to_string(y) + " out of range");
  }
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out;
  out.provenance = provenance;
  out.rows = rows;
  out.cols = cols;
  out.images.resize(images.rows(), static_cast<Eigen::Index>(indices.size()));
  out.labels.reserve(indices.size());
  for (std::size_t j = 0; j < indices.size(); ++j) {
    if (indices[j] >= labels.size()) throw InvalidParameter("subset: index out of range");
    out.images.col(static_cast<Eigen::Index>(j)) = images.col(static_cast<Eigen::Index>(indices[j]));
    out.labels.push_back(labels[indices[j]]);
  }
  return out;
}

LabeledDataset LabeledDataset::head(Eigen::Index n) const {
  if (n < 0 || n > size()) throw InvalidParameter("head: n exceeds dataset size");
  LabeledDataset out = *this;
  out.images = images.leftCols(n);
  out.labels.resize(static_cast<std::size_t>(n));
  return out;
}

IdxImages parse_idx_images(std::span<const std::uint8_t> bytes, const std::string& source) {
  ByteReader r(bytes, source);
  const auto magic = r.be32("magic");
  if (magic != kIdxImageMagic) {
    throw FormatError(source + ": bad magic at offset 0: expected " + hex32(kIdxImageMagic) + ", found " +
                      hex32(magic));
  }
  const auto count = r.be32("image count");
  const auto rows = r.be32("row count");
  const auto cols = r.be32("column count");
  if (rows == 0 || cols == 0 || rows > 4096 || cols > 4096) {
    throw FormatError(source + ": implausible image size " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  const std::size_t dim = static_cast<std::size_t>(rows) * cols;
  const auto payload = r.take(dim * count, "pixel payload");
  r.expect_end();
  IdxImages out;
  out.rows = static_cast<int>(rows);
  out.cols = static_cast<int>(cols);
  out.pixels.resize(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(count));
  for (std::size_t j = 0; j < count; ++j)
    for (std::size_t i = 0; i < dim; ++i)
      out.pixels(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = payload[j * dim + i] / 255.0;
  return out;
}

std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes, const std::string& source) {
  ByteReader r(bytes, source);
  const auto magic = r.be32("magic");
  if (magic != kIdxLabelMagic) {
    throw FormatError(source + ": bad magic at offset 0: expected " + hex32(kIdxLabelMagic) + ", found " +
                      hex32(magic));
  }
  const auto count = r.be32("label count");
  const std::size_t start = r.offset();
  const auto payload = r.take(count, "label payload");
  r.expect_end();
  std::vector<int> labels(payload.begin(), payload.end());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > 9) {
      throw DataError(source + ": label " + std::to_string(labels[i]) + " out of range at offset " +
                      std::to_string(start + i));
    }
  }
  return labels;
}

IdxImages read_idx_images(const std::filesystem::path& path) {
  return parse_idx_images(read_file_bytes(path), path.string());
}

std::vector<int> read_idx_labels(const std::filesystem::path& path) {
  return parse_idx_labels(read_file_bytes(path), path.string());
}

LabeledDataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels,
                                Provenance provenance) {
  auto img = read_idx_images(images);
  LabeledDataset ds;
  ds.images = std::move(img.pixels);
  ds.rows = img.rows;
  ds.cols = img.cols;
  ds.labels = read_idx_labels(labels);
  ds.provenance = provenance;
  ds.validate();
  return ds;
}

void write_idx_images(const std::filesystem::path& path, const Matrix& pixels, int rows, int cols) {
  if (pixels.rows() != static_cast<Eigen::Index>(rows) * cols) {
    throw ShapeError("write_idx_images: pixel rows do not match rows x cols");
  }
  ByteWriter w;
  w.be32(kIdxImageMagic);
  w.be32(static_cast<std::uint32_t>(pixels.cols()));
  w.be32(static_cast<std::uint32_t>(rows));
  w.be32(static_cast<std::uint32_t>(cols));
  w.out.reserve(16 + static_cast<std::size_t>(pixels.size()));
  for (Eigen::Index j = 0; j < pixels.cols(); ++j) {
    for (Eigen::Index i = 0; i < pixels.rows(); ++i) {
      const double v = std::clamp(pixels(i, j), 0.0, 1.0);
      w.u8(static_cast<std::uint8_t>(std::lround(255.0 * v)));
    }
  }
  write_file_bytes(path, w.out);
}

void write_idx_labels(const std::filesystem::path& path, std::span<const int> labels) {
  ByteWriter w;
  w.be32(kIdxLabelMagic);
  w.be32(static_cast<std::uint32_t>(labels.size()));
  for (int y : labels) {
    if (y < 0 || y > 255) throw DataError("label " + std::to_string(y) + " does not fit in a byte");
    w.u8(static_cast<std::uint8_t>(y));
  }
  write_file_bytes(path, w.out);
}

SyntheticPaths write_synthetic(const LabeledDataset& dataset, const std::filesystem::path& dir) {
  if (dataset.provenance != Provenance::kSynthetic) {
    throw InvalidParameter("write_synthetic: dataset is not tagged synthetic");
  }
  dataset.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  SyntheticPaths paths{dir / "synthetic-images-idx3-ubyte", dir / "synthetic-labels-idx1-ubyte"};
  write_idx_images(paths.images, dataset.images, dataset.rows, dataset.cols);
  write_idx_labels(paths.labels, dataset.labels);
  return paths;
}

const std::string& Checkpoint::meta(const std::string& key) const {
  auto it = meta_.find(key);
  if (it == meta_.end()) throw FormatError("checkpoint: missing metadata key '" + key + "'");
  return it->second;
}

void Checkpoint::put(const std::string& name, const Matrix& m) {
  Tensor t;
  t.shape = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  t.f64.assign(m.data(), m.data() + m.size());
  tensors_[name] = std::move(t);
}

void Checkpoint::put(const std::string& name, const Vector& v) {
  Tensor t;
  t.shape = {static_cast<std::uint64_t>(v.size())};
  t.f64.assign(v.data(), v.data() + v.size());
  tensors_[name] = std::move(t);
}

void Checkpoint::put_scalar(const std::string& name, double value) {
  Tensor t;
  t.f64 = {value};
  tensors_[name] = std::move(t);
}

void Checkpoint::put_u64(const std::string& name, std::vector<std::uint64_t> values) {
  Tensor t;
  t.shape = {static_cast<std::uint64_t>(values.size())};
  t.u64 = std::move(values);
  t.is_u64 = true;
  tensors_[name] = std::move(t);
}

const Checkpoint::Tensor& Checkpoint::tensor(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw FormatError("checkpoint: missing tensor '" + name + "'");
  return it->second;
}

Vector Checkpoint::vector(const std::string& name) const {
  const auto& t = tensor(name);
  if (t.is_u64 || t.shape.size() != 1) throw FormatError("checkpoint: tensor '" + name + "' is not an f64 vector");
  return Eigen::Map<const Vector>(t.f64.data(), static_cast<Eigen::Index>(t.f64.size()));
}

Matrix Checkpoint::matrix(const std::string& name) const {
  const auto& t = tensor(name);
  if (t.is_u64 || t.shape.size() != 2) throw FormatError("checkpoint: tensor '" + name + "' is not an f64 matrix");
  return Eigen::Map<const Matrix>(t.f64.data(), static_cast<Eigen::Index>(t.shape[0]),
                                  static_cast<Eigen::Index>(t.shape[1]));
}

double Checkpoint::scalar(const std::string& name) const {
  const auto& t = tensor(name);
  if (t.is_u64 || !t.shape.empty() || t.f64.size() != 1) {
    throw FormatError("checkpoint: tensor '" + name + "' is not a scalar");
  }
  return t.f64.front();
}

const std::vector<std::uint64_t>& Checkpoint::u64(const std::string& name) const {
  const auto& t = tensor(name);
  if (!t.is_u64) throw FormatError("checkpoint: tensor '" + name + "' is not u64");
  return t.u64;
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
  ByteWriter w;
  w.out.insert(w.out.end(), std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  w.le32(kVersion);
  w.le32(static_cast<std::uint32_t>(meta_.size()));
  for (const auto& [k, v] : meta_) {
    w.str(k);
    w.str(v);
  }
  w.le32(static_cast<std::uint32_t>(tensors_.size()));
  for (const auto& [name, t] : tensors_) {
    w.str(name);
    w.u8(t.is_u64 ? 2 : 1);
    w.le32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.le64(d);
    if (t.is_u64) {
      for (auto v : t.u64) w.le64(v);
    } else {
      for (double v : t.f64) w.le64(std::bit_cast<std::uint64_t>(v));
    }
  }
  w.le64(fnv1a64(w.out));
  return std::move(w.out);
}

Checkpoint Checkpoint::deserialize(std::span<const std::uint8_t> bytes, const std::string& source) {
  if (bytes.size() < sizeof kCheckpointMagic ||
      !std::equal(std::begin(kCheckpointMagic), std::end(kCheckpointMagic), bytes.begin())) {
    throw FormatError(source + ": not a checkpoint (bad magic at offset 0)");
  }
  if (bytes.size() < sizeof kCheckpointMagic + 4 + 8) {
    throw IntegrityError(source + ": checkpoint truncated (" + std::to_string(bytes.size()) + " bytes)");
  }
  const auto body = bytes.first(bytes.size() - 8);
  ByteReader tail(bytes.last(8), source);
  if (tail.le64("checksum") != fnv1a64(body)) {
    throw IntegrityError(source + ": checkpoint checksum mismatch (file corrupted or truncated)");
  }

  ByteReader r(body, source);
  r.take(sizeof kCheckpointMagic, "magic");
  const auto version = r.le32("version");
  if (version != kVersion) {
    throw FormatError(source + ": unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kVersion) + ")");
  }
  Checkpoint c;
  const auto n_meta = r.le32("metadata count");
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    auto k = r.str("metadata key");
    c.meta_[k] = r.str("metadata value");
  }
  const auto n_tensors = r.le32("tensor count");
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    auto name = r.str("tensor name");
    Tensor t;
    const auto dtype = r.u8("tensor dtype");
    if (dtype != 1 && dtype != 2) {
      throw FormatError(source + ": unknown dtype " + std::to_string(dtype) + " at offset " +
                        std::to_string(r.offset() - 1));
    }
    t.is_u64 = dtype == 2;
    const auto ndim = r.le32("tensor rank");
    std::uint64_t count = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      t.shape.push_back(r.le64("tensor dim"));
      count *= t.shape.back();
    }
    r.need(count * 8, "tensor payload");
    for (std::uint64_t k = 0; k < count; ++k) {
      const auto raw = r.le64("tensor payload");
      if (t.is_u64)
        t.u64.push_back(raw);
      else
        t.f64.push_back(std::bit_cast<double>(raw));
    }
    c.tensors_[name] = std::move(t);
  }
  r.expect_end();
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  write_file_bytes(path, checkpoint.serialize());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return Checkpoint::deserialize(read_file_bytes(path), path.string());
}

}  // namespace dp2vae
