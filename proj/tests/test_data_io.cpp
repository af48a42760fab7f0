#include <doctest.h>

#include <filesystem>

#include "dp2vae/data_io.hpp"
#include "dp2vae/training.hpp"
#include "test_util.hpp"

using namespace dp2vae;
using Bytes = std::vector<std::uint8_t>;

namespace {

void be32(Bytes& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

Bytes image_fixture(std::uint32_t count, std::uint32_t rows, std::uint32_t cols, std::uint32_t magic = 0x803) {
  Bytes b;
  be32(b, magic);
  be32(b, count);
  be32(b, rows);
  be32(b, cols);
  for (std::uint32_t i = 0; i < count * rows * cols; ++i) b.push_back(static_cast<std::uint8_t>((i * 37) % 256));
  return b;
}

Bytes label_fixture(const std::vector<int>& labels, std::uint32_t magic = 0x801) {
  Bytes b;
  be32(b, magic);
  be32(b, static_cast<std::uint32_t>(labels.size()));
  for (int y : labels) b.push_back(static_cast<std::uint8_t>(y));
  return b;
}

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename Fn>
std::string format_error_message(Fn&& fn) {
  try {
    fn();
  } catch (const FormatError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("idx images: hand-built fixture round trip") {
  const Bytes b = image_fixture(1, 2, 3);
  const auto img = parse_idx_images(b, "fixture");
  CHECK(img.rows == 2);
  CHECK(img.cols == 3);
  REQUIRE(img.pixels.cols() == 1);
  for (int i = 0; i < 6; ++i) CHECK(img.pixels(i, 0) == ((i * 37) % 256) / 255.0);
}

TEST_CASE("idx labels: fixture and range") {
  CHECK(parse_idx_labels(label_fixture({3, 7}), "fixture") == std::vector<int>{3, 7});
  CHECK_THROWS_AS(parse_idx_labels(label_fixture({3, 10}), "fixture"), DataError);
}

TEST_CASE("idx: malformed inputs are format errors with position") {
  const auto wrong_magic = format_error_message([] { parse_idx_images(label_fixture({1}), "x"); });
  CHECK(wrong_magic.find("expected 0x00000803") != std::string::npos);
  CHECK(wrong_magic.find("found 0x00000801") != std::string::npos);
  CHECK(wrong_magic.find("offset 0") != std::string::npos);
  CHECK_THROWS_AS(parse_idx_labels(image_fixture(1, 2, 2), "x"), FormatError);

  Bytes truncated = image_fixture(2, 4, 4);
  truncated.resize(truncated.size() - 5);
  const auto msg = format_error_message([&] { parse_idx_images(truncated, "x"); });
  CHECK(msg.find("truncated") != std::string::npos);
  CHECK(msg.find("offset 16") != std::string::npos);

  CHECK_THROWS_AS(parse_idx_images(Bytes{0, 0}, "x"), FormatError);
  CHECK_THROWS_AS(parse_idx_images(Bytes{}, "x"), FormatError);
  Bytes header_only = image_fixture(0, 2, 2);
  header_only.resize(10);
  CHECK_THROWS_AS(parse_idx_images(header_only, "x"), FormatError);
  Bytes trailing = image_fixture(1, 2, 2);
  trailing.push_back(0);
  CHECK_THROWS_AS(parse_idx_images(trailing, "x"), FormatError);
  CHECK_THROWS_AS(parse_idx_images(image_fixture(1, 0, 2), "x"), FormatError);

  Bytes short_labels = label_fixture({1, 2, 3});
  short_labels.pop_back();
  CHECK_THROWS_AS(parse_idx_labels(short_labels, "x"), FormatError);
  Bytes long_labels = label_fixture({1, 2});
  long_labels.push_back(4);
  CHECK_THROWS_AS(parse_idx_labels(long_labels, "x"), FormatError);
}

TEST_CASE("idx: bundled MNIST subset has the documented layout") {
  const std::filesystem::path dir = DP2VAE_DATA_DIR;
  const auto train = load_idx_dataset(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
  const auto test = load_idx_dataset(dir / "test-images-idx3-ubyte", dir / "test-labels-idx1-ubyte");
  CHECK(train.size() == 2000);
  CHECK(test.size() == 3000);
  CHECK(train.rows == 28);
  CHECK(train.cols == 28);
  std::vector<int> counts(10, 0);
  for (int y : train.labels) counts[static_cast<std::size_t>(y)]++;
  for (int c : counts) CHECK(c == 200);
  CHECK(std::filesystem::file_size(dir / "train-images-idx3-ubyte") == 16 + 2000u * 784u);
  CHECK(std::filesystem::file_size(dir / "train-labels-idx1-ubyte") == 8 + 2000u);
}

TEST_CASE("write_synthetic: round trip, empty dataset, file sizes") {
  const auto dir = dp2vae::testing::scratch_dir("synthetic");
  RngStream rng(1, stream_id(StreamPurpose::kTest));
  LabeledDataset ds;
  ds.images = dp2vae::testing::random_pixels(rng, 784, 50);
  for (int i = 0; i < 50; ++i) ds.labels.push_back(i % 10);
  ds.provenance = Provenance::kSynthetic;

  const auto paths = write_synthetic(ds, dir);
  const auto back = load_idx_dataset(paths.images, paths.labels, Provenance::kSynthetic);
  CHECK(back.labels == ds.labels);
  CHECK((back.images - ds.images).cwiseAbs().maxCoeff() <= 0.5 / 255 + 1e-12);
  CHECK(std::filesystem::file_size(paths.images) == 16 + 50u * 784u);
  CHECK(std::filesystem::file_size(paths.labels) == 8 + 50u);

  LabeledDataset empty;
  empty.images.resize(784, 0);
  empty.provenance = Provenance::kSynthetic;
  const auto edir = dir / "empty";
  const auto epaths = write_synthetic(empty, edir);
  CHECK(read_idx_images(epaths.images).pixels.cols() == 0);
  CHECK(read_idx_labels(epaths.labels).empty());

  ds.provenance = Provenance::kReal;
  CHECK_THROWS_AS(write_synthetic(ds, dir), InvalidParameter);
}

TEST_CASE("write_synthetic: layout arithmetic at 60000 samples") {
  const auto dir = dp2vae::testing::scratch_dir("synthetic_big");
  LabeledDataset ds;
  ds.images = Matrix::Constant(784, 60000, 0.5);
  ds.labels.assign(60000, 4);
  ds.provenance = Provenance::kSynthetic;
  const auto paths = write_synthetic(ds, dir);
  CHECK(std::filesystem::file_size(paths.images) == 16 + 60000ull * 784ull);
  CHECK(std::filesystem::file_size(paths.labels) == 8 + 60000ull);
  std::filesystem::remove_all(dir);
}

TEST_CASE("read errors surface the path") {
  try {
    read_idx_images("/nonexistent/dir/file");
    FAIL("expected an IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/dir/file") != std::string::npos);
  }
}

TEST_CASE("checkpoint: bitwise round trip of tensors, metadata and RNG state") {
  Checkpoint c;
  c.set_meta("kind", "test");
  c.set_meta("config.sigma", "8");
  Matrix m(2, 3);
  m << 1, -0.0, 3.5, std::numeric_limits<double>::denorm_min(), 1e300, -7;
  c.put("m", m);
  c.put("v", Vector(Vector::LinSpaced(5, 0, 1)));
  c.put_scalar("s", 0.1);
  c.put_u64("u", {0, 1, ~0ULL});
  RngStream rng(9, stream_id(StreamPurpose::kTest));
  rng.next_gaussian();
  put_rng(c, "rng", rng);

  const auto bytes = c.serialize();
  const Checkpoint d = Checkpoint::deserialize(bytes, "mem");
  CHECK(d == c);
  CHECK(d.matrix("m") == m);
  CHECK(std::signbit(d.matrix("m")(0, 1)));
  CHECK(d.scalar("s") == 0.1);
  CHECK(get_rng(d, "rng").state() == rng.state());
  CHECK(d.serialize() == bytes);

  const auto path = dp2vae::testing::scratch_dir("ckpt") / "c.ckpt";
  save_checkpoint(c, path);
  CHECK(load_checkpoint(path) == c);
}

TEST_CASE("checkpoint: corruption, magic and version are rejected") {
  Checkpoint c;
  c.set_meta("kind", "test");
  c.put("v", Vector(Vector::Ones(4)));
  const auto bytes = c.serialize();

  for (std::size_t pos : {std::size_t{9}, std::size_t{20}, bytes.size() / 2, bytes.size() - 9, bytes.size() - 1}) {
    auto bad = bytes;
    bad[pos] ^= 0x10;
    CHECK_THROWS_AS(Checkpoint::deserialize(bad, "mem"), IntegrityError);
  }
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK_THROWS_AS(Checkpoint::deserialize(truncated, "mem"), IntegrityError);

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(Checkpoint::deserialize(bad_magic, "mem"), FormatError);

  // Version bump with a consistent checksum.
  auto v2 = bytes;
  v2[8] = 2;
  v2.resize(v2.size() - 8);
  const auto h = fnv1a(v2);
  for (int i = 0; i < 8; ++i) v2.push_back(static_cast<std::uint8_t>(h >> (8 * i)));
  try {
    Checkpoint::deserialize(v2, "mem");
    FAIL("expected a version error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("version 2") != std::string::npos);
  }
}

TEST_CASE("checkpoint: missing entries and kind mismatches") {
  Checkpoint c;
  CHECK_THROWS_AS(c.tensor("nope"), FormatError);
  CHECK_THROWS_AS(c.meta("nope"), FormatError);
  c.set_meta("kind", "decoder");
  CHECK_THROWS_AS(pool_from_checkpoint(c), FormatError);
  CHECK_THROWS_AS(stage2_from_checkpoint(c), FormatError);
}

TEST_CASE("checkpoint: fresh pool stores one named tensor per encoder") {
  CvaeShape shape;
  shape.data_dim = 4;
  shape.num_classes = 2;
  shape.latent_dim = 2;
  shape.encoder_hidden = {3};
  shape.decoder_hidden = {3};
  EncoderPool pool;
  pool.shape = shape;
  for (std::uint32_t k = 0; k < 5; ++k) {
    RngStream rng(1, stream_id(StreamPurpose::kEncoderInit, k));
    pool.encoders.push_back(make_encoder(shape, rng));
    pool.adam.push_back(Adam::zeros(pool.encoders.back().num_params()));
  }
  const Partition p = partition_dataset(10, 5, 3);
  const Checkpoint c = pool_checkpoint(pool, p);
  for (int k = 0; k < 5; ++k) {
    char name[40];
    std::snprintf(name, sizeof name, "encoder/%06d/params", k);
    CHECK(c.has(name));
  }
  const Checkpoint back = Checkpoint::deserialize(c.serialize(), "mem");
  const EncoderPool q = pool_from_checkpoint(back);
  REQUIRE(q.size() == 5);
  for (std::size_t k = 0; k < 5; ++k) CHECK(q.encoders[k].params() == pool.encoders[k].params());
  CHECK(q.shape == shape);
  CHECK(get_partition(back) == p);
}
