#include <gtest/gtest.h>
#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "salera/data.hpp"

using namespace salera;
namespace fs = std::filesystem;

namespace {

// Byte-level IDX writer independent of write_idx.
std::vector<unsigned char> idx_bytes(std::uint32_t magic, std::vector<std::uint32_t> dims,
                                     const std::vector<unsigned char>& payload) {
  std::vector<unsigned char> b;
  auto be = [&](std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<unsigned char>((v >> s) & 0xFF));
  };
  be(magic);
  for (auto d : dims) be(d);
  b.insert(b.end(), payload.begin(), payload.end());
  return b;
}

void dump(const fs::path& p, const std::vector<unsigned char>& b) {
  std::ofstream f(p, std::ios::binary);
  f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

std::vector<unsigned char> slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

class IdxTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("salera_idx_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
    RngStream rng(77);
    for (int i = 0; i < n_ * 6; ++i) pixels_.push_back(static_cast<unsigned char>(rng.uniform_index(256)));
    for (int i = 0; i < n_; ++i) labels_.push_back(static_cast<unsigned char>(rng.uniform_index(10)));
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path img() const { return dir_ / "img"; }
  fs::path lab() const { return dir_ / "lab"; }
  void write_valid() {
    dump(img(), idx_bytes(0x803, {static_cast<std::uint32_t>(n_), 2, 3}, pixels_));
    dump(lab(), idx_bytes(0x801, {static_cast<std::uint32_t>(n_)}, labels_));
  }

  fs::path dir_;
  int n_ = 13;
  std::vector<unsigned char> pixels_, labels_;
};

}  // namespace

TEST_F(IdxTest, LoadsPixelsScaledAndLabels) {
  write_valid();
  const auto d = load_idx(img(), lab());
  ASSERT_EQ(d.size(), n_);
  ASSERT_EQ(d.features(), 6);
  for (int j = 0; j < n_; ++j) {
    for (int i = 0; i < 6; ++i) ASSERT_EQ(d.inputs(i, j), pixels_[static_cast<std::size_t>(j * 6 + i)] / 255.0);
    ASSERT_EQ(d.labels[static_cast<std::size_t>(j)], labels_[static_cast<std::size_t>(j)]);
  }
}

TEST_F(IdxTest, GzipIsTransparent) {
  write_valid();
  const auto raw = slurp(img());
  gzFile gz = gzopen((dir_ / "img.gz").string().c_str(), "wb");
  gzwrite(gz, raw.data(), static_cast<unsigned>(raw.size()));
  gzclose(gz);
  EXPECT_EQ(load_idx(dir_ / "img.gz", lab()).inputs, load_idx(img(), lab()).inputs);
}

TEST_F(IdxTest, RoundTripReproducesPayload) {
  write_valid();
  const auto d = load_idx(img(), lab());
  write_idx(d, 2, 3, dir_ / "img2", dir_ / "lab2");
  const auto a = slurp(img()), b = slurp(dir_ / "img2");
  ASSERT_EQ(a.size(), b.size());
  EXPECT_TRUE(std::equal(a.begin() + 16, a.end(), b.begin() + 16));
  const auto la = slurp(lab()), lb = slurp(dir_ / "lab2");
  EXPECT_TRUE(std::equal(la.begin() + 8, la.end(), lb.begin() + 8));
  EXPECT_THROW(write_idx(d, 4, 4, dir_ / "x", dir_ / "y"), DimensionError);
}

TEST_F(IdxTest, FormatErrorsNameTheField) {
  auto expect_error = [&](const std::string& needle) {
    try {
      load_idx(img(), lab());
      FAIL() << "expected FormatError containing " << needle;
    } catch (const FormatError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  write_valid();
  dump(img(), idx_bytes(0x802, {static_cast<std::uint32_t>(n_), 2, 3}, pixels_));
  expect_error("magic");

  write_valid();
  dump(img(), {0x00, 0x00, 0x08, 0x03, 0x00, 0x00});
  expect_error("truncated header");

  write_valid();
  dump(img(), idx_bytes(0x803, {static_cast<std::uint32_t>(n_), 2, 3},
                        std::vector<unsigned char>(pixels_.begin(), pixels_.end() - 1)));
  expect_error("payload");

  write_valid();
  dump(lab(), idx_bytes(0x801, {static_cast<std::uint32_t>(n_ - 1)},
                        std::vector<unsigned char>(labels_.begin(), labels_.end() - 1)));
  expect_error("count mismatch");

  write_valid();
  auto bad = labels_;
  bad[3] = 12;
  dump(lab(), idx_bytes(0x801, {static_cast<std::uint32_t>(n_)}, bad));
  expect_error("label value");

  EXPECT_THROW(load_idx(dir_ / "missing", lab()), std::runtime_error);
}

TEST(Standardize, TrainMomentsAndConstantCoordinates) {
  RngStream rng(3);
  Dataset train{Eigen::MatrixXd(4, 200), std::vector<int>(200, 0), "train"};
  Dataset test{Eigen::MatrixXd(4, 50), std::vector<int>(50, 0), "test"};
  for (Index j = 0; j < 200; ++j) train.inputs.col(j) << 0.3, 5.0 + 2.0 * rng.normal(), rng.uniform(), -1.0 + 1e-3 * rng.normal();
  for (Index j = 0; j < 50; ++j) test.inputs.col(j) << 0.3, 8.0 + rng.normal(), rng.uniform(), 7.0;
  const auto s = standardize(train, test);
  EXPECT_TRUE(s.train.inputs.row(0).isZero());
  EXPECT_TRUE(s.test.inputs.row(0).isZero());
  for (Index i = 1; i < 4; ++i) {
    const auto r = s.train.inputs.row(i);
    const double mean = r.mean();
    const double sd = std::sqrt((r.array() - mean).square().mean());
    EXPECT_NEAR(mean, 0.0, 1e-10);
    EXPECT_NEAR(sd, 1.0, 1e-10);
  }
  // Test split uses the training statistics, so its own mean is off zero.
  EXPECT_GT(std::abs(s.test.inputs.row(1).mean()), 0.5);
  EXPECT_NEAR(s.stats.mean[0], 0.3, 1e-15);
  EXPECT_THROW(standardize(train, Dataset{Eigen::MatrixXd(3, 2), {0, 0}, "bad"}), DimensionError);
}

TEST(MinibatchSchedule, SizesAndCoverage) {
  MinibatchSchedule s(60000, 0.01, RngStream(1));
  EXPECT_EQ(s.batch_size(), 600u);
  EXPECT_EQ(s.batches_per_epoch(), 100u);

  MinibatchSchedule full(37, 1.0, RngStream(2));
  EXPECT_EQ(full.batches_per_epoch(), 1u);
  full.start_epoch();
  EXPECT_EQ(full.batch(0).size(), 37u);

  MinibatchSchedule shortlast(105, 0.1, RngStream(4));  // batches of 11 (round 10.5 up), last has 6
  EXPECT_EQ(shortlast.batch_size(), 11u);
  EXPECT_EQ(shortlast.batches_per_epoch(), 10u);
  for (int epoch = 0; epoch < 3; ++epoch) {
    shortlast.start_epoch();
    std::multiset<std::size_t> seen;
    for (std::size_t b = 0; b < shortlast.batches_per_epoch(); ++b)
      for (auto i : shortlast.batch(b)) seen.insert(i);
    ASSERT_EQ(seen.size(), 105u);
    for (std::size_t i = 0; i < 105; ++i) ASSERT_EQ(seen.count(i), 1u);
  }
  EXPECT_EQ(shortlast.batch(9).size(), 6u);

  EXPECT_THROW(MinibatchSchedule(50, 0.01, RngStream(0)), ParameterError);
  EXPECT_THROW(MinibatchSchedule(50, 0.0, RngStream(0)), ParameterError);
}

TEST(MinibatchSchedule, SameSeedSameOrderNewEpochNewOrder) {
  MinibatchSchedule a(500, 0.1, RngStream(9)), b(500, 0.1, RngStream(9));
  a.start_epoch();
  b.start_epoch();
  const std::vector<std::size_t> first(a.batch(0).begin(), a.batch(0).end());
  EXPECT_TRUE(std::equal(first.begin(), first.end(), b.batch(0).begin()));
  a.start_epoch();
  EXPECT_FALSE(std::equal(first.begin(), first.end(), a.batch(0).begin()));
}

TEST(Parabola, Examples) {
  const auto f = make_parabola(1.0, 1.0);
  EXPECT_EQ(f.loss(2.0), 2.0);
  EXPECT_EQ(f.gradient(2.0), 2.0);
  const auto g = make_parabola(2.5, 1.0);
  const double theta = 0.8;
  EXPECT_EQ(theta - g.optimal_rate() * g.gradient(theta), 0.0);
  const double flipped = theta - g.critical_rate() * g.gradient(theta);
  EXPECT_EQ(flipped, -theta);
  EXPECT_EQ(g.loss(flipped), g.loss(theta));
  EXPECT_THROW(make_parabola(0.0, 1.0), ParameterError);
}

TEST(Blobs, ShapeLabelsDeterminism) {
  RngStream a(5), b(5);
  const auto d1 = make_blobs(300, 8, 4, a), d2 = make_blobs(300, 8, 4, b);
  EXPECT_EQ(d1.inputs, d2.inputs);
  EXPECT_EQ(d1.labels, d2.labels);
  EXPECT_EQ(d1.features(), 8);
  for (int y : d1.labels) {
    ASSERT_GE(y, 0);
    ASSERT_LT(y, 4);
  }
  EXPECT_TRUE(d1.inputs.allFinite());
}
