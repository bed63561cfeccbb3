#include "salera/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "salera/errors.hpp"

namespace salera {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<unsigned char> read_maybe_gzip(const std::filesystem::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::vector<unsigned char> bytes;
  unsigned char chunk[1 << 16];
  int got = 0;
  while ((got = gzread(f, chunk, sizeof(chunk))) > 0) bytes.insert(bytes.end(), chunk, chunk + got);
  int err = Z_OK;
  const char* msg = gzerror(f, &err);
  gzclose(f);
  if (got < 0 || (err != Z_OK && err != Z_STREAM_END))
    throw FormatError(path.string() + ": decompression failed (" + msg + ")");
  return bytes;
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t at, const std::string& what) {
  if (b.size() < at + 4) throw FormatError(what + ": truncated header");
  return (std::uint32_t(b[at]) << 24) | (std::uint32_t(b[at + 1]) << 16) | (std::uint32_t(b[at + 2]) << 8) |
         std::uint32_t(b[at + 3]);
}

void put_be32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {char((v >> 24) & 0xFF), char((v >> 16) & 0xFF), char((v >> 8) & 0xFF), char(v & 0xFF)};
  out.write(bytes, 4);
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto img = read_maybe_gzip(images);
  const auto lab = read_maybe_gzip(labels);
  const std::string iname = images.filename().string();
  const std::string lname = labels.filename().string();

  if (be32(img, 0, iname) != kImageMagic) throw FormatError(iname + ": bad magic (expected 0x00000803)");
  const std::size_t n = be32(img, 4, iname);
  const std::size_t rows = be32(img, 8, iname);
  const std::size_t cols = be32(img, 12, iname);
  const std::size_t features = rows * cols;
  if (img.size() != 16 + n * features)
    throw FormatError(iname + ": pixel payload is " + std::to_string(img.size() - 16) + " bytes, header promises " +
                      std::to_string(n * features));

  if (be32(lab, 0, lname) != kLabelMagic) throw FormatError(lname + ": bad magic (expected 0x00000801)");
  const std::size_t nl = be32(lab, 4, lname);
  if (lab.size() != 8 + nl) throw FormatError(lname + ": label payload is " + std::to_string(lab.size() - 8) +
                                              " bytes, header promises " + std::to_string(nl));
  if (nl != n)
    throw FormatError("count mismatch: " + iname + " has " + std::to_string(n) + " images, " + lname + " has " +
                      std::to_string(nl) + " labels");

  Dataset d;
  d.name = iname;
  d.inputs.resize(static_cast<Index>(features), static_cast<Index>(n));
  const unsigned char* px = img.data() + 16;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < features; ++i)
      d.inputs(static_cast<Index>(i), static_cast<Index>(j)) = px[j * features + i] / 255.0;
  d.labels.assign(lab.begin() + 8, lab.end());
  for (int y : d.labels)
    if (y > 9) throw FormatError(lname + ": label value " + std::to_string(y) + " outside [0, 10)");
  return d;
}

void write_idx(const Dataset& data, Index rows, Index cols, const std::filesystem::path& images,
               const std::filesystem::path& labels) {
  if (rows * cols != data.features()) throw DimensionError("write_idx: geometry does not match feature count");
  std::ofstream img(images, std::ios::binary);
  std::ofstream lab(labels, std::ios::binary);
  if (!img || !lab) throw std::runtime_error("write_idx: cannot open output files");
  put_be32(img, kImageMagic);
  put_be32(img, static_cast<std::uint32_t>(data.size()));
  put_be32(img, static_cast<std::uint32_t>(rows));
  put_be32(img, static_cast<std::uint32_t>(cols));
  std::vector<char> buf(static_cast<std::size_t>(data.features()));
  for (Index j = 0; j < data.size(); ++j) {
    for (Index i = 0; i < data.features(); ++i)
      buf[static_cast<std::size_t>(i)] =
          static_cast<char>(static_cast<unsigned char>(std::clamp(std::lround(data.inputs(i, j) * 255.0), 0L, 255L)));
    img.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
  put_be32(lab, kLabelMagic);
  put_be32(lab, static_cast<std::uint32_t>(data.labels.size()));
  for (int y : data.labels) lab.put(static_cast<char>(y));
}

NormalizationStats compute_stats(const Dataset& train) {
  NormalizationStats s;
  const double n = static_cast<double>(train.size());
  s.mean = train.inputs.rowwise().sum() / n;
  s.stddev = ((train.inputs.colwise() - s.mean).array().square().rowwise().sum() / n).sqrt();
  return s;
}

void apply_stats(Dataset& data, const NormalizationStats& stats) {
  if (data.features() != stats.mean.size()) throw DimensionError("apply_stats: feature width mismatch");
  const Eigen::ArrayXd keep = (stats.stddev.array() >= NormalizationStats::kMinStd).cast<double>();
  const Eigen::ArrayXd scale = keep / stats.stddev.array().max(NormalizationStats::kMinStd);
  data.inputs.colwise() -= stats.mean;
  data.inputs.array().colwise() *= scale;
}

Standardized standardize(Dataset train, Dataset test) {
  if (train.features() != test.features()) throw DimensionError("standardize: train and test feature widths differ");
  Standardized out;
  out.stats = compute_stats(train);
  apply_stats(train, out.stats);
  apply_stats(test, out.stats);
  out.train = std::move(train);
  out.test = std::move(test);
  return out;
}

MinibatchSchedule::MinibatchSchedule(std::size_t n, double rho, RngStream rng) : n_(n), rng_(rng), order_(n) {
  if (!(rho > 0.0 && rho <= 1.0)) throw ParameterError("minibatch_schedule: rho must lie in (0, 1]");
  if (rho * static_cast<double>(n) < 1.0) throw ParameterError("minibatch_schedule: rho * n must be >= 1");
  batch_size_ = static_cast<std::size_t>(std::llround(rho * static_cast<double>(n)));
  std::iota(order_.begin(), order_.end(), std::size_t{0});
}

void MinibatchSchedule::start_epoch() {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  for (std::size_t i = n_; i > 1; --i) std::swap(order_[i - 1], order_[rng_.uniform_index(i)]);
}

std::span<const std::size_t> MinibatchSchedule::batch(std::size_t b) const {
  const std::size_t start = b * batch_size_;
  if (start >= n_) throw ParameterError("minibatch_schedule: batch index past end of epoch");
  return {order_.data() + start, std::min(batch_size_, n_ - start)};
}

Parabola make_parabola(double curvature, double theta0) {
  if (!(curvature > 0.0)) throw ParameterError("make_parabola: curvature must be > 0");
  return Parabola{curvature, theta0};
}

Dataset make_blobs(Index n, Index features, int classes, RngStream& rng, double spread, double noise) {
  if (n < 1 || features < 1 || classes < 2) throw ParameterError("make_blobs: need n >= 1, features >= 1, classes >= 2");
  Eigen::MatrixXd centres(features, classes);
  for (Index c = 0; c < classes; ++c)
    for (Index i = 0; i < features; ++i) centres(i, c) = spread * (2.0 * rng.uniform() - 1.0);
  Dataset d;
  d.name = "blobs";
  d.inputs.resize(features, n);
  d.labels.resize(static_cast<std::size_t>(n));
  for (Index j = 0; j < n; ++j) {
    const int y = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(classes)));
    d.labels[static_cast<std::size_t>(j)] = y;
    for (Index i = 0; i < features; ++i) d.inputs(i, j) = centres(i, y) + noise * rng.normal();
  }
  return d;
}

}  // namespace salera
