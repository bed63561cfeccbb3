#ifndef SALERA_DATA_HPP
#define SALERA_DATA_HPP

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "salera/vecmath.hpp"

namespace salera {

/// Labelled examples. Inputs are stored one example per column
/// (features x n) so a batch is a column gather feeding W * X directly.
struct Dataset {
  Eigen::MatrixXd inputs;
  std::vector<int> labels;
  std::string name;

  Index size() const { return inputs.cols(); }
  Index features() const { return inputs.rows(); }
};

/// Reads an IDX image file (magic 0x00000803) and label file (0x00000801).
/// Either may be gzip-compressed. Pixels are scaled to [0, 1].
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Writes `inputs` back as IDX bytes (round(255 x), clamped) with the given
/// image geometry, and the labels as an IDX label file. Uncompressed.
void write_idx(const Dataset& data, Index rows, Index cols, const std::filesystem::path& images,
               const std::filesystem::path& labels);

struct NormalizationStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;  // population standard deviation
  static constexpr double kMinStd = 1e-8;
};

/// Training-set statistics per coordinate.
NormalizationStats compute_stats(const Dataset& train);

/// x' = (x - mean) / std, with coordinates whose std < kMinStd mapped to 0.
void apply_stats(Dataset& data, const NormalizationStats& stats);

struct Standardized {
  Dataset train;
  Dataset test;
  NormalizationStats stats;
};

/// Standardizes both splits with statistics of the training split only.
Standardized standardize(Dataset train, Dataset test);

/// Per-epoch shuffled mini-batches of size round(rho n); the last batch of an
/// epoch may be short.
class MinibatchSchedule {
 public:
  MinibatchSchedule(std::size_t n, double rho, RngStream rng);

  std::size_t batch_size() const { return batch_size_; }
  std::size_t batches_per_epoch() const { return (n_ + batch_size_ - 1) / batch_size_; }

  /// Reshuffles; must be called at the start of every epoch.
  void start_epoch();
  /// Indices of batch b of the current epoch.
  std::span<const std::size_t> batch(std::size_t b) const;

 private:
  std::size_t n_;
  std::size_t batch_size_;
  RngStream rng_;
  std::vector<std::size_t> order_;
};

/// F(theta) = a theta^2 / 2.
struct Parabola {
  double curvature = 1.0;
  double theta0 = 1.0;

  double loss(double theta) const { return 0.5 * curvature * theta * theta; }
  double gradient(double theta) const { return curvature * theta; }
  double optimal_rate() const { return 1.0 / curvature; }
  /// Rate above which a step increases the loss.
  double critical_rate() const { return 2.0 / curvature; }
};

Parabola make_parabola(double curvature, double theta0);

/// Isotropic Gaussian clusters with centres drawn uniformly in [-spread, spread].
Dataset make_blobs(Index n, Index features, int classes, RngStream& rng, double spread = 3.0,
                   double noise = 1.0);

}  // namespace salera

#endif  // SALERA_DATA_HPP
