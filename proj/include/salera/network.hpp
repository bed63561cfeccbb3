#ifndef SALERA_NETWORK_HPP
#define SALERA_NETWORK_HPP

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "salera/vecmath.hpp"

namespace salera {

enum class Activation : std::uint32_t { Identity = 0, ReLU = 1 };

struct DenseLayer {
  Index inputs = 0;
  Index outputs = 0;
  Activation activation = Activation::Identity;
};

/// Fully connected feed-forward classifier. Parameters live in one flat
/// vector; layer k occupies [weights (outputs x inputs, column-major) | bias].
/// Each layer is one Partition segment, so layer-wise rate control sees the
/// weight matrix and its bias as a unit.
class Network {
 public:
  Network() = default;
  explicit Network(std::vector<DenseLayer> layers);

  /// Softmax regression: inputs -> classes.
  static Network m0(Index inputs = 784, Index classes = 10);
  /// Two ReLU hidden layers on top of softmax regression.
  static Network m2(Index inputs = 784, Index hidden1 = 500, Index hidden2 = 300, Index classes = 10);

  const std::vector<DenseLayer>& layers() const { return layers_; }
  const Partition& partition() const { return partition_; }
  Index parameter_count() const { return partition_.dimension(); }
  Index input_width() const { return layers_.front().inputs; }
  Index classes() const { return layers_.back().outputs; }

  const FlatVector& parameters() const { return params_; }
  void set_parameters(const FlatVector& theta);
  /// Every write through this handle invalidates outstanding forward caches.
  FlatVector& mutable_parameters() {
    ++version_;
    return params_;
  }
  std::uint64_t version() const { return version_; }

  Eigen::Map<const Eigen::MatrixXd> weights(std::size_t layer) const;
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t layer) const;
  Eigen::Map<Eigen::MatrixXd> weights(std::size_t layer);
  Eigen::Map<Eigen::VectorXd> bias(std::size_t layer);

 private:
  std::vector<DenseLayer> layers_;
  Partition partition_;
  FlatVector params_;
  std::uint64_t version_ = 0;
};

/// Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)); zero biases.
Network init_glorot(std::vector<DenseLayer> layers, RngStream& rng);

/// Per-layer pre-activations and activations of one mini-batch. Columns are
/// examples. activations[0] is the input, activations.back() the logits.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> pre;
  std::vector<Eigen::MatrixXd> activations;
  const Network* network = nullptr;
  std::uint64_t version = 0;

  const Eigen::MatrixXd& logits() const { return activations.back(); }
};

/// inputs: input_width x batch.
ForwardCache forward(const Network& net, const Eigen::Ref<const Eigen::MatrixXd>& inputs);

/// Column-wise softmax with max subtraction.
Eigen::MatrixXd softmax(const Eigen::Ref<const Eigen::MatrixXd>& logits);

struct LossAndError {
  double loss = 0.0;   // mean cross-entropy
  double error = 0.0;  // fraction of argmax mismatches
};

/// Argmax ties go to the lowest class index.
LossAndError loss_and_error(const Eigen::Ref<const Eigen::MatrixXd>& logits, std::span<const int> labels);

/// Gradient of the mean cross-entropy with respect to the flat parameters.
/// Throws ContractViolation if the cache no longer matches the network.
FlatVector backward(const Network& net, const ForwardCache& cache, std::span<const int> labels);

/// Binary snapshot: "SALR", u32 version, u32 layer count, per layer
/// (u32 inputs, u32 outputs, u32 activation), u64 parameter count, then the
/// parameters as little-endian IEEE-754 doubles.
void save_snapshot(const std::filesystem::path& path, const Network& net);
Network load_snapshot(const std::filesystem::path& path);

}  // namespace salera

#endif  // SALERA_NETWORK_HPP
