#include "salera/network.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "salera/errors.hpp"

namespace salera {

namespace {

constexpr char kMagic[4] = {'S', 'A', 'L', 'R'};
constexpr std::uint32_t kSnapshotVersion = 1;

Index layer_size(const DenseLayer& l) { return l.outputs * l.inputs + l.outputs; }

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T>);
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in, const char* field) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T)))
    throw FormatError(std::string("snapshot: truncated at ") + field);
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

Network::Network(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw DimensionError("Network: at least one layer required");
  std::vector<Segment> segments;
  Index offset = 0;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& l = layers_[k];
    if (l.inputs < 1 || l.outputs < 1) throw DimensionError("Network: layer widths must be >= 1");
    if (k > 0 && layers_[k - 1].outputs != l.inputs)
      throw DimensionError("Network: layer " + std::to_string(k) + " input width does not match previous output");
    segments.push_back({"dense" + std::to_string(k), offset, layer_size(l)});
    offset += layer_size(l);
  }
  partition_ = Partition(std::move(segments));
  params_ = FlatVector::Zero(offset);
}

Network Network::m0(Index inputs, Index classes) {
  return Network({{inputs, classes, Activation::Identity}});
}

Network Network::m2(Index inputs, Index hidden1, Index hidden2, Index classes) {
  return Network({{inputs, hidden1, Activation::ReLU},
                  {hidden1, hidden2, Activation::ReLU},
                  {hidden2, classes, Activation::Identity}});
}

void Network::set_parameters(const FlatVector& theta) {
  if (theta.size() != params_.size()) throw DimensionError("Network::set_parameters: size mismatch");
  params_ = theta;
  ++version_;
}

Eigen::Map<const Eigen::MatrixXd> Network::weights(std::size_t k) const {
  const auto& l = layers_[k];
  return {params_.data() + partition_[k].start, l.outputs, l.inputs};
}

Eigen::Map<const Eigen::VectorXd> Network::bias(std::size_t k) const {
  const auto& l = layers_[k];
  return {params_.data() + partition_[k].start + l.outputs * l.inputs, l.outputs};
}

Eigen::Map<Eigen::MatrixXd> Network::weights(std::size_t k) {
  const auto& l = layers_[k];
  ++version_;
  return {params_.data() + partition_[k].start, l.outputs, l.inputs};
}

Eigen::Map<Eigen::VectorXd> Network::bias(std::size_t k) {
  const auto& l = layers_[k];
  ++version_;
  return {params_.data() + partition_[k].start + l.outputs * l.inputs, l.outputs};
}

Network init_glorot(std::vector<DenseLayer> layers, RngStream& rng) {
  Network net(std::move(layers));
  for (std::size_t k = 0; k < net.layers().size(); ++k) {
    const auto& l = net.layers()[k];
    const double bound = std::sqrt(6.0 / static_cast<double>(l.inputs + l.outputs));
    auto w = net.weights(k);
    for (Index j = 0; j < w.cols(); ++j)
      for (Index i = 0; i < w.rows(); ++i) w(i, j) = bound * (2.0 * rng.uniform() - 1.0);
    net.bias(k).setZero();
  }
  return net;
}

ForwardCache forward(const Network& net, const Eigen::Ref<const Eigen::MatrixXd>& inputs) {
  if (inputs.rows() != net.input_width())
    throw DimensionError("forward: input width " + std::to_string(inputs.rows()) + " does not match network input " +
                         std::to_string(net.input_width()));
  ForwardCache cache;
  cache.network = &net;
  cache.version = net.version();
  cache.activations.reserve(net.layers().size() + 1);
  cache.pre.reserve(net.layers().size());
  cache.activations.emplace_back(inputs);
  for (std::size_t k = 0; k < net.layers().size(); ++k) {
    Eigen::MatrixXd z = net.weights(k) * cache.activations.back();
    z.colwise() += net.bias(k);
    cache.pre.push_back(z);
    if (net.layers()[k].activation == Activation::ReLU) z = z.cwiseMax(0.0);
    cache.activations.push_back(std::move(z));
  }
  return cache;
}

Eigen::MatrixXd softmax(const Eigen::Ref<const Eigen::MatrixXd>& logits) {
  Eigen::MatrixXd p = logits.rowwise() - logits.colwise().maxCoeff();
  p = p.array().exp();
  p.array().rowwise() /= p.colwise().sum().array();
  return p;
}

LossAndError loss_and_error(const Eigen::Ref<const Eigen::MatrixXd>& logits, std::span<const int> labels) {
  if (static_cast<Index>(labels.size()) != logits.cols())
    throw DimensionError("loss_and_error: label count does not match batch size");
  const Index classes = logits.rows();
  double loss = 0.0;
  Index wrong = 0;
  for (Index j = 0; j < logits.cols(); ++j) {
    const int y = labels[static_cast<std::size_t>(j)];
    if (y < 0 || y >= classes) throw ParameterError("loss_and_error: label out of range");
    const auto col = logits.col(j);
    Index best = 0;
    const double m = col.maxCoeff(&best);  // first maximum on ties
    const double lse = m + std::log((col.array() - m).exp().sum());
    loss += lse - col[y];
    // A diverged network (non-finite logits) never counts as correct.
    if (best != y || !std::isfinite(lse)) ++wrong;
  }
  const double n = static_cast<double>(logits.cols());
  return {loss / n, static_cast<double>(wrong) / n};
}

FlatVector backward(const Network& net, const ForwardCache& cache, std::span<const int> labels) {
  if (cache.network != &net || cache.version != net.version())
    throw ContractViolation("backward: forward cache is stale for this network");
  const Index batch = cache.logits().cols();
  if (static_cast<Index>(labels.size()) != batch) throw DimensionError("backward: label count does not match batch");

  FlatVector grad(net.parameter_count());
  Eigen::MatrixXd delta = softmax(cache.logits());
  for (Index j = 0; j < batch; ++j) delta(labels[static_cast<std::size_t>(j)], j) -= 1.0;
  delta /= static_cast<double>(batch);

  for (std::size_t k = net.layers().size(); k-- > 0;) {
    const auto& l = net.layers()[k];
    const Index start = net.partition()[k].start;
    Eigen::Map<Eigen::MatrixXd> dw(grad.data() + start, l.outputs, l.inputs);
    Eigen::Map<Eigen::VectorXd> db(grad.data() + start + l.outputs * l.inputs, l.outputs);
    dw.noalias() = delta * cache.activations[k].transpose();
    db = delta.rowwise().sum();
    if (k > 0) {
      Eigen::MatrixXd upstream = net.weights(k).transpose() * delta;
      if (net.layers()[k - 1].activation == Activation::ReLU)
        upstream = (cache.pre[k - 1].array() > 0.0).select(upstream, 0.0);
      delta = std::move(upstream);
    }
  }
  return grad;
}

void save_snapshot(const std::filesystem::path& path, const Network& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_snapshot: cannot open " + path.string());
  out.write(kMagic, 4);
  put_le<std::uint32_t>(out, kSnapshotVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(net.layers().size()));
  for (const auto& l : net.layers()) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.inputs));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.outputs));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.activation));
  }
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(net.parameter_count()));
  for (Index i = 0; i < net.parameter_count(); ++i) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(net.parameters()[i]));
  if (!out) throw std::runtime_error("save_snapshot: write failed for " + path.string());
}

Network load_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_snapshot: cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw FormatError("snapshot: bad magic");
  if (get_le<std::uint32_t>(in, "version") != kSnapshotVersion) throw FormatError("snapshot: unsupported version");
  const auto count = get_le<std::uint32_t>(in, "layer count");
  std::vector<DenseLayer> layers;
  for (std::uint32_t k = 0; k < count; ++k) {
    DenseLayer l;
    l.inputs = get_le<std::uint32_t>(in, "layer inputs");
    l.outputs = get_le<std::uint32_t>(in, "layer outputs");
    const auto act = get_le<std::uint32_t>(in, "layer activation");
    if (act > 1) throw FormatError("snapshot: unknown activation");
    l.activation = static_cast<Activation>(act);
    layers.push_back(l);
  }
  Network net(std::move(layers));
  const auto n = get_le<std::uint64_t>(in, "parameter count");
  if (n != static_cast<std::uint64_t>(net.parameter_count())) throw FormatError("snapshot: parameter count mismatch");
  FlatVector theta(net.parameter_count());
  for (Index i = 0; i < theta.size(); ++i) theta[i] = std::bit_cast<double>(get_le<std::uint64_t>(in, "parameters"));
  net.set_parameters(theta);
  return net;
}

}  // namespace salera
