#include "salera/objective.hpp"

#include <algorithm>

#include "salera/errors.hpp"

namespace salera {

NetworkObjective::NetworkObjective(Network net, const Dataset& data) : net_(std::move(net)), data_(data) {
  if (data_.features() != net_.input_width()) throw DimensionError("NetworkObjective: dataset width does not match network");
}

double NetworkObjective::forward(const FlatVector& theta, Batch batch) {
  const auto b = static_cast<Index>(batch.size());
  inputs_.resize(data_.features(), b);
  labels_.resize(batch.size());
  for (Index j = 0; j < b; ++j) {
    const auto idx = batch[static_cast<std::size_t>(j)];
    inputs_.col(j) = data_.inputs.col(static_cast<Index>(idx));
    labels_[static_cast<std::size_t>(j)] = data_.labels[idx];
  }
  net_.set_parameters(theta);
  cache_ = salera::forward(net_, inputs_);
  last_ = loss_and_error(cache_->logits(), labels_);
  return last_.loss;
}

FlatVector NetworkObjective::backward() {
  if (!cache_) throw ContractViolation("NetworkObjective::backward called before forward");
  return salera::backward(net_, *cache_, labels_);
}

LossAndError evaluate(const Network& shape, const FlatVector& theta, const Dataset& data, Index chunk) {
  Network net = shape;
  net.set_parameters(theta);
  double loss = 0.0, error = 0.0;
  for (Index start = 0; start < data.size(); start += chunk) {
    const Index len = std::min(chunk, data.size() - start);
    const auto cache = forward(net, data.inputs.middleCols(start, len));
    const auto le = loss_and_error(cache.logits(), std::span<const int>(data.labels).subspan(
                                                       static_cast<std::size_t>(start), static_cast<std::size_t>(len)));
    loss += le.loss * static_cast<double>(len);
    error += le.error * static_cast<double>(len);
  }
  const double n = static_cast<double>(data.size());
  return {loss / n, error / n};
}

}  // namespace salera
