#ifndef SALERA_OBJECTIVE_HPP
#define SALERA_OBJECTIVE_HPP

#include <optional>
#include <span>

#include "salera/data.hpp"
#include "salera/network.hpp"
#include "salera/vecmath.hpp"

namespace salera {

using Batch = std::span<const std::size_t>;

/// A differentiable mini-batch loss. forward() and backward() are split so a
/// caller can inspect the loss and skip the backward pass entirely.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual const Partition& partition() const = 0;
  Index dimension() const { return partition().dimension(); }

  /// Loss at theta on the batch. Keeps whatever backward() needs.
  virtual double forward(const FlatVector& theta, Batch batch) = 0;
  /// Gradient of the loss computed by the most recent forward().
  virtual FlatVector backward() = 0;
};

/// Mean cross-entropy of a Network over examples of a Dataset.
class NetworkObjective final : public Objective {
 public:
  NetworkObjective(Network net, const Dataset& data);

  const Partition& partition() const override { return net_.partition(); }
  double forward(const FlatVector& theta, Batch batch) override;
  FlatVector backward() override;

  /// Error rate of the most recent forward().
  double last_error() const { return last_.error; }
  const Network& network() const { return net_; }

 private:
  Network net_;
  const Dataset& data_;
  Eigen::MatrixXd inputs_;
  std::vector<int> labels_;
  std::optional<ForwardCache> cache_;
  LossAndError last_;
};

/// Deterministic 1-D parabola; the batch is ignored.
class ParabolaObjective final : public Objective {
 public:
  explicit ParabolaObjective(Parabola f) : f_(f), partition_(Partition::whole(1, "theta")) {}

  const Partition& partition() const override { return partition_; }
  double forward(const FlatVector& theta, Batch) override {
    at_ = theta[0];
    return f_.loss(at_);
  }
  FlatVector backward() override { return FlatVector::Constant(1, f_.gradient(at_)); }

  const Parabola& function() const { return f_; }

 private:
  Parabola f_;
  Partition partition_;
  double at_ = 0.0;
};

/// Loss and error of a network (given parameters) over a whole dataset,
/// evaluated in chunks.
LossAndError evaluate(const Network& shape, const FlatVector& theta, const Dataset& data, Index chunk = 2000);

}  // namespace salera

#endif  // SALERA_OBJECTIVE_HPP
