#ifndef SALERA_OPTIMIZERS_HPP
#define SALERA_OPTIMIZERS_HPP

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "salera/agnostic.hpp"
#include "salera/objective.hpp"
#include "salera/page_hinkley.hpp"
#include "salera/vecmath.hpp"

namespace salera {

enum class Variant { SGD, NAG, Adagrad, Adam, ALeRA, SALeRA, SPALeRA, AgAdam };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);
bool uses_page_hinkley(Variant v);

struct OptimizerConfig {
  Variant variant = Variant::SALeRA;
  double eta0 = 0.01;
  double momentum = 0.9;  // NAG gamma
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;  // Adagrad / Adam denominator
  double alpha = 0.01;    // path memory rate
  double gain = 3e-6;     // C
  double rho = 0.01;      // mini-batch ratio, also the loss smoothing factor
  double ph_lambda = 10.0;
  std::optional<double> ph_threshold;  // replaces first-loss / lambda when set
  std::uint64_t ph_warmup_batches = 0;
  bool layerwise = true;           // per-layer rates for ALeRA, SALeRA, AgAdam
  bool spalera_layerwise = false;  // per-layer paths for SPALeRA

  void validate() const;
};

// ---------------------------------------------------------------------------
// Update primitives. Each works on any Eigen vector expression, so the
// stateful driver can apply them to whole vectors or to layer segments.

/// theta <- theta - eta g
template <typename DT, typename DG>
void sgd_apply(Eigen::MatrixBase<DT>& theta, const Eigen::MatrixBase<DG>& g, double eta) {
  theta -= eta * g;
}

struct NagState {
  FlatVector velocity;
};

/// Sutskever form: v <- gamma v - eta grad(theta + gamma v); theta <- theta + v.
/// Returns the loss reported by grad_at at the look-ahead point.
template <typename GradFn>
double nag_apply(NagState& s, FlatVector& theta, GradFn&& grad_at, double eta, double gamma) {
  const FlatVector lookahead = theta + gamma * s.velocity;
  FlatVector g;
  const double loss = grad_at(lookahead, g);
  s.velocity = gamma * s.velocity - eta * g;
  theta += s.velocity;
  return loss;
}

struct AdagradState {
  FlatVector sum_sq;
};

/// G <- G + g^2; theta <- theta - eta g / (sqrt(G) + eps)
template <typename DG>
void adagrad_apply(AdagradState& s, FlatVector& theta, const Eigen::MatrixBase<DG>& g, double eta, double eps) {
  s.sum_sq.array() += g.array().square();
  theta.array() -= eta * g.array() / (s.sum_sq.array().sqrt() + eps);
}

struct AdamState {
  FlatVector m;
  FlatVector v;
  std::uint64_t t = 0;
};

/// Bias-corrected Adam on one slice; `t` is the already-incremented step.
inline void adam_update(Eigen::Ref<FlatVector> m, Eigen::Ref<FlatVector> v, Eigen::Ref<FlatVector> theta,
                        const Eigen::Ref<const FlatVector>& g, std::uint64_t t, double eta, double beta1,
                        double beta2, double eps) {
  m = beta1 * m + (1.0 - beta1) * g;
  v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  theta.array() -= eta * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

inline void adam_apply(AdamState& s, FlatVector& theta, const Eigen::Ref<const FlatVector>& g, double eta,
                       double beta1, double beta2, double eps) {
  ++s.t;
  adam_update(s.m, s.v, theta, g, s.t, eta, beta1, beta2, eps);
}

/// Per-layer agnostic state: one path, one reference and one rate per layer.
struct AleraState {
  std::vector<PathState<double>> paths;
  std::vector<AgnosticReference<double>> refs;
  FlatVector rates;

  AleraState() = default;
  AleraState(const Partition& layers, double alpha, double eta0);
};

/// Path and rate update of one layer from its gradient slice. A zero (or
/// non-finite) gradient norm leaves path and rate untouched. Returns the
/// layer's rate for this step.
template <typename DG>
double agnostic_layer_update(AleraState& s, std::size_t layer, const Eigen::MatrixBase<DG>& g, double gain) {
  auto& path = s.paths[layer];
  const double gnorm = g.norm();
  if (gnorm > 0.0 && std::isfinite(gnorm)) {
    update_path_inplace(path.p, g, s.refs[layer].alpha);
    ++path.t;
    s.rates[layer] = lr_update(s.rates[layer], path.p, s.refs[layer], gain);
  }
  return s.rates[layer];
}

/// ALeRA inner update: per layer, path, rate, then theta_L -= eta_L g_L.
void alera_step(AleraState& s, FlatVector& theta, const FlatVector& g, const Partition& layers, double gain);

/// Agnostic rate on top of Adam: the path uses the raw gradient, the rate
/// replaces Adam's step size for that layer.
void agadam_step(AleraState& s, AdamState& adam, FlatVector& theta, const FlatVector& g, const Partition& layers,
                 const OptimizerConfig& cfg);

/// Parameter-wise state: effective rate of coordinate i is scale * m_i.
struct SpaleraState {
  std::vector<PathState<double>> paths;
  std::vector<AgnosticReference<double>> refs;
  Partition groups;  // one segment unless per-layer paths are enabled
  FlatVector multipliers;
  double scale = 0.0;

  SpaleraState() = default;
  SpaleraState(Partition groups, double alpha, double eta0);
};

void spalera_inner_step(SpaleraState& s, FlatVector& theta, const FlatVector& g, double gain);

// ---------------------------------------------------------------------------

struct StepReport {
  std::uint64_t global_batch = 0;
  double raw_loss = 0.0;
  double smoothed_loss = 0.0;
  Verdict verdict = Verdict::Ok;
  double ph_gap = 0.0;
  double ph_threshold = 0.0;
  std::vector<double> rates_before;
  std::vector<double> rates_after;
  bool backward_ran = false;
};

/// One training run's optimizer: owns the variant's state and, for SALeRA
/// and SPALeRA, the Page-Hinkley detector and the rollback checkpoint.
class Optimizer {
 public:
  Optimizer(OptimizerConfig cfg, const Partition& layers, const FlatVector& theta0);

  /// One mini-batch: forward pass, detection where applicable, then either
  /// rollback with halved rates or backward pass plus update.
  StepReport step(FlatVector& theta, Objective& objective, Batch batch);

  const OptimizerConfig& config() const { return cfg_; }
  std::uint64_t global_batches() const { return global_batches_; }

  /// Per-layer rates for the agnostic layer-wise variants, {scale} for
  /// SPALeRA, {eta0} for the baselines.
  std::vector<double> rates() const;
  /// Squared path norm per layer (empty for baselines).
  std::vector<double> path_norms_sq() const;
  const FlatVector& multipliers() const { return spalera_.multipliers; }
  const PHState& page_hinkley() const { return ph_; }
  bool page_hinkley_armed() const { return ph_armed_; }

 private:
  OptimizerConfig cfg_;
  Partition layers_;
  std::uint64_t global_batches_ = 0;
  double smoothed_ = 0.0;

  NagState nag_;
  AdagradState adagrad_;
  AdamState adam_;
  AleraState alera_;
  SpaleraState spalera_;

  PHState ph_;
  bool ph_armed_ = false;
  Checkpoint checkpoint_;
};

}  // namespace salera

#endif  // SALERA_OPTIMIZERS_HPP
