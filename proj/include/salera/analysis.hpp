#ifndef SALERA_ANALYSIS_HPP
#define SALERA_ANALYSIS_HPP

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "salera/network.hpp"
#include "salera/vecmath.hpp"

namespace salera {

// ---------------------------------------------------------------------------
// Monte Carlo moments of the random-walk reference.

struct MomentEstimate {
  double alpha = 0.0;
  Index d = 0;
  std::uint64_t t = 0;
  std::uint64_t n_reps = 0;
  double mean_est = 0.0;
  double var_est = 0.0;      // unbiased sample variance
  double stderr_mean = 0.0;  // sqrt(var_est / n_reps)
};

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x);
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Sample mean and unbiased variance, shifted by the first value and summed
/// with compensation. Constant input yields exactly (value, 0).
MomentEstimate summarize(std::span<const double> values);

/// Simulates n_reps independent walks r_s = alpha u_s + (1 - alpha) r_{s-1}
/// for t steps and estimates the moments of |r_t|^2. Replica k draws from
/// rng.split(k), so results do not depend on evaluation order. The squared
/// norm is carried through the recursion
///   |r_s|^2 = (1-a)^2 |r_{s-1}|^2 + 2a(1-a) <u_s, r_{s-1}> + a^2
/// using |u_s| = 1 exactly, so t = 1 gives exactly alpha^2 in every replica.
MomentEstimate monte_carlo_rt(double alpha, Index d, std::uint64_t t, std::uint64_t n_reps, const RngStream& rng,
                              unsigned threads = 1);

/// Same estimator for every (alpha, t) pair at one dimension, with each
/// replica's unit vectors shared across the alphas and read off at every t.
/// Result order: alphas outer, ts inner.
std::vector<MomentEstimate> monte_carlo_rt_grid(std::span<const double> alphas, Index d,
                                                std::span<const std::uint64_t> ts, std::uint64_t n_reps,
                                                const RngStream& rng, unsigned threads = 1);

// ---------------------------------------------------------------------------
// Cost of bringing the rate back after a catastrophe, as a function of the
// dividing factor zeta, in the 1-D quadratic model.

/// Expected rate-adaptation iterations from ]1/2, 1[: (log 2 - 1/2) / eps.
double cost_T(double eps_rate);
/// Expected iterations from ]1/zeta, 1/2[; defined for zeta >= 2.
double cost_U(double zeta, double eps_rate);
/// J(zeta) = C/log zeta + (zeta-2)/(2(zeta-1)) U' + zeta/(2(zeta-1)) T',
/// U' and T' being U and T at eps = 1. Evaluated as written for every zeta > 1.
double cost_J(double zeta, double c_const);

struct CostCurve {
  double c_const = 0.0;
  std::vector<double> zeta;
  std::vector<double> cost;
  double zeta_star = 0.0;
  double cost_star = 0.0;
};

/// Uniform grid lo, lo + step, ..., up to hi inclusive (within step/2).
std::vector<double> zeta_grid(double lo = 1.05, double hi = 20.0, double step = 0.01);

/// Grid argmin of J, refined by the vertex of the parabola through the
/// minimum and its two neighbours when that lowers J.
CostCurve argmin_J(double c_const, std::span<const double> grid);

void write_cost_csv(std::ostream& out, const CostCurve& curve);

// ---------------------------------------------------------------------------
// Finite-difference check of the network gradient.

struct GradCheckResult {
  Index parameters = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  Index worst_index = -1;
};

/// Central differences with step h against backward(). The relative error
/// of coordinate i is |a_i - n_i| / max(|a_i|, |n_i|, floor).
GradCheckResult gradient_check(const Network& net, const Eigen::MatrixXd& inputs, std::span<const int> labels,
                               double h = 1e-6, double floor = 1e-3);

}  // namespace salera

#endif  // SALERA_ANALYSIS_HPP
