#ifndef SALERA_AGNOSTIC_HPP
#define SALERA_AGNOSTIC_HPP

// Moments of the random-walk reference r_t = alpha*u_t + (1-alpha)*r_{t-1},
// u_t uniform on the unit sphere, and the learning-rate updates that compare
// the gradient path against it.

#include <cmath>
#include <cstdint>

#include "salera/vecmath.hpp"

namespace salera {

namespace detail {

template <typename Scalar>
void check_alpha_open(Scalar alpha, const char* where) {
  if (!(alpha > Scalar(0) && alpha < Scalar(1)))
    throw ParameterError(std::string(where) + ": alpha must lie in (0, 1)");
}

template <typename Scalar>
Scalar ipow(Scalar base, std::uint64_t e) {
  Scalar r(1);
  while (e) {
    if (e & 1u) r *= base;
    base *= base;
    e >>= 1u;
  }
  return r;
}

}  // namespace detail

/// E|r_t|^2 = alpha/(2-alpha) * (1 - (1-alpha)^{2t}).
template <typename Scalar = double>
Scalar mean_t(Scalar alpha, std::uint64_t t) {
  if (!(alpha > Scalar(0) && alpha <= Scalar(1))) throw ParameterError("mean_t: alpha must lie in (0, 1]");
  if (t == 1) return alpha * alpha;  // exact, the general form rounds
  const Scalar q = Scalar(1) - alpha;
  return alpha / (Scalar(2) - alpha) * (Scalar(1) - detail::ipow(q, 2 * t));
}

/// Finite-t variance of |r_t|^2 in the closed form the rate rule uses
///   (1/d) 2a^2(1-a)^2 / ((2-a)^2((1-a)^2+1)) [1-(1-a)^t][1-(1-a)^{t-1}].
/// This is the quantity the rate update is normalized by (its t -> inf limit).
/// It is NOT the exact variance of the walk; see exact_var_t.
template <typename Scalar = double>
Scalar var_t(Scalar alpha, Index d, std::uint64_t t) {
  detail::check_alpha_open(alpha, "var_t");
  if (d < 1) throw DimensionError("var_t: dimension must be >= 1");
  if (t == 0) return Scalar(0);
  const Scalar q = Scalar(1) - alpha;
  const Scalar limit = Scalar(2) * alpha * alpha * q * q /
                       ((Scalar(2) - alpha) * (Scalar(2) - alpha) * (q * q + Scalar(1))) / Scalar(d);
  return limit * (Scalar(1) - detail::ipow(q, t)) * (Scalar(1) - detail::ipow(q, t - 1));
}

/// Exact variance of |r_t|^2. Cross terms <u_l,u_k> are pairwise uncorrelated
/// with variance 1/d, so Var = (2 a^4 / d) (S2^2 - S4) with
/// S2 = sum_{j<t} (1-a)^{2j}, S4 = sum_{j<t} (1-a)^{4j}.
/// Its limit is exactly twice the limit of var_t.
template <typename Scalar = double>
Scalar exact_var_t(Scalar alpha, Index d, std::uint64_t t) {
  if (!(alpha > Scalar(0) && alpha <= Scalar(1))) throw ParameterError("exact_var_t: alpha must lie in (0, 1]");
  if (d < 1) throw DimensionError("exact_var_t: dimension must be >= 1");
  if (t < 2) return Scalar(0);
  const Scalar q2 = (Scalar(1) - alpha) * (Scalar(1) - alpha);
  const Scalar q4 = q2 * q2;
  const Scalar s2 = (Scalar(1) - detail::ipow(q2, t)) / (Scalar(1) - q2);
  const Scalar s4 = (Scalar(1) - detail::ipow(q4, t)) / (Scalar(1) - q4);
  const Scalar a2 = alpha * alpha;
  return Scalar(2) * a2 * a2 / Scalar(d) * (s2 * s2 - s4);
}

/// Asymptotic reference moments for memory rate alpha in dimension d.
template <typename Scalar = double>
struct AgnosticReference {
  Scalar alpha;
  Index d;
  Scalar mu;
  Scalar sigma;
  Scalar mu_pw;     // mu / d, per-coordinate mean
  Scalar sigma_pw;  // sigma / sqrt(d)
};

template <typename Scalar = double>
AgnosticReference<Scalar> make_reference(Scalar alpha, Index d) {
  detail::check_alpha_open(alpha, "make_reference");
  if (d < 1) throw DimensionError("make_reference: dimension must be >= 1");
  const Scalar q = Scalar(1) - alpha;
  const Scalar two_minus = Scalar(2) - alpha;
  const Scalar var = Scalar(2) * alpha * alpha * q * q / (two_minus * two_minus * (q * q + Scalar(1))) / Scalar(d);
  AgnosticReference<Scalar> ref;
  ref.alpha = alpha;
  ref.d = d;
  ref.mu = alpha / two_minus;
  ref.sigma = std::sqrt(var);
  ref.mu_pw = ref.mu / Scalar(d);
  ref.sigma_pw = ref.sigma / std::sqrt(Scalar(d));
  return ref;
}

/// Exponential moving average of normalized gradients and its step count.
template <typename Scalar = double>
struct PathState {
  Vector<Scalar> p;
  std::uint64_t t = 0;

  PathState() = default;
  explicit PathState(Index d) : p(Vector<Scalar>::Zero(d)) {}
};

/// eta * exp(C (|p|^2 - mu) / sigma).
template <typename Derived>
typename Derived::Scalar lr_update(typename Derived::Scalar eta, const Eigen::MatrixBase<Derived>& p,
                                   const AgnosticReference<typename Derived::Scalar>& ref,
                                   typename Derived::Scalar gain) {
  if (!(eta > 0)) throw ParameterError("lr_update: learning rate must be > 0");
  return eta * std::exp(gain * (p.squaredNorm() - ref.mu) / ref.sigma);
}

/// m_i <- m_i * exp(C (p_i^2 - mu/d) / (sigma/sqrt d)), in place.
template <typename DerivedM, typename DerivedP>
void lr_update_paramwise_inplace(Eigen::MatrixBase<DerivedM>& m, const Eigen::MatrixBase<DerivedP>& p,
                                 const AgnosticReference<typename DerivedM::Scalar>& ref,
                                 typename DerivedM::Scalar gain) {
  if (m.size() != p.size()) throw DimensionError("lr_update_paramwise: multiplier and path differ in size");
  m = (m.array() * (gain * (p.array().square() - ref.mu_pw) / ref.sigma_pw).exp()).matrix();
}

template <typename DerivedM, typename DerivedP>
Vector<typename DerivedM::Scalar> lr_update_paramwise(const Eigen::MatrixBase<DerivedM>& m,
                                                      const Eigen::MatrixBase<DerivedP>& p,
                                                      const AgnosticReference<typename DerivedM::Scalar>& ref,
                                                      typename DerivedM::Scalar gain) {
  if ((m.array() <= 0).any()) throw ParameterError("lr_update_paramwise: multipliers must be > 0");
  Vector<typename DerivedM::Scalar> out = m;
  lr_update_paramwise_inplace(out, p, ref, gain);
  return out;
}

}  // namespace salera

#endif  // SALERA_AGNOSTIC_HPP
