#ifndef SALERA_VECMATH_HPP
#define SALERA_VECMATH_HPP

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "salera/errors.hpp"

namespace salera {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Parameter, gradient and path vectors. All arithmetic is double precision.
using FlatVector = Vector<double>;

/// A named contiguous slice [start, start + length) of a flat vector.
struct Segment {
  std::string name;
  Index start = 0;
  Index length = 0;
};

/// Layer boundaries over a flat vector. Segments are contiguous, disjoint and
/// cover [0, dimension()) in order.
class Partition {
 public:
  Partition() = default;
  explicit Partition(std::vector<Segment> segments);

  /// One segment named `name` spanning all of [0, d).
  static Partition whole(Index d, std::string name = "all");

  Index dimension() const { return dimension_; }
  std::size_t size() const { return segments_.size(); }
  const Segment& operator[](std::size_t i) const { return segments_[i]; }
  auto begin() const { return segments_.begin(); }
  auto end() const { return segments_.end(); }

  template <typename Derived>
  auto slice(Eigen::MatrixBase<Derived>& v, std::size_t i) const {
    return v.segment(segments_[i].start, segments_[i].length);
  }
  template <typename Derived>
  auto slice(const Eigen::MatrixBase<Derived>& v, std::size_t i) const {
    return v.segment(segments_[i].start, segments_[i].length);
  }

 private:
  std::vector<Segment> segments_;
  Index dimension_ = 0;
};

/// Seeded xoshiro256** stream. Identical seeds and call order produce
/// identical sequences; split() derives independent child streams for
/// parallel replicas or grid cells.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t seed = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()();

  std::uint64_t seed() const { return seed_; }

  /// Child stream keyed by `stream_id`; does not advance this stream.
  RngStream split(std::uint64_t stream_id) const;

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [0, n). Unbiased.
  std::uint64_t uniform_index(std::uint64_t n);
  /// Standard normal (Marsaglia polar method).
  double normal();

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Sum of squares. Expression-friendly: accepts any Eigen vector expression.
template <typename Derived>
typename Derived::Scalar norm_sq(const Eigen::MatrixBase<Derived>& v) {
  return v.squaredNorm();
}

/// Overwrites u with a uniform draw on the unit sphere S^{d-1}, d = u.size():
/// normalized standard Gaussian, redrawn on the (measure-zero) all-zero sample.
template <typename Derived>
void fill_unit_vector(Eigen::MatrixBase<Derived>& u, RngStream& rng) {
  using Scalar = typename Derived::Scalar;
  if (u.size() < 1) throw DimensionError("sample_unit_vector: dimension must be >= 1");
  for (;;) {
    for (Index i = 0; i < u.size(); ++i) u[i] = static_cast<Scalar>(rng.normal());
    const Scalar n2 = u.squaredNorm();
    if (n2 > Scalar(0)) {
      u /= std::sqrt(n2);
      return;
    }
  }
}

template <typename Scalar = double>
Vector<Scalar> sample_unit_vector(Index d, RngStream& rng) {
  if (d < 1) throw DimensionError("sample_unit_vector: dimension must be >= 1");
  Vector<Scalar> u(d);
  fill_unit_vector(u, rng);
  return u;
}

/// In-place exponential moving average of normalized gradients:
/// p <- alpha * g/|g| + (1 - alpha) * p.
template <typename DerivedP, typename DerivedG>
void update_path_inplace(Eigen::MatrixBase<DerivedP>& p, const Eigen::MatrixBase<DerivedG>& g,
                         typename DerivedP::Scalar alpha) {
  using Scalar = typename DerivedP::Scalar;
  if (p.size() != g.size()) throw DimensionError("update_path: path and gradient differ in size");
  if (!(alpha > Scalar(0) && alpha <= Scalar(1)))
    throw ParameterError("update_path: alpha must lie in (0, 1]");
  const Scalar gnorm = g.norm();
  if (!(gnorm > Scalar(0))) throw ZeroGradientError("update_path: gradient has zero norm");
  p = alpha * (g / gnorm) + (Scalar(1) - alpha) * p;
}

template <typename DerivedP, typename DerivedG>
Vector<typename DerivedP::Scalar> update_path(const Eigen::MatrixBase<DerivedP>& p,
                                              const Eigen::MatrixBase<DerivedG>& g,
                                              typename DerivedP::Scalar alpha) {
  Vector<typename DerivedP::Scalar> out = p;
  update_path_inplace(out, g, alpha);
  return out;
}

}  // namespace salera

#endif  // SALERA_VECMATH_HPP
