#include "salera/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <ostream>
#include <thread>

#include "salera/errors.hpp"

namespace salera {

namespace {

void check_walk_args(double alpha, Index d, std::uint64_t n_reps) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ParameterError("monte_carlo_rt: alpha must lie in (0, 1]");
  if (d < 1) throw DimensionError("monte_carlo_rt: dimension must be >= 1");
  if (n_reps < 100) throw ParameterError("monte_carlo_rt: at least 100 replicas required");
}

// Runs body(k) for k in [0, n), split into contiguous chunks across threads.
void for_each_replica(std::uint64_t n, unsigned threads, const std::function<void(std::uint64_t)>& body) {
  threads = std::max(1u, threads);
  if (threads == 1) {
    for (std::uint64_t k = 0; k < n; ++k) body(k);
    return;
  }
  std::vector<std::jthread> pool;
  const std::uint64_t chunk = (n + threads - 1) / threads;
  for (unsigned w = 0; w < threads; ++w) {
    const std::uint64_t lo = w * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &body] {
      for (std::uint64_t k = lo; k < hi; ++k) body(k);
    });
  }
}

}  // namespace

void CompensatedSum::add(double x) {
  const double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x))
    comp_ += (sum_ - t) + x;
  else
    comp_ += (x - t) + sum_;
  sum_ = t;
}

MomentEstimate summarize(std::span<const double> values) {
  if (values.size() < 2) throw ParameterError("summarize: at least two values required");
  const double shift = values.front();
  CompensatedSum s;
  for (double v : values) s.add(v - shift);
  const double n = static_cast<double>(values.size());
  const double mean_shifted = s.value() / n;
  CompensatedSum ss;
  for (double v : values) {
    const double dev = (v - shift) - mean_shifted;
    ss.add(dev * dev);
  }
  MomentEstimate m;
  m.n_reps = values.size();
  m.mean_est = shift + mean_shifted;
  m.var_est = ss.value() / (n - 1.0);
  m.stderr_mean = std::sqrt(m.var_est / n);
  return m;
}

MomentEstimate monte_carlo_rt(double alpha, Index d, std::uint64_t t, std::uint64_t n_reps, const RngStream& rng,
                              unsigned threads) {
  const double a = alpha;
  const std::uint64_t ts[] = {t};
  auto out = monte_carlo_rt_grid(std::span<const double>(&a, 1), d, ts, n_reps, rng, threads);
  return out.front();
}

std::vector<MomentEstimate> monte_carlo_rt_grid(std::span<const double> alphas, Index d,
                                                std::span<const std::uint64_t> ts, std::uint64_t n_reps,
                                                const RngStream& rng, unsigned threads) {
  for (double a : alphas) check_walk_args(a, d, n_reps);
  if (alphas.empty() || ts.empty()) throw ParameterError("monte_carlo_rt_grid: empty alpha or t list");
  const std::uint64_t t_max = *std::max_element(ts.begin(), ts.end());
  const std::size_t na = alphas.size(), nt = ts.size();

  // samples[(ia * nt + it) * n_reps + k]
  std::vector<double> samples(na * nt * n_reps);
  for_each_replica(n_reps, threads, [&](std::uint64_t k) {
    RngStream stream = rng.split(k);
    FlatVector u(d);
    std::vector<FlatVector> r(na, FlatVector::Zero(d));
    std::vector<double> sq(na, 0.0);
    for (std::uint64_t s = 1; s <= t_max; ++s) {
      fill_unit_vector(u, stream);
      for (std::size_t ia = 0; ia < na; ++ia) {
        const double a = alphas[ia], q = 1.0 - a;
        sq[ia] = q * q * sq[ia] + 2.0 * a * q * u.dot(r[ia]) + a * a;
        r[ia] = a * u + q * r[ia];
      }
      for (std::size_t it = 0; it < nt; ++it)
        if (ts[it] == s)
          for (std::size_t ia = 0; ia < na; ++ia) samples[(ia * nt + it) * n_reps + k] = sq[ia];
    }
  });

  std::vector<MomentEstimate> out;
  for (std::size_t ia = 0; ia < na; ++ia)
    for (std::size_t it = 0; it < nt; ++it) {
      MomentEstimate m;
      if (ts[it] == 0) {
        m.n_reps = n_reps;  // r_0 = 0 deterministically
      } else {
        m = summarize(std::span<const double>(samples).subspan((ia * nt + it) * n_reps, n_reps));
      }
      m.alpha = alphas[ia];
      m.d = d;
      m.t = ts[it];
      out.push_back(m);
    }
  return out;
}

double cost_T(double eps_rate) {
  if (!(eps_rate > 0.0)) throw DomainError("cost_T: rate step must be > 0");
  return (std::numbers::ln2 - 0.5) / eps_rate;
}

double cost_U(double zeta, double eps_rate) {
  if (!(eps_rate > 0.0)) throw DomainError("cost_U: rate step must be > 0");
  if (!(zeta >= 2.0)) throw DomainError("cost_U: defined for zeta >= 2 only");
  return (0.5 - std::log(zeta) / zeta - (1.0 - std::numbers::ln2) / zeta) / eps_rate;
}

double cost_J(double zeta, double c_const) {
  if (!(zeta > 1.0)) throw DomainError("cost_J: zeta must be > 1");
  const double lz = std::log(zeta);
  const double u = 0.5 - lz / zeta - (1.0 - std::numbers::ln2) / zeta;
  const double t = std::numbers::ln2 - 0.5;
  return c_const / lz + 0.5 * (zeta - 2.0) / (zeta - 1.0) * u + 0.5 * zeta / (zeta - 1.0) * t;
}

std::vector<double> zeta_grid(double lo, double hi, double step) {
  if (!(lo > 1.0) || !(hi > lo) || !(step > 0.0)) throw DomainError("zeta_grid: need 1 < lo < hi and step > 0");
  std::vector<double> g;
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 0.5));
  for (std::size_t k = 0; k <= n; ++k) g.push_back(lo + static_cast<double>(k) * step);
  return g;
}

CostCurve argmin_J(double c_const, std::span<const double> grid) {
  if (grid.size() < 3) throw DomainError("argmin_J: grid needs at least three points");
  CostCurve c;
  c.c_const = c_const;
  c.zeta.assign(grid.begin(), grid.end());
  c.cost.reserve(grid.size());
  for (double z : grid) c.cost.push_back(cost_J(z, c_const));
  const auto best = static_cast<std::size_t>(std::min_element(c.cost.begin(), c.cost.end()) - c.cost.begin());
  c.zeta_star = c.zeta[best];
  c.cost_star = c.cost[best];
  if (best > 0 && best + 1 < grid.size()) {
    const double x0 = c.zeta[best - 1], x1 = c.zeta[best], x2 = c.zeta[best + 1];
    const double y0 = c.cost[best - 1], y1 = c.cost[best], y2 = c.cost[best + 1];
    const double num = (x1 - x0) * (x1 - x0) * (y1 - y2) - (x1 - x2) * (x1 - x2) * (y1 - y0);
    const double den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0);
    if (den != 0.0) {
      const double xv = x1 - 0.5 * num / den;
      if (xv > x0 && xv < x2) {
        const double yv = cost_J(xv, c_const);
        if (yv < c.cost_star) {
          c.zeta_star = xv;
          c.cost_star = yv;
        }
      }
    }
  }
  return c;
}

void write_cost_csv(std::ostream& out, const CostCurve& curve) {
  out << "zeta,J\n";
  out.precision(17);
  for (std::size_t i = 0; i < curve.zeta.size(); ++i) out << curve.zeta[i] << ',' << curve.cost[i] << '\n';
}

GradCheckResult gradient_check(const Network& shape, const Eigen::MatrixXd& inputs, std::span<const int> labels,
                               double h, double floor) {
  Network net = shape;
  const auto cache = forward(net, inputs);
  const FlatVector analytic = backward(net, cache, labels);
  const FlatVector theta = net.parameters();

  GradCheckResult res;
  res.parameters = theta.size();
  FlatVector probe = theta;
  for (Index i = 0; i < theta.size(); ++i) {
    probe[i] = theta[i] + h;
    net.set_parameters(probe);
    const double up = loss_and_error(forward(net, inputs).logits(), labels).loss;
    probe[i] = theta[i] - h;
    net.set_parameters(probe);
    const double down = loss_and_error(forward(net, inputs).logits(), labels).loss;
    probe[i] = theta[i];
    const double numeric = (up - down) / (2.0 * h);
    const double abs_err = std::abs(analytic[i] - numeric);
    const double rel = abs_err / std::max({std::abs(analytic[i]), std::abs(numeric), floor});
    res.max_abs_error = std::max(res.max_abs_error, abs_err);
    if (res.worst_index < 0 || rel > res.max_rel_error) {
      res.max_rel_error = rel;
      res.worst_index = i;
    }
  }
  return res;
}

}  // namespace salera
