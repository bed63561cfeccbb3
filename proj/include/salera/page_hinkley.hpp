#ifndef SALERA_PAGE_HINKLEY_HPP
#define SALERA_PAGE_HINKLEY_HPP

#include <cmath>
#include <cstdint>
#include <limits>

#include "salera/vecmath.hpp"

namespace salera {

enum class Verdict { Ok, Triggered };

/// One-sided Page-Hinkley detector on the smoothed mini-batch loss. Only
/// increases are monitored; the margin delta of the classical test is 0.
struct PHState {
  std::uint64_t t_ph = 0;       // local counter, zeroed on reset
  double smoothed = 0.0;        // l
  double running_mean = 0.0;    // l-bar
  double cumulated = 0.0;       // L = sum (l - l-bar)
  double cumulated_min = 0.0;   // L_min, includes the initial 0
  double threshold = std::numeric_limits<double>::infinity();  // Delta

  // Verdicts are suppressed for the first `warmup` observations of the run.
  // `observed` counts every observation and is never reset.
  std::uint64_t warmup = 0;
  std::uint64_t observed = 0;

  double gap() const { return cumulated - cumulated_min; }
};

/// Delta = first_batch_loss / lambda, all accumulators zero.
PHState ph_init(double first_batch_loss, double lambda = 10.0);

/// State with an explicit threshold. Use +infinity to disable detection.
PHState ph_with_threshold(double threshold);

/// Feeds one raw mini-batch loss, smoothed with ratio rho. A non-finite loss
/// is reported as Triggered without touching the accumulators.
Verdict ph_observe(PHState& state, double batch_loss, double rho);

/// Zeroes t_ph and the accumulators; threshold and run counters survive.
void ph_reset(PHState& state);

/// Last accepted parameter vector. Starts out holding the initial parameters
/// so a trigger before any accepted step restores them.
class Checkpoint {
 public:
  Checkpoint() = default;
  explicit Checkpoint(const FlatVector& initial) : theta_(initial) {}

  void save(const FlatVector& theta) {
    theta_ = theta;
    populated_ = true;
  }
  const FlatVector& saved() const { return theta_; }
  bool populated() const { return populated_; }

 private:
  FlatVector theta_;
  bool populated_ = false;
};

/// Restores theta from the checkpoint and halves every rate in `rates`
/// (a scalar or any Eigen vector of per-layer rates).
template <typename Rates>
void backtrack(FlatVector& theta, const Checkpoint& cp, Rates& rates) {
  if (cp.saved().size() != theta.size()) throw ContractViolation("backtrack: checkpoint is empty or mis-sized");
  theta = cp.saved();
  rates /= 2;
}

}  // namespace salera

#endif  // SALERA_PAGE_HINKLEY_HPP
