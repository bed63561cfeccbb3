#include "salera/page_hinkley.hpp"

#include <algorithm>

namespace salera {

PHState ph_init(double first_batch_loss, double lambda) {
  if (!(first_batch_loss > 0.0) || !std::isfinite(first_batch_loss))
    throw ParameterError("ph_init: first mini-batch loss must be finite and > 0");
  if (!(lambda > 0.0)) throw ParameterError("ph_init: lambda must be > 0");
  return ph_with_threshold(first_batch_loss / lambda);
}

PHState ph_with_threshold(double threshold) {
  if (!(threshold > 0.0)) throw ParameterError("ph_with_threshold: threshold must be > 0");
  PHState s;
  s.threshold = threshold;
  return s;
}

Verdict ph_observe(PHState& s, double batch_loss, double rho) {
  if (!(rho > 0.0 && rho <= 1.0)) throw ParameterError("ph_observe: rho must lie in (0, 1]");
  ++s.observed;
  if (!std::isfinite(batch_loss)) return Verdict::Triggered;

  s.t_ph += 1;
  s.smoothed = rho * batch_loss + (1.0 - rho) * s.smoothed;
  const double t = static_cast<double>(s.t_ph);
  s.running_mean = (s.smoothed + t * s.running_mean) / (t + 1.0);
  s.cumulated += s.smoothed - s.running_mean;
  s.cumulated_min = std::min(s.cumulated_min, s.cumulated);

  if (s.observed <= s.warmup) return Verdict::Ok;
  return s.gap() > s.threshold ? Verdict::Triggered : Verdict::Ok;
}

void ph_reset(PHState& s) {
  s.t_ph = 0;
  s.smoothed = 0.0;
  s.running_mean = 0.0;
  s.cumulated = 0.0;
  s.cumulated_min = 0.0;
}

}  // namespace salera
