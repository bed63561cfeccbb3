#include "salera/optimizers.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace salera {

namespace {

constexpr std::array<std::pair<Variant, std::string_view>, 8> kNames{{
    {Variant::SGD, "SGD"},
    {Variant::NAG, "NAG"},
    {Variant::Adagrad, "Adagrad"},
    {Variant::Adam, "Adam"},
    {Variant::ALeRA, "ALeRA"},
    {Variant::SALeRA, "SALeRA"},
    {Variant::SPALeRA, "SPALeRA"},
    {Variant::AgAdam, "AgAdam"},
}};

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
         });
}

std::vector<double> to_std(const FlatVector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

std::string_view to_string(Variant v) {
  for (const auto& [var, name] : kNames)
    if (var == v) return name;
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (const auto& [var, n] : kNames)
    if (iequals(n, name)) return var;
  if (iequals(name, "Ag-Adam")) return Variant::AgAdam;
  throw ParameterError("unknown optimizer '" + std::string(name) + "'");
}

bool uses_page_hinkley(Variant v) { return v == Variant::SALeRA || v == Variant::SPALeRA; }

void OptimizerConfig::validate() const {
  if (!(eta0 > 0.0 && std::isfinite(eta0))) throw ParameterError("eta0 must be finite and > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ParameterError("momentum must lie in [0, 1)");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
    throw ParameterError("beta1 and beta2 must lie in (0, 1)");
  if (!(epsilon >= 0.0)) throw ParameterError("epsilon must be >= 0");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("alpha must lie in (0, 1)");
  if (!(gain >= 0.0 && std::isfinite(gain))) throw ParameterError("C must be >= 0");
  if (!(rho > 0.0 && rho <= 1.0)) throw ParameterError("rho must lie in (0, 1]");
  if (!(ph_lambda > 0.0)) throw ParameterError("lambda must be > 0");
  if (ph_threshold && !(*ph_threshold > 0.0)) throw ParameterError("PH threshold must be > 0");
}

AleraState::AleraState(const Partition& layers, double alpha, double eta0)
    : rates(FlatVector::Constant(static_cast<Index>(layers.size()), eta0)) {
  for (const auto& seg : layers) {
    paths.emplace_back(seg.length);
    refs.push_back(make_reference(alpha, seg.length));
  }
}

void alera_step(AleraState& s, FlatVector& theta, const FlatVector& g, const Partition& layers, double gain) {
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto gk = layers.slice(g, k);
    const double eta = agnostic_layer_update(s, k, gk, gain);
    auto tk = layers.slice(theta, k);
    sgd_apply(tk, gk, eta);
  }
}

void agadam_step(AleraState& s, AdamState& adam, FlatVector& theta, const FlatVector& g, const Partition& layers,
                 const OptimizerConfig& cfg) {
  ++adam.t;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& seg = layers[k];
    const auto gk = g.segment(seg.start, seg.length);
    const double eta = agnostic_layer_update(s, k, gk, cfg.gain);
    adam_update(adam.m.segment(seg.start, seg.length), adam.v.segment(seg.start, seg.length),
                theta.segment(seg.start, seg.length), gk, adam.t, eta, cfg.beta1, cfg.beta2, cfg.epsilon);
  }
}

SpaleraState::SpaleraState(Partition groups_in, double alpha, double eta0)
    : groups(std::move(groups_in)), multipliers(FlatVector::Ones(groups.dimension())), scale(eta0) {
  for (const auto& seg : groups) {
    paths.emplace_back(seg.length);
    refs.push_back(make_reference(alpha, seg.length));
  }
}

void spalera_inner_step(SpaleraState& s, FlatVector& theta, const FlatVector& g, double gain) {
  for (std::size_t k = 0; k < s.groups.size(); ++k) {
    const auto& seg = s.groups[k];
    const auto gk = g.segment(seg.start, seg.length);
    const double gnorm = gk.norm();
    auto mk = s.multipliers.segment(seg.start, seg.length);
    if (gnorm > 0.0 && std::isfinite(gnorm)) {
      update_path_inplace(s.paths[k].p, gk, s.refs[k].alpha);
      ++s.paths[k].t;
      lr_update_paramwise_inplace(mk, s.paths[k].p, s.refs[k], gain);
    }
    theta.segment(seg.start, seg.length).array() -= (s.scale * mk.array()) * gk.array();
  }
}

Optimizer::Optimizer(OptimizerConfig cfg, const Partition& layers, const FlatVector& theta0)
    : cfg_(cfg), layers_(layers), checkpoint_(theta0) {
  cfg_.validate();
  if (theta0.size() != layers.dimension()) throw DimensionError("Optimizer: theta0 does not match partition");
  const Index d = layers.dimension();
  const Partition agnostic_layers = cfg_.layerwise ? layers : Partition::whole(d);
  switch (cfg_.variant) {
    case Variant::SGD:
      break;
    case Variant::NAG:
      nag_.velocity = FlatVector::Zero(d);
      break;
    case Variant::Adagrad:
      adagrad_.sum_sq = FlatVector::Zero(d);
      break;
    case Variant::Adam:
      adam_ = {FlatVector::Zero(d), FlatVector::Zero(d), 0};
      break;
    case Variant::AgAdam:
      adam_ = {FlatVector::Zero(d), FlatVector::Zero(d), 0};
      layers_ = agnostic_layers;
      alera_ = AleraState(layers_, cfg_.alpha, cfg_.eta0);
      break;
    case Variant::ALeRA:
    case Variant::SALeRA:
      layers_ = agnostic_layers;
      alera_ = AleraState(layers_, cfg_.alpha, cfg_.eta0);
      break;
    case Variant::SPALeRA:
      spalera_ = SpaleraState(cfg_.spalera_layerwise ? layers : Partition::whole(d), cfg_.alpha, cfg_.eta0);
      break;
  }
}

std::vector<double> Optimizer::rates() const {
  switch (cfg_.variant) {
    case Variant::ALeRA:
    case Variant::SALeRA:
    case Variant::AgAdam:
      return to_std(alera_.rates);
    case Variant::SPALeRA:
      return {spalera_.scale};
    default:
      return {cfg_.eta0};
  }
}

std::vector<double> Optimizer::path_norms_sq() const {
  std::vector<double> out;
  for (const auto& p : alera_.paths) out.push_back(p.p.squaredNorm());
  for (const auto& p : spalera_.paths) out.push_back(p.p.squaredNorm());
  return out;
}

StepReport Optimizer::step(FlatVector& theta, Objective& objective, Batch batch) {
  StepReport r;
  r.global_batch = ++global_batches_;
  r.rates_before = rates();

  if (cfg_.variant == Variant::NAG) {
    r.raw_loss = nag_apply(
        nag_, theta,
        [&](const FlatVector& at, FlatVector& g) {
          const double loss = objective.forward(at, batch);
          g = objective.backward();
          return loss;
        },
        cfg_.eta0, cfg_.momentum);
    r.backward_ran = true;
    smoothed_ = cfg_.rho * r.raw_loss + (1.0 - cfg_.rho) * smoothed_;
    r.smoothed_loss = smoothed_;
    r.rates_after = rates();
    return r;
  }

  r.raw_loss = objective.forward(theta, batch);

  if (uses_page_hinkley(cfg_.variant)) {
    if (!ph_armed_) {
      ph_ = cfg_.ph_threshold ? ph_with_threshold(*cfg_.ph_threshold) : ph_init(r.raw_loss, cfg_.ph_lambda);
      ph_.warmup = cfg_.ph_warmup_batches;
      ph_armed_ = true;
    }
    r.verdict = ph_observe(ph_, r.raw_loss, cfg_.rho);
    r.smoothed_loss = ph_.smoothed;
    r.ph_gap = ph_.gap();
    r.ph_threshold = ph_.threshold;
    if (r.verdict == Verdict::Triggered) {
      if (cfg_.variant == Variant::SALeRA)
        backtrack(theta, checkpoint_, alera_.rates);
      else
        backtrack(theta, checkpoint_, spalera_.scale);
      ph_reset(ph_);
      r.rates_after = rates();
      return r;
    }
    checkpoint_.save(theta);
  } else {
    smoothed_ = cfg_.rho * r.raw_loss + (1.0 - cfg_.rho) * smoothed_;
    r.smoothed_loss = smoothed_;
  }

  const FlatVector g = objective.backward();
  r.backward_ran = true;
  switch (cfg_.variant) {
    case Variant::SGD:
      sgd_apply(theta, g, cfg_.eta0);
      break;
    case Variant::Adagrad:
      adagrad_apply(adagrad_, theta, g, cfg_.eta0, cfg_.epsilon);
      break;
    case Variant::Adam:
      adam_apply(adam_, theta, g, cfg_.eta0, cfg_.beta1, cfg_.beta2, cfg_.epsilon);
      break;
    case Variant::ALeRA:
    case Variant::SALeRA:
      alera_step(alera_, theta, g, layers_, cfg_.gain);
      break;
    case Variant::AgAdam:
      agadam_step(alera_, adam_, theta, g, layers_, cfg_);
      break;
    case Variant::SPALeRA:
      spalera_inner_step(spalera_, theta, g, cfg_.gain);
      break;
    case Variant::NAG:
      break;
  }
  r.rates_after = rates();
  return r;
}

}  // namespace salera
