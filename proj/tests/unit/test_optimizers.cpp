#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <limits>

#include "salera/objective.hpp"
#include "salera/optimizers.hpp"

using namespace salera;

namespace {

// Loss and gradient supplied by the test.
class ScriptedObjective final : public Objective {
 public:
  ScriptedObjective(Partition part, std::function<double(const FlatVector&)> loss,
                    std::function<FlatVector(const FlatVector&)> grad)
      : part_(std::move(part)), loss_(std::move(loss)), grad_(std::move(grad)) {}
  const Partition& partition() const override { return part_; }
  double forward(const FlatVector& theta, Batch) override {
    at_ = theta;
    ++forwards;
    return loss_(theta);
  }
  FlatVector backward() override {
    ++backwards;
    return grad_(at_);
  }
  int forwards = 0, backwards = 0;

 private:
  Partition part_;
  std::function<double(const FlatVector&)> loss_;
  std::function<FlatVector(const FlatVector&)> grad_;
  FlatVector at_;
};

struct BlobsFixture {
  Dataset data;
  Network net;
  BlobsFixture() {
    RngStream rng(31);
    data = make_blobs(400, 6, 4, rng);
    net = init_glorot(Network::m2(6, 8, 5, 4).layers(), rng);
  }
};

std::vector<FlatVector> trajectory(const OptimizerConfig& cfg, const BlobsFixture& f, int steps) {
  NetworkObjective obj(f.net, f.data);
  FlatVector theta = f.net.parameters();
  Optimizer opt(cfg, f.net.partition(), theta);
  MinibatchSchedule sched(static_cast<std::size_t>(f.data.size()), 0.05, RngStream(8));
  std::vector<FlatVector> out;
  for (int s = 0; s < steps; ++s) {
    if (s % static_cast<int>(sched.batches_per_epoch()) == 0) sched.start_epoch();
    opt.step(theta, obj, sched.batch(static_cast<std::size_t>(s) % sched.batches_per_epoch()));
    out.push_back(theta);
  }
  return out;
}

}  // namespace

TEST(Sgd, Examples) {
  FlatVector theta{{1.0, 1.0}};
  sgd_apply(theta, FlatVector{{1.0, 0.0}}, 0.5);
  EXPECT_EQ(theta, (FlatVector{{0.5, 1.0}}));
  sgd_apply(theta, FlatVector::Zero(2), 0.5);
  EXPECT_EQ(theta, (FlatVector{{0.5, 1.0}}));
  FlatVector one{{1.0}};
  sgd_apply(one, FlatVector{{1.0}}, 1.0);  // F = theta^2/2, eta* = 1
  EXPECT_EQ(one[0], 0.0);
}

TEST(Nag, HandExecutionOnParabola) {
  NagState s{FlatVector::Zero(1)};
  FlatVector theta{{1.0}};
  auto grad = [](const FlatVector& at, FlatVector& g) {
    g = at;
    return 0.5 * at.squaredNorm();
  };
  nag_apply(s, theta, grad, 0.1, 0.9);
  EXPECT_NEAR(s.velocity[0], -0.1, 1e-16);
  EXPECT_NEAR(theta[0], 0.9, 1e-16);
  nag_apply(s, theta, grad, 0.1, 0.9);
  EXPECT_NEAR(s.velocity[0], -0.171, 1e-15);
  EXPECT_NEAR(theta[0], 0.729, 1e-15);
}

TEST(Nag, ZeroMomentumIsSgd) {
  NagState s{FlatVector::Zero(3)};
  FlatVector a{{1.0, -2.0, 0.5}}, b = a;
  auto grad = [](const FlatVector& at, FlatVector& g) {
    g = at.array().sin().matrix();
    return 0.0;
  };
  for (int i = 0; i < 20; ++i) {
    nag_apply(s, a, grad, 0.3, 0.0);
    sgd_apply(b, FlatVector(b.array().sin().matrix()), 0.3);
    ASSERT_EQ(a, b);
  }
}

TEST(Adagrad, Examples) {
  AdagradState s{FlatVector::Zero(3)};
  FlatVector theta = FlatVector::Zero(3);
  adagrad_apply(s, theta, FlatVector{{2.0, -0.5, 0.0}}, 0.1, 1e-8);
  EXPECT_NEAR(theta[0], -0.1 * 2.0 / (2.0 + 1e-8), 1e-17);
  EXPECT_NEAR(theta[1], 0.1 * 0.5 / (0.5 + 1e-8), 1e-17);
  EXPECT_NEAR(theta[1], 0.1, 1e-8);
  EXPECT_EQ(theta[2], 0.0);

  AdagradState t{FlatVector::Zero(1)};
  FlatVector x{{0.0}};
  adagrad_apply(t, x, FlatVector{{3.0}}, 1.0, 0.0);
  EXPECT_EQ(x[0], -1.0);
  adagrad_apply(t, x, FlatVector{{3.0}}, 1.0, 0.0);
  EXPECT_NEAR(x[0], -1.0 - 3.0 / std::sqrt(18.0), 1e-15);
  EXPECT_NEAR(x[0] + 1.0, -0.7071, 1e-4);
}

TEST(Adam, Examples) {
  AdamState s{FlatVector::Zero(1), FlatVector::Zero(1), 0};
  FlatVector theta{{0.0}};
  adam_apply(s, theta, FlatVector{{2.0}}, 0.1, 0.9, 0.999, 1e-8);
  EXPECT_NEAR(theta[0], -0.1 * 2.0 / (2.0 + 1e-8), 1e-16);
  EXPECT_NEAR(theta[0], -0.0999999995, 1e-12);

  AdamState z{FlatVector::Zero(2), FlatVector::Zero(2), 0};
  FlatVector fixed{{1.0, 2.0}};
  for (int i = 0; i < 5; ++i) adam_apply(z, fixed, FlatVector::Zero(2), 0.1, 0.9, 0.999, 1e-8);
  EXPECT_EQ(fixed, (FlatVector{{1.0, 2.0}}));
}

TEST(Alera, RateRisesOnRepeatedDirection) {
  const Partition part = Partition::whole(3);
  AleraState s(part, 0.5, 0.1);
  FlatVector theta = FlatVector::Zero(3);
  const FlatVector g{{0.0, 3.0, 4.0}};
  alera_step(s, theta, g, part, 0.2);
  const double eta1 = s.rates[0];
  alera_step(s, theta, g, part, 0.2);
  EXPECT_NEAR(s.paths[0].p.squaredNorm(), 0.5625, 1e-15);
  EXPECT_GT(s.paths[0].p.squaredNorm(), 1.0 / 3.0);
  EXPECT_GT(s.rates[0], eta1);
}

TEST(Alera, ZeroLayerGradientSkipsThatLayer) {
  const Partition part({{"a", 0, 2}, {"b", 2, 2}});
  AleraState s(part, 0.1, 0.1);
  FlatVector theta{{1.0, 1.0, 1.0, 1.0}};
  alera_step(s, theta, FlatVector{{0.0, 0.0, 1.0, 0.0}}, part, 0.1);
  EXPECT_EQ(s.paths[0].t, 0u);
  EXPECT_EQ(s.rates[0], 0.1);
  EXPECT_EQ(theta[0], 1.0);
  EXPECT_EQ(theta[1], 1.0);
  EXPECT_EQ(s.paths[1].t, 1u);
  EXPECT_NE(theta[2], 1.0);
}

TEST(Alera, PathAtMeanGivesPlainSgdStep) {
  const Partition part = Partition::whole(1);
  AleraState s(part, 0.5, 0.1);
  // alpha = .5 on d = 1: the path after one step is 0.5 u, |p|^2 = .25; set
  // the reference mean there so the exponent vanishes.
  s.refs[0].mu = 0.25;
  FlatVector theta{{1.0}};
  alera_step(s, theta, FlatVector{{2.0}}, part, 1.0);
  EXPECT_EQ(s.rates[0], 0.1);
  EXPECT_EQ(theta[0], 1.0 - 0.1 * 2.0);
}

TEST(Spalera, MultiplierAtMeanKeepsPlainSgd) {
  SpaleraState s(Partition::whole(2), 0.5, 0.2);
  s.refs[0].mu_pw = 0.125;  // after one step p = 0.5 g/|g|, p_i^2 = 0.125 for g = (1, 1)
  FlatVector theta{{1.0, 1.0}};
  spalera_inner_step(s, theta, FlatVector{{1.0, 1.0}}, 1.0);
  EXPECT_NEAR(s.multipliers[0], 1.0, 1e-15);
  EXPECT_NEAR(theta[0], 0.8, 1e-15);
}

TEST(Optimizer, ZeroGradientLeavesThetaUnchanged) {
  for (int v = 0; v < 8; ++v) {
    OptimizerConfig cfg;
    cfg.variant = static_cast<Variant>(v);
    cfg.ph_threshold = std::numeric_limits<double>::infinity();
    const Partition part({{"a", 0, 2}, {"b", 2, 3}});
    ScriptedObjective obj(part, [](const FlatVector&) { return 1.0; },
                          [](const FlatVector& t) { return FlatVector::Zero(t.size()); });
    FlatVector theta{{0.1, 0.2, 0.3, 0.4, 0.5}};
    const FlatVector start = theta;
    Optimizer opt(cfg, part, theta);
    for (int i = 0; i < 5; ++i) opt.step(theta, obj, {});
    EXPECT_EQ(theta, start) << to_string(cfg.variant);
  }
}

TEST(Optimizer, VariantNames) {
  for (int v = 0; v < 8; ++v) EXPECT_EQ(parse_variant(to_string(static_cast<Variant>(v))), static_cast<Variant>(v));
  EXPECT_EQ(parse_variant("ag-adam"), Variant::AgAdam);
  EXPECT_EQ(parse_variant("salera"), Variant::SALeRA);
  EXPECT_THROW(parse_variant("rmsprop"), ParameterError);
}

TEST(Optimizer, ConfigValidation) {
  OptimizerConfig cfg;
  cfg.eta0 = 0.0;
  EXPECT_THROW(cfg.validate(), ParameterError);
  cfg.eta0 = std::numeric_limits<double>::infinity();
  EXPECT_THROW(cfg.validate(), ParameterError);
  cfg = {};
  cfg.alpha = 1.0;
  EXPECT_THROW(cfg.validate(), ParameterError);
  cfg = {};
  cfg.beta2 = 1.0;
  EXPECT_THROW(cfg.validate(), ParameterError);
  cfg = {};
  cfg.rho = 0.0;
  EXPECT_THROW(cfg.validate(), ParameterError);
  EXPECT_THROW(Optimizer(OptimizerConfig{}, Partition::whole(3), FlatVector::Zero(4)), DimensionError);
}

TEST(Equivalence, SaleraWithInfiniteThresholdIsAlera) {
  BlobsFixture f;
  OptimizerConfig a;
  a.variant = Variant::ALeRA;
  a.eta0 = 0.05;
  a.gain = 1e-3;
  OptimizerConfig s = a;
  s.variant = Variant::SALeRA;
  s.ph_threshold = std::numeric_limits<double>::infinity();
  EXPECT_EQ(trajectory(a, f, 100), trajectory(s, f, 100));
}

TEST(Equivalence, AleraWithZeroGainIsSgd) {
  BlobsFixture f;
  OptimizerConfig a;
  a.variant = Variant::ALeRA;
  a.eta0 = 0.05;
  a.gain = 0.0;
  OptimizerConfig s = a;
  s.variant = Variant::SGD;
  EXPECT_EQ(trajectory(a, f, 100), trajectory(s, f, 100));
}

TEST(Equivalence, AgAdamWithZeroGainIsAdam) {
  BlobsFixture f;
  OptimizerConfig a;
  a.variant = Variant::AgAdam;
  a.eta0 = 0.01;
  a.gain = 0.0;
  OptimizerConfig s = a;
  s.variant = Variant::Adam;
  EXPECT_EQ(trajectory(a, f, 100), trajectory(s, f, 100));
}

TEST(Equivalence, LayerwiseOffIsGlobalAlera) {
  BlobsFixture f;
  OptimizerConfig cfg;
  cfg.variant = Variant::ALeRA;
  cfg.eta0 = 0.05;
  cfg.gain = 1e-2;
  cfg.layerwise = false;
  NetworkObjective obj(f.net, f.data);
  FlatVector theta = f.net.parameters();
  Optimizer opt(cfg, f.net.partition(), theta);
  EXPECT_EQ(opt.rates().size(), 1u);

  // Same run driven by the primitive with one segment.
  const Partition whole = Partition::whole(theta.size());
  AleraState state(whole, cfg.alpha, cfg.eta0);
  FlatVector manual = theta;
  NetworkObjective obj2(f.net, f.data);
  MinibatchSchedule sched(400, 0.05, RngStream(8));
  sched.start_epoch();
  for (std::size_t b = 0; b < 20; ++b) {
    opt.step(theta, obj, sched.batch(b));
    obj2.forward(manual, sched.batch(b));
    alera_step(state, manual, obj2.backward(), whole, cfg.gain);
    ASSERT_EQ(theta, manual);
  }
}

TEST(Salera, StationaryHighLossHalvesRatesAndPinsTheta) {
  OptimizerConfig cfg;
  cfg.variant = Variant::SALeRA;
  cfg.eta0 = 0.8;
  cfg.rho = 0.5;
  cfg.ph_threshold = 1e-6;
  const Partition part({{"a", 0, 1}, {"b", 1, 1}});
  ScriptedObjective obj(part, [](const FlatVector&) { return 10.0; },
                        [](const FlatVector&) { return FlatVector{{1.0, 1.0}}; });
  FlatVector theta{{1.0, 2.0}};
  const FlatVector start = theta;
  Optimizer opt(cfg, part, theta);
  for (int k = 1; k <= 10; ++k) {
    const auto r = opt.step(theta, obj, {});
    ASSERT_EQ(r.verdict, Verdict::Triggered);
    ASSERT_FALSE(r.backward_ran);
    ASSERT_EQ(theta, start);
    ASSERT_EQ(opt.rates()[0], 0.8 / std::pow(2.0, k));
    ASSERT_EQ(opt.rates()[1], 0.8 / std::pow(2.0, k));
  }
  EXPECT_EQ(obj.backwards, 0);
}

TEST(Salera, NanLossTriggersRollback) {
  OptimizerConfig cfg;
  cfg.variant = Variant::SALeRA;
  cfg.eta0 = 0.1;
  cfg.rho = 0.1;
  cfg.ph_threshold = 10.0;  // only the NaN can trigger
  const Partition part = Partition::whole(1);
  int call = 0;
  ScriptedObjective obj(part, [&](const FlatVector&) { return ++call == 3 ? std::nan("") : 1.0; },
                        [](const FlatVector&) { return FlatVector{{1.0}}; });
  FlatVector theta{{0.0}};
  Optimizer opt(cfg, part, theta);
  opt.step(theta, obj, {});
  const FlatVector accepted_before_step2 = theta;
  const auto r2 = opt.step(theta, obj, {});
  EXPECT_EQ(r2.verdict, Verdict::Ok);
  const FlatVector after2 = theta;
  const auto r3 = opt.step(theta, obj, {});
  EXPECT_EQ(r3.verdict, Verdict::Triggered);
  // Rollback target is the parameters saved before step 2's update.
  EXPECT_EQ(theta, accepted_before_step2);
  EXPECT_NE(theta, after2);
  EXPECT_EQ(r3.rates_after[0], r3.rates_before[0] / 2.0);
}

TEST(Salera, RestoredThetaReproducesCheckpointLoss) {
  BlobsFixture f;
  OptimizerConfig cfg;
  cfg.variant = Variant::SALeRA;
  cfg.eta0 = 20.0;  // large enough to blow up and trigger
  cfg.rho = 0.2;
  NetworkObjective obj(f.net, f.data);
  FlatVector theta = f.net.parameters();
  Optimizer opt(cfg, f.net.partition(), theta);
  MinibatchSchedule sched(400, 0.05, RngStream(2));
  sched.start_epoch();
  FlatVector prev_accepted = theta;
  int triggers = 0;
  for (std::size_t b = 0; b < 20; ++b) {
    const FlatVector before = theta;
    const auto r = opt.step(theta, obj, sched.batch(b));
    if (r.verdict == Verdict::Triggered) {
      ++triggers;
      EXPECT_EQ(theta, prev_accepted);
      NetworkObjective probe(f.net, f.data);
      const double l1 = probe.forward(theta, sched.batch(b));
      const double l2 = probe.forward(prev_accepted, sched.batch(b));
      EXPECT_EQ(l1, l2);
    } else {
      prev_accepted = before;
    }
  }
  EXPECT_GT(triggers, 0);
}

TEST(Salera, PathNormAndRatePositivityInvariants) {
  BlobsFixture f;
  for (Variant v : {Variant::ALeRA, Variant::SALeRA, Variant::SPALeRA, Variant::AgAdam}) {
    OptimizerConfig cfg;
    cfg.variant = v;
    cfg.eta0 = 0.5;
    cfg.gain = 0.05;
    cfg.rho = 0.05;
    NetworkObjective obj(f.net, f.data);
    FlatVector theta = f.net.parameters();
    Optimizer opt(cfg, f.net.partition(), theta);
    MinibatchSchedule sched(400, 0.05, RngStream(3));
    for (int e = 0; e < 5; ++e) {
      sched.start_epoch();
      for (std::size_t b = 0; b < sched.batches_per_epoch(); ++b) {
        opt.step(theta, obj, sched.batch(b));
        for (double n2 : opt.path_norms_sq()) ASSERT_LE(n2, 1.0 + 1e-12);
        for (double r : opt.rates()) ASSERT_GT(r, 0.0);
        if (v == Variant::SPALeRA) {
          ASSERT_TRUE((opt.multipliers().array() > 0).all());
        }
      }
    }
  }
}

TEST(Spalera, OneDimensionMatchesGlobalSalera) {
  const Partition part = Partition::whole(1);
  auto make = [](Variant v) {
    OptimizerConfig cfg;
    cfg.variant = v;
    cfg.eta0 = 0.3;
    cfg.gain = 0.05;
    cfg.alpha = 0.2;
    cfg.rho = 0.3;
    cfg.layerwise = false;
    return cfg;
  };
  // Gradient sign flips with theta; loss has a bump to exercise triggers.
  auto loss = [](const FlatVector& t) { return 0.5 * t[0] * t[0] + (std::abs(t[0]) > 3 ? 50.0 : 0.0) + 0.01; };
  auto grad = [](const FlatVector& t) { return FlatVector{{t[0] + 0.3}}; };
  ScriptedObjective o1(part, loss, grad), o2(part, loss, grad);
  FlatVector a{{2.0}}, b{{2.0}};
  Optimizer sal(make(Variant::SALeRA), part, a), spa(make(Variant::SPALeRA), part, b);
  for (int i = 0; i < 200; ++i) {
    const auto r1 = sal.step(a, o1, {});
    const auto r2 = spa.step(b, o2, {});
    ASSERT_EQ(r1.verdict, r2.verdict) << i;
    ASSERT_NEAR(a[0], b[0], 1e-12 * std::max(1.0, std::abs(a[0]))) << i;
    ASSERT_NEAR(sal.rates()[0], spa.rates()[0] * spa.multipliers()[0], 1e-12 * sal.rates()[0]) << i;
  }
}

TEST(Spalera, TriggerHalvesScaleKeepsMultipliers) {
  OptimizerConfig cfg;
  cfg.variant = Variant::SPALeRA;
  cfg.eta0 = 0.4;
  cfg.rho = 1.0;
  cfg.ph_threshold = 1e-9;
  const Partition part = Partition::whole(2);
  ScriptedObjective obj(part, [](const FlatVector&) { return 5.0; },
                        [](const FlatVector&) { return FlatVector{{1.0, 0.0}}; });
  FlatVector theta{{1.0, 1.0}};
  Optimizer opt(cfg, part, theta);
  const auto r = opt.step(theta, obj, {});
  EXPECT_EQ(r.verdict, Verdict::Triggered);
  EXPECT_EQ(opt.rates()[0], 0.2);
  EXPECT_EQ(opt.multipliers(), FlatVector::Ones(2));
}

TEST(AgAdam, CoherentGradientOutpacesAdam) {
  const Partition part = Partition::whole(4);
  auto run = [&](Variant v) {
    OptimizerConfig cfg;
    cfg.variant = v;
    cfg.eta0 = 1e-3;
    cfg.gain = 0.1;
    cfg.alpha = 0.1;
    ScriptedObjective obj(part, [](const FlatVector&) { return 1.0; },
                          [](const FlatVector&) { return FlatVector{{1.0, -2.0, 0.5, 0.0}}; });
    FlatVector theta = FlatVector::Zero(4);
    Optimizer opt(cfg, part, theta);
    std::vector<double> steps;
    for (int i = 0; i < 60; ++i) {
      const FlatVector before = theta;
      opt.step(theta, obj, {});
      steps.push_back((theta - before).norm());
    }
    return steps;
  };
  const auto ag = run(Variant::AgAdam), ad = run(Variant::Adam);
  for (std::size_t i = 30; i < ag.size(); ++i) EXPECT_GT(ag[i], ad[i]) << i;
}

TEST(Nag, OptimizerReportsLookaheadLoss) {
  OptimizerConfig cfg;
  cfg.variant = Variant::NAG;
  cfg.eta0 = 0.1;
  cfg.momentum = 0.9;
  const Partition part = Partition::whole(1);
  ParabolaObjective obj(make_parabola(1.0, 1.0));
  FlatVector theta{{1.0}};
  Optimizer opt(cfg, part, theta);
  opt.step(theta, obj, {});
  const auto r = opt.step(theta, obj, {});
  EXPECT_NEAR(r.raw_loss, 0.5 * 0.81 * 0.81, 1e-15);
  EXPECT_NEAR(theta[0], 0.729, 1e-15);
}
