#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "crane/config.hpp"
#include "support.hpp"

using namespace crane;
using crane::testing::Rng;

namespace {

CraneParams without_dry_friction(CraneParams p) {
  p.a_x = p.b_x = p.a_y = p.b_y = Quartic{};
  p.C_l = 0;
  return p;
}

/// Log on a 0.01 s grid with the trolley at rest and the payload given by `payload(t)`.
template <typename F>
SimLog synthetic_log(double horizon, double reference_end, F payload) {
  SimLog log;
  log.reference_end = reference_end;
  log.dt = 0.01;
  const int n = static_cast<int>(std::lround(horizon / 0.01));
  for (int k = 0; k <= n; ++k) {
    const double t = k * 0.01;
    const Vec3 q = payload(t);
    CraneState s;
    s.x_t = q[0];
    s.y_t = q[1];
    s.L = -q[2];
    log.t.push_back(t);
    log.state.push_back(s);
    log.reference.push_back({s.x_t, s.y_t, s.L});
    log.u_ff.push_back({});
    log.u_fb.push_back({});
    log.u_applied.push_back({});
    log.payload.push_back(q);
    log.payload_planned.push_back(q);
  }
  return log;
}

Plan static_plan(const Vec3& q, const CraneParams& p) {
  return trajectory_to_plan({static_flat_state(q)}, {}, 0.0, p, FrictionVariant::complete());
}

std::vector<SweepPlan> scenario_plans(const Config& c, int n_intervals) {
  std::vector<SweepPlan> plans;
  PipelineConfig pc = c.planner;
  pc.transcription.n_intervals = n_intervals;
  for (FrictionModel v : {FrictionModel::Complete, FrictionModel::Simplified, FrictionModel::NoDryFriction}) {
    PlanResult r = plan_pipeline(c.scenario, c.params, v, pc);
    if (!r.ok) throw std::runtime_error(r.message);
    plans.push_back({to_string(v), std::move(r.plan)});
  }
  return plans;
}

const std::vector<SweepPlan>& cached_plans() {
  static const std::vector<SweepPlan> plans = scenario_plans(crane::testing::scenario_config(1), 40);
  return plans;
}

}  // namespace

TEST(PerturbFriction, ZeroLevelIsIdentity) {
  const CraneParams p;
  const CraneParams q = perturb_friction(p, {0.0, 9});
  EXPECT_EQ(q.a_x, p.a_x);
  EXPECT_EQ(q.b_y, p.b_y);
  EXPECT_EQ(q.C_l, p.C_l);
}

TEST(PerturbFriction, DeterministicForFixedSeed) {
  const CraneParams p;
  const CraneParams a = perturb_friction(p, {0.5, 42}), b = perturb_friction(p, {0.5, 42});
  EXPECT_EQ(a.a_x, b.a_x);
  EXPECT_EQ(a.b_x, b.b_x);
  EXPECT_EQ(a.a_y, b.a_y);
  EXPECT_EQ(a.b_y, b.b_y);
  EXPECT_EQ(a.C_l, b.C_l);
  const CraneParams c = perturb_friction(p, {0.5, 43});
  EXPECT_NE(a.a_x, c.a_x);
}

TEST(PerturbFriction, LargeLevelStaysAdmissible) {
  const CraneParams p;
  for (unsigned long long seed = 1; seed <= 200; ++seed) {
    const CraneParams q = perturb_friction(p, {1.5, seed});
    // Viscous terms untouched.
    EXPECT_EQ(q.D_x_minus, p.D_x_minus);
    EXPECT_EQ(q.D_l, p.D_l);
    // Each coefficient scaled by a factor in [0, 2.5].
    for (std::size_t i = 0; i < 5; ++i) {
      for (auto [orig, pert] : {std::pair{p.a_x[i], q.a_x[i]}, {p.b_x[i], q.b_x[i]}, {p.a_y[i], q.a_y[i]},
                                {p.b_y[i], q.b_y[i]}}) {
        if (orig == 0) {
          EXPECT_EQ(pert, 0);
          continue;
        }
        const double f = pert / orig;
        EXPECT_GE(f, 0.0);
        EXPECT_LE(f, 2.5);
      }
    }
    // Dense-sampling check of non-negativity on the workspace.
    for (int k = 0; k <= 1000; ++k) {
      const double x = p.xt_min + (p.xt_max - p.xt_min) * k / 1000.0;
      const double y = p.yt_min + (p.yt_max - p.yt_min) * k / 1000.0;
      ASSERT_GE(eval_quartic(q.a_x, x), 0.0);
      ASSERT_GE(eval_quartic(q.b_x, x), 0.0);
      ASSERT_GE(eval_quartic(q.a_y, y), 0.0);
      ASSERT_GE(eval_quartic(q.b_y, y), 0.0);
    }
  }
}

TEST(PerturbFriction, RejectsNegativeLevel) { EXPECT_THROW(perturb_friction(CraneParams{}, {-0.1, 1}), ConfigError); }

TEST(Metrics, StationaryLog) {
  const SimLog log = synthetic_log(3.0, 1.0, [](double) { return Vec3{0.5, 0.5, -0.5}; });
  const RunMetrics m = metrics(log, {BoxObstacle{0.8, 0.9, 0.8, 0.9, -0.9, -0.1}});
  EXPECT_FALSE(m.collided);
  EXPECT_EQ(m.residual_oscillation, 0.0);
  EXPECT_EQ(m.iae[0] + m.iae[1] + m.iae[2], 0.0);
  EXPECT_TRUE(m.stopped);
  EXPECT_NEAR(m.stop_time, 1.0, 1e-12);
}

TEST(Metrics, CollisionEntryTime) {
  const SimLog log = synthetic_log(1.0, 1.0, [](double t) { return Vec3{t, 0.0, -0.5}; });
  const RunMetrics m = metrics(log, {BoxObstacle{0.405, 0.6, -0.1, 0.1, -0.6, -0.4}});
  EXPECT_TRUE(m.collided);
  EXPECT_NEAR(m.first_collision_time, 0.41, 1e-12);
}

TEST(Metrics, ResidualOscillationOfSinusoid) {
  // Payload sways with amplitude 0.05 m and period 2 s after the stop at t = 1.
  const SimLog log = synthetic_log(10.0, 1.0, [](double t) {
    const double sway = t < 1.0 ? 0.0 : 0.05 * std::sin(std::numbers::pi * (t - 1.0));
    return Vec3{0.5 + sway, 0.5, -0.5};
  });
  const RunMetrics m = metrics(log, {});
  EXPECT_NEAR(m.stop_time, 1.0, 1e-12);
  EXPECT_NEAR(m.residual_oscillation, 0.05, 1e-9);
}

TEST(Metrics, NeverStoppingIsFlagged) {
  SimLog log = synthetic_log(2.0, 0.5, [](double t) { return Vec3{0.1 + 0.1 * t, 0.5, -0.5}; });
  for (auto& s : log.state) s.xd_t = 0.1;
  const RunMetrics m = metrics(log, {});
  EXPECT_FALSE(m.stopped);
  EXPECT_NEAR(m.stop_time, 2.0, 1e-12);
}

TEST(Metrics, EnlargingObstacleOnlyAddsCollisions) {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const Vec3 a = rng.point({0.1, 0.1, -0.7}, {1.1, 0.9, -0.2});
    const Vec3 b = rng.point({0.1, 0.1, -0.7}, {1.1, 0.9, -0.2});
    const SimLog log = synthetic_log(1.0, 1.0, [&](double t) {
      return Vec3{a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
    });
    const Vec3 c = rng.point({0.1, 0.1, -0.7}, {1.1, 0.9, -0.2});
    const double h = rng.uniform(0.02, 0.2);
    BoxObstacle small{c[0] - h, c[0] + h, c[1] - h, c[1] + h, c[2] - h, c[2] + h};
    const BoxObstacle big = small.inflated(rng.uniform(0.01, 0.2));
    const RunMetrics ms = metrics(log, {small}), mb = metrics(log, {big});
    if (ms.collided) {
      ASSERT_TRUE(mb.collided);
      EXPECT_LE(mb.first_collision_time, ms.first_collision_time);
    }
  }
}

TEST(Quartiles, Examples) {
  const Quartiles q = quartiles({4, 1, 3, 2, 5});
  EXPECT_EQ(q.q1, 2);
  EXPECT_EQ(q.median, 3);
  EXPECT_EQ(q.q3, 4);
  EXPECT_EQ(quartiles({1, 2}).median, 1.5);
  EXPECT_TRUE(std::isnan(quartiles({}).median));
}

TEST(LevelLadder, EvenlySpaced) {
  const auto l = level_ladder();
  ASSERT_EQ(l.size(), 75u);
  EXPECT_DOUBLE_EQ(l.front(), 0.02);
  EXPECT_DOUBLE_EQ(l.back(), 1.5);
  EXPECT_NEAR(l[1] - l[0], 1.48 / 74, 1e-15);
}

TEST(TunePi, NeverWorseThanInitialGains) {
  const CraneParams p;
  const Plan plan = cached_plans()[2].plan;
  TuneConfig tc;
  tc.max_evaluations = 12;
  tc.settle_time = 1.0;
  const TuneResult r = tune_pi(plan, p, Config::default_gains(), tc);
  EXPECT_LE(r.iae, r.initial_iae);
  EXPECT_LE(r.evaluations, tc.max_evaluations);
  EXPECT_TRUE(r.budget_exhausted);
  EXPECT_NO_THROW(r.gains.validate());
}

TEST(TunePi, FlatObjectiveWithExactFeedforward) {
  const CraneParams p = without_dry_friction(CraneParams{});
  const Plan plan = static_plan({0.6, 0.5, -0.5}, p);
  TuneConfig tc;
  tc.max_evaluations = 20;
  tc.settle_time = 2.0;
  const TuneResult r = tune_pi(plan, p, Config::default_gains(), tc);
  EXPECT_LT(r.iae, 1e-9);
  for (const auto& a : r.gains.axis) {
    EXPECT_TRUE(std::isfinite(a.kp));
    EXPECT_TRUE(std::isfinite(a.ki));
  }
}

TEST(TunePi, ReferenceOffsetYieldsPositiveGain) {
  const CraneParams p = without_dry_friction(CraneParams{});
  const Plan plan = static_plan({0.6, 0.5, -0.5}, p);
  PiGains zero = Config::default_gains();
  zero.axis[0].kp = 0;
  zero.axis[0].ki = 0;
  SimConfig sim;
  sim.reference_offset = {0.01, 0, 0};
  TuneConfig tc;
  tc.max_evaluations = 30;
  tc.settle_time = 3.0;
  const TuneResult r = tune_pi(plan, p, zero, tc, sim);
  EXPECT_GT(r.gains.axis[0].kp, 0.0);
  EXPECT_LT(r.iae, r.initial_iae);
}

TEST(Sweep, OneLevelGivesOneRowPerPlan) {
  const Config c = crane::testing::scenario_config(1);
  SweepConfig sc;
  sc.levels = {0.0};
  sc.sim.settle_time = 4.0;
  const auto rows = sweep(c.scenario.obstacles, cached_plans(), c.params, c.gains, sc);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].plan, "cm");
  EXPECT_EQ(rows[1].plan, "nfm");
  EXPECT_EQ(rows[2].plan, "sm");
  for (const auto& r : rows) EXPECT_FALSE(r.failed) << r.message;
  // Matched model, unperturbed plant.
  EXPECT_LT(rows[0].metrics.residual_oscillation, 0.01);
}

TEST(Sweep, DeterministicAndReproducibleFromRawLogs) {
  const Config c = crane::testing::scenario_config(1);
  SweepConfig sc;
  sc.levels = {0.3, 1.2};
  sc.runs_per_level = 2;
  sc.master_seed = 5;
  sc.sim.settle_time = 3.0;
  const auto a = sweep(c.scenario.obstacles, cached_plans(), c.params, c.gains, sc);
  sc.threads = 1;
  const auto b = sweep(c.scenario.obstacles, cached_plans(), c.params, c.gains, sc);
  std::ostringstream sa, sb;
  write_sweep_csv(sa, a);
  write_sweep_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
  ASSERT_EQ(a.size(), 12u);

  // Every row equals a direct recomputation.
  for (const auto& row : a) {
    const auto it = std::find_if(cached_plans().begin(), cached_plans().end(),
                                 [&](const SweepPlan& p) { return p.tag == row.plan; });
    const std::size_t li = row.level == 0.3 ? 0 : 1;
    ASSERT_EQ(row.seed, run_seed(sc.master_seed, li, row.run));
    const CraneParams plant = perturb_friction(c.params, {row.level, row.seed});
    const RunMetrics m = metrics(run_closed_loop(it->plan, plant, c.gains, sc.sim), c.scenario.obstacles, sc.metrics);
    EXPECT_EQ(m.residual_oscillation, row.metrics.residual_oscillation);
    EXPECT_EQ(m.stop_time, row.metrics.stop_time);
    EXPECT_EQ(m.max_tracking_error, row.metrics.max_tracking_error);
    EXPECT_EQ(m.collided, row.metrics.collided);
  }

  // Aggregates match quartiles of the table columns.
  for (const auto& s : summarize(a, 1.0)) {
    std::vector<double> osc;
    for (const auto& r : a) {
      if (r.plan == s.plan && r.level <= 1.0 && !r.failed) osc.push_back(r.metrics.residual_oscillation);
    }
    EXPECT_EQ(s.runs, 2);
    EXPECT_EQ(s.residual_oscillation.median, quartiles(osc).median);
  }
  const auto j = sweep_summary_json(a, 1.0);
  EXPECT_EQ(j["collision_rate_by_level"]["cm"].size(), 2u);
}
