#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

#include "crane/optimizer.hpp"
#include "support.hpp"

using namespace crane;
using crane::testing::Rng;

namespace {

Transcription small_tr(int n) {
  Transcription tr;
  tr.n_intervals = n;
  tr.t_lower = 0.5;
  tr.t_upper = 6.0;
  return tr;
}

Scenario box_scenario() {
  Scenario sc;
  sc.start = {0.2, 0.3, -0.6};
  sc.goal = {1.0, 0.7, -0.5};
  sc.obstacles = {{0.55, 0.65, -0.1, 1.1, -0.9, -0.4}, {0.2, 0.4, 0.7, 0.9, -0.8, -0.5}};
  return sc;
}

/// Random decision vector around a smooth move, with the tension floor kept.
Eigen::VectorXd random_point(const Transcription& tr, Rng& rng) {
  std::vector<FlatState> nodes;
  const double T = rng.uniform(1.5, 3.0);
  for (int k = 0; k <= tr.n_intervals; ++k) {
    const FlatJet j = crane::testing::septic_jet({0.2, 0.3, -0.6}, {1.0, 0.7, -0.5}, T,
                                                 T * k / tr.n_intervals);
    FlatState x = flat_state_of(j);
    for (int a = 0; a < 3; ++a) {
      x[4 * a] += rng.uniform(-0.02, 0.02);
      for (int o = 1; o < 4; ++o) x[4 * a + o] += rng.uniform(-0.2, 0.2);
    }
    nodes.push_back(x);
  }
  std::vector<Vec3> snaps;
  for (int k = 0; k < tr.n_intervals; ++k) snaps.push_back({rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)});
  return tr.pack(nodes, snaps, T);
}

Eigen::VectorXd propagated(const Transcription& tr, const FlatState& x0, const std::vector<Vec3>& snaps, double T) {
  std::vector<FlatState> nodes{x0};
  for (int k = 0; k < tr.n_intervals; ++k) nodes.push_back(flat_step(nodes.back(), snaps[k], T / tr.n_intervals));
  return tr.pack(nodes, snaps, T);
}

double septic_position(double a, double b, double s) {
  return a + (b - a) * crane::testing::septic(s)[0];
}

}  // namespace

TEST(Objective, Examples) {
  Transcription tr = small_tr(2);
  tr.snap_weight = 0.001;
  std::vector<FlatState> nodes(3, static_flat_state({0.5, 0.5, -0.5}));
  Eigen::VectorXd z = tr.pack(nodes, {{1, 0, 0}, {1, 0, 0}}, 2.0);
  EXPECT_NEAR(objective(z, tr), 2.002, 1e-15);
  z = tr.pack(nodes, {{0, 0, 0}, {0, 0, 0}}, 2.0);
  EXPECT_EQ(objective(z, tr), 2.0);
  tr.snap_weight = 0;
  z = tr.pack(nodes, {{3, -1, 2}, {1, 4, 0}}, 2.0);
  EXPECT_EQ(objective(z, tr), 2.0);
}

TEST(Defects, VanishOnExactlyPropagatedNodes) {
  Rng rng(1);
  const Transcription tr = small_tr(20);
  for (int trial = 0; trial < 20; ++trial) {
    FlatState x0;
    for (double& e : x0) e = rng.uniform(-1, 1);
    std::vector<Vec3> snaps;
    for (int k = 0; k < 20; ++k) snaps.push_back({rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)});
    const Eigen::VectorXd r = defects(propagated(tr, x0, snaps, rng.uniform(0.5, 4)), tr);
    EXPECT_LT(r.lpNorm<Eigen::Infinity>(), 1e-12);
  }
}

TEST(Defects, PerturbationIsLocal) {
  const Transcription tr = small_tr(10);
  std::vector<Vec3> snaps(10, Vec3{0.5, -0.2, 0.1});
  const Eigen::VectorXd base = propagated(tr, static_flat_state({0.3, 0.3, -0.5}), snaps, 2.0);
  auto nonzero_blocks = [&](const Eigen::VectorXd& r) {
    std::vector<int> out;
    for (int k = 0; k < tr.n_intervals; ++k) {
      if (r.segment(12 * k, 12).lpNorm<Eigen::Infinity>() > 1e-13) out.push_back(k);
    }
    return out;
  };
  // Final node: only the closing interval sees it.
  Eigen::VectorXd z = base;
  z[tr.state_index(10, 0)] += 1e-3;
  Eigen::VectorXd r = defects(z, tr);
  EXPECT_EQ(nonzero_blocks(r), std::vector<int>{9});
  EXPECT_NEAR(r.segment(12 * 9, 12).lpNorm<Eigen::Infinity>(), 1e-3, 1e-12);
  // Interior node: the interval ending there and the one starting there.
  z = base;
  z[tr.state_index(4, 0)] += 1e-3;
  r = defects(z, tr);
  EXPECT_EQ(nonzero_blocks(r), (std::vector<int>{3, 4}));
  EXPECT_NEAR(r[12 * 3], 1e-3, 1e-12);
  EXPECT_NEAR(r[12 * 4], -1e-3, 1e-12);
}

TEST(Defects, StaticTrajectory) {
  const Transcription tr = small_tr(2);
  const std::vector<FlatState> nodes(3, static_flat_state({0.5, 0.5, -0.5}));
  EXPECT_EQ(defects(tr.pack(nodes, {{0, 0, 0}, {0, 0, 0}}, 1.0), tr).lpNorm<Eigen::Infinity>(), 0.0);
}

TEST(PathConstraints, StaticNodeWithoutObstacles) {
  const CraneParams p;
  const Transcription tr = small_tr(2);
  Scenario sc;
  const Vec3 q{0.4, 0.3, -0.5};
  const std::vector<FlatState> nodes(3, static_flat_state(q));
  const auto pc = path_constraints(tr.pack(nodes, {{0, 0, 0}, {0, 0, 0}}, 1.0), tr, sc, p, FrictionVariant::complete());
  ASSERT_EQ(pc.values.size(), 3 * 13);
  EXPECT_NEAR(pc.values[0], q[0] - p.xt_min, 1e-15);
  EXPECT_NEAR(pc.values[1], p.xt_max - q[0], 1e-15);
  EXPECT_NEAR(pc.values[2], q[1] - p.yt_min, 1e-15);
  EXPECT_NEAR(pc.values[3], p.yt_max - q[1], 1e-15);
  EXPECT_NEAR(pc.values[4], 0.5 - p.L_min, 1e-15);
  EXPECT_NEAR(pc.values[5], p.L_max - 0.5, 1e-15);
  // Force rows hold (0, 0, -g m_p) against the actuator limits.
  EXPECT_NEAR(pc.values[6], 0 - p.u_min[0], 1e-14);
  EXPECT_NEAR(pc.values[7], p.u_max[0] - 0, 1e-14);
  EXPECT_NEAR(pc.values[10], -p.g * p.m_p - p.u_min[2], 1e-14);
  EXPECT_NEAR(pc.values[11], p.u_max[2] + p.g * p.m_p, 1e-14);
  EXPECT_NEAR(pc.values[12], (1 - tr.tension_floor) * p.g, 1e-14);
}

TEST(PathConstraints, PayloadInsideObstacle) {
  const Transcription tr = small_tr(2);
  Scenario sc;
  sc.obstacles = {{0.3, 0.5, 0.2, 0.4, -0.6, -0.4}};
  const std::vector<FlatState> nodes(3, static_flat_state({0.4, 0.3, -0.5}));
  const auto pc = path_constraints(tr.pack(nodes, {{0, 0, 0}, {0, 0, 0}}, 1.0), tr, sc, CraneParams{},
                                   FrictionVariant::complete());
  const int R = tr.rows_per_node(sc);
  // Payload is rope sample N_r - 1, the last row of the node.
  EXPECT_NEAR(pc.values[R - 1], -sc.clearance.margin, 1e-12);
}

TEST(PathConstraints, RowCount) {
  const Scenario sc = box_scenario();
  for (int n : {2, 5, 17}) {
    const Transcription tr = small_tr(n);
    const int expected = (n + 1) * (3 * 2 + 3 * 2 + sc.clearance.n_rope * 2 + 1);
    EXPECT_EQ(tr.n_nodes() * tr.rows_per_node(sc), expected);
    EXPECT_EQ(build_nlp(sc, CraneParams{}, FrictionVariant::complete(), tr).m, 12 * n + expected);
  }
}

TEST(BuildNlp, BoundaryConditionsPinStatesAndSnap) {
  const Transcription tr = small_tr(8);
  const NlpProblem nlp = build_nlp(box_scenario(), CraneParams{}, FrictionVariant::complete(), tr);
  int fixed = 0;
  for (int i = 0; i < nlp.n; ++i) fixed += nlp.x_lower[i] == nlp.x_upper[i];
  EXPECT_EQ(fixed, 24 + 3);
  EXPECT_EQ(nlp.x_lower[tr.time_index()], tr.t_lower);
  EXPECT_EQ(nlp.x_upper[tr.time_index()], tr.t_upper);
}

TEST(BuildNlp, StaticPointIsFeasibleWhenStartEqualsGoal) {
  Scenario sc;
  sc.start = sc.goal = {0.5, 0.5, -0.5};
  sc.obstacles = {{0.8, 0.9, 0.1, 0.3, -0.7, -0.3}};
  const Transcription tr = small_tr(6);
  const NlpProblem nlp = build_nlp(sc, CraneParams{}, FrictionVariant::complete(), tr);
  const std::vector<FlatState> nodes(7, static_flat_state(sc.start));
  for (double T : {0.5, 2.0, 6.0}) {
    EXPECT_LE(max_violation(nlp, tr.pack(nodes, std::vector<Vec3>(6), T)), 0.0);
  }
}

TEST(BuildNlp, DerivativesMatchFiniteDifferences) {
  Rng rng(2);
  const Transcription tr = small_tr(6);
  for (auto tag : {FrictionModel::Complete, FrictionModel::Simplified, FrictionModel::NoDryFriction}) {
    const CraneParams p;
    const NlpProblem nlp = build_nlp(box_scenario(), p, FrictionVariant::from(tag, p), tr);
    for (int trial = 0; trial < 20; ++trial) {
      const Eigen::VectorXd z = random_point(tr, rng);
      std::vector<int> coords;
      for (int i = 0; i < 5; ++i) coords.push_back(rng.integer(0, nlp.n - 1));
      coords.push_back(tr.time_index());
      const auto chk = check_derivatives(nlp, z, coords);
      EXPECT_LT(chk.grad_rel_error, 1e-6);
      EXPECT_LT(chk.jac_rel_error, 1e-6);
      EXPECT_LT(chk.hess_rel_error, 1e-4);
    }
  }
}

TEST(Solve, MatchesMinimumSnapPolynomial) {
  // Piecewise-constant snap converges to the septic at O(h^2); 800 intervals
  // put the discretization error below 1e-6 m.
  Scenario sc;
  sc.start = {0.2, 0.3, -0.6};
  sc.goal = {0.7, 0.6, -0.4};
  Transcription tr;
  tr.n_intervals = 800;
  tr.t_lower = tr.t_upper = 2.0;
  tr.with_path_constraints = false;
  tr.pin_terminal_snap = false;
  tr.snap_weight = 1.0;
  const NlpProblem nlp = build_nlp(sc, CraneParams{}, FrictionVariant::complete(), tr);
  std::vector<FlatState> nodes;
  for (int k = 0; k <= tr.n_intervals; ++k) {
    const double w = static_cast<double>(k) / tr.n_intervals;
    nodes.push_back(static_flat_state({0.2 + 0.5 * w, 0.3 + 0.3 * w, -0.6 + 0.2 * w}));
  }
  SolveOptions o;
  o.tol = 1e-12;
  o.constr_viol_tol = 1e-12;
  const auto t0 = std::chrono::steady_clock::now();
  auto [z, rep] = solve(nlp, tr.pack(nodes, std::vector<Vec3>(tr.n_intervals), 2.0), o);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 10.0);
  ASSERT_EQ(rep.status, SolveStatus::Optimal) << rep.message;
  double err = 0;
  const auto out = tr.nodes(z);
  for (int k = 0; k <= tr.n_intervals; ++k) {
    const double s = static_cast<double>(k) / tr.n_intervals;
    for (int a = 0; a < 3; ++a) err = std::max(err, std::abs(out[k][4 * a] - septic_position(sc.start[a], sc.goal[a], s)));
  }
  EXPECT_LT(err, 1e-6);
}

TEST(Solve, StartEqualsGoalConvergesToShortestTime) {
  Scenario sc;
  sc.start = sc.goal = {0.5, 0.5, -0.5};
  sc.obstacles = {{0.8, 0.9, 0.1, 0.3, -0.7, -0.3}};
  const Transcription tr = small_tr(20);
  const NlpProblem nlp = build_nlp(sc, CraneParams{}, FrictionVariant::complete(), tr);
  const std::vector<FlatState> nodes(21, static_flat_state(sc.start));
  SolveOptions o;
  o.mu_init = 1e-4;
  auto [z, rep] = solve(nlp, tr.pack(nodes, std::vector<Vec3>(20), 1.0), o);
  EXPECT_EQ(rep.status, SolveStatus::Optimal) << rep.iterations;
  EXPECT_LE(rep.iterations, 5);
  EXPECT_NEAR(z[tr.time_index()], tr.t_lower, 1e-6);
  // Snap curvature in the objective is only lambda T / N, so the snaps carry
  // barrier noise; their effect on the states is what must vanish.
  for (int k = 0; k < 20; ++k) {
    for (int a = 0; a < 3; ++a) EXPECT_NEAR(z[tr.snap_index(k, a)], 0.0, 1e-3);
  }
  const FlatState rest = static_flat_state(sc.start);
  for (const FlatState& x : tr.nodes(z)) {
    for (int e = 0; e < 12; ++e) EXPECT_NEAR(x[e], rest[e], 1e-6);
  }
}

TEST(Solve, GoalInsideObstacleIsInfeasible) {
  Scenario sc;
  sc.start = {0.2, 0.5, -0.5};
  sc.goal = {0.8, 0.5, -0.5};
  sc.obstacles = {{0.7, 0.9, 0.4, 0.6, -0.6, -0.4}};
  const Transcription tr = small_tr(30);
  const NlpProblem nlp = build_nlp(sc, CraneParams{}, FrictionVariant::complete(), tr);
  std::vector<FlatState> nodes;
  for (int k = 0; k <= 30; ++k) nodes.push_back(static_flat_state({0.2 + 0.02 * k, 0.5, -0.5}));
  auto [z, rep] = solve(nlp, tr.pack(nodes, std::vector<Vec3>(30), 2.0), SolveOptions{});
  EXPECT_EQ(rep.status, SolveStatus::Infeasible);
}

TEST(Pipeline, FreeMoveShortensGuess) {
  Scenario sc;
  sc.start = {0.2, 0.2, -0.6};
  sc.goal = {0.9, 0.7, -0.5};
  PipelineConfig cfg;
  cfg.transcription.n_intervals = 40;
  const PlanResult r = plan_pipeline(sc, CraneParams{}, FrictionModel::Complete, cfg);
  ASSERT_TRUE(r.ok) << r.stage << ": " << r.message;
  EXPECT_LT(r.plan.t_end(), r.guess.t_guess);
  EXPECT_LE(r.node_violation, 1e-6);
  EXPECT_LE(r.plan.t[1] - r.plan.t[0], cfg.dt_output + 1e-12);
}

TEST(Pipeline, GoalInsideObstacleFailsInSeedPlanner) {
  Scenario sc;
  sc.start = {0.2, 0.5, -0.5};
  sc.goal = {0.8, 0.5, -0.5};
  sc.obstacles = {{0.7, 0.9, 0.4, 0.6, -0.6, -0.4}};
  const PlanResult r = plan_pipeline(sc, CraneParams{}, FrictionModel::Complete, PipelineConfig{});
  EXPECT_FALSE(r.ok);
  EXPECT_EQ(r.stage, "seed planner");
}

TEST(Pipeline, SingleObstacleScenarioIsVerified) {
  const Config cfg = crane::testing::scenario_config(1);
  PipelineConfig pc = cfg.planner;
  pc.transcription.n_intervals = 50;
  const PlanResult r = plan_pipeline(cfg.scenario, cfg.params, FrictionModel::Complete, pc);
  ASSERT_TRUE(r.ok) << r.stage << ": " << r.message;
  const CollisionReport v =
      verify_trajectory(r.plan, cfg.scenario.obstacles, cfg.scenario.clearance, 10, cfg.scenario.clearance.margin);
  EXPECT_FALSE(v.collided);
  EXPECT_GE(v.min_phi, 0.0);
  // Node constraints, re-evaluated independently of the solver.
  const auto pcv = path_constraints(r.z, r.transcription, cfg.scenario, cfg.params,
                                    FrictionVariant::from(FrictionModel::Complete, cfg.params));
  EXPECT_GE(pcv.values.minCoeff(), -1e-6);
  EXPECT_LT(defects(r.z, r.transcription).lpNorm<Eigen::Infinity>(), 1e-6);
}

TEST(Pipeline, TimeRescaledGuessReachesSameObjective) {
  Scenario sc;
  sc.start = {0.2, 0.2, -0.6};
  sc.goal = {0.9, 0.7, -0.5};
  Transcription tr;
  tr.n_intervals = 40;
  const CraneParams p;
  const SeedGuess g = fit_guess({sc.start, sc.goal}, SeedConfig{}, tr.n_intervals);
  double objectives[2];
  for (int i = 0; i < 2; ++i) {
    const double T = g.t_guess * (i + 1);
    const SeedGuess gi = fit_guess({sc.start, sc.goal}, [&] {
      SeedConfig c;
      c.average_speed = SeedConfig{}.average_speed / (i + 1);
      return c;
    }(), tr.n_intervals);
    tr.t_lower = 0.25 * g.t_guess;
    tr.t_upper = 6.0 * g.t_guess;
    const NlpProblem nlp = build_nlp(sc, p, FrictionVariant::complete(), tr);
    auto [z, rep] = solve(nlp, tr.pack(gi.nodes, gi.snaps, T), SolveOptions{});
    ASSERT_EQ(rep.status, SolveStatus::Optimal) << rep.message;
    objectives[i] = rep.objective;
  }
  EXPECT_NEAR(objectives[0], objectives[1], 1e-3);
}
