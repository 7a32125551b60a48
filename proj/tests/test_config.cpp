#include <gtest/gtest.h>

#include "crane/config.hpp"
#include "support.hpp"

using namespace crane;

TEST(Config, EmptyDocumentKeepsDefaults) {
  const Config c = parse_config(std::string("{}"));
  EXPECT_EQ(c.params.m_p, CraneParams{}.m_p);
  EXPECT_EQ(c.planner.transcription.n_intervals, 100);
  EXPECT_EQ(c.planner.transcription.snap_weight, 1e-3);
  EXPECT_EQ(c.planner.dt_output, 0.01);
  EXPECT_EQ(c.scenario.clearance.margin, 0.01);
  EXPECT_EQ(c.variant, FrictionModel::Complete);
}

TEST(Config, ScenarioFilesParse) {
  const Config c1 = crane::testing::scenario_config(1);
  EXPECT_EQ(c1.scenario.obstacles.size(), 1u);
  EXPECT_EQ(c1.experiment.sweep.levels.size(), 75u);
  EXPECT_EQ(c1.gains.axis[2].ki, 25.0);
  const Config c2 = crane::testing::scenario_config(2);
  EXPECT_EQ(c2.scenario.obstacles.size(), 3u);
  EXPECT_NO_THROW(load_config(crane::testing::config_path("free.json")));
}

TEST(Config, OverridesReachTheirFields) {
  const Config c = parse_config(std::string(R"({
    "params": {"m_p": 1.0, "a_x": [1, 0, 0, 0, 0]},
    "scenario": {"start": [0.3, 0.3, -0.5], "obstacles": [{"min": [0.4, 0.4, -0.8], "max": [0.5, 0.5, -0.2]}]},
    "planner": {"variant": "nfm", "n_intervals": 40, "solver": {"tol": 1e-7}},
    "simulation": {"dt": 0.002},
    "controller": {"y": {"kp": 12}},
    "experiment": {"sweep": {"levels": [0.1, 0.2], "runs_per_level": 3}}
  })"));
  EXPECT_EQ(c.params.m_p, 1.0);
  EXPECT_EQ(c.params.a_x[0], 1.0);
  EXPECT_EQ(c.scenario.start[2], -0.5);
  EXPECT_EQ(c.scenario.obstacles[0].z_max, -0.2);
  EXPECT_EQ(c.variant, FrictionModel::NoDryFriction);
  EXPECT_EQ(c.planner.transcription.n_intervals, 40);
  EXPECT_EQ(c.planner.solve.tol, 1e-7);
  EXPECT_EQ(c.sim.dt, 0.002);
  EXPECT_EQ(c.experiment.sweep.sim.dt, 0.002);
  EXPECT_EQ(c.gains.axis[1].kp, 12.0);
  EXPECT_EQ(c.experiment.sweep.levels, (std::vector<double>{0.1, 0.2}));
  EXPECT_EQ(c.experiment.sweep.runs_per_level, 3);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse_config(std::string(R"({"parms": {}})")), ConfigError);
  EXPECT_THROW(parse_config(std::string(R"({"params": {"m_q": 1}})")), ConfigError);
  EXPECT_THROW(parse_config(std::string(R"({"planner": {"solver": {"tolerance": 1}}})")), ConfigError);
  EXPECT_THROW(parse_config(std::string(R"({"params": {"m_p": "heavy"}})")), ConfigError);
  EXPECT_THROW(parse_config(std::string(R"({"params": {"m_p": -1}})")), ConfigError);
  EXPECT_THROW(parse_config(std::string(R"({"params": {"m_p": 1.1}})")), ConfigError);
  EXPECT_THROW(parse_config(std::string(R"({"planner": {"variant": "xyz"}})")), ConfigError);
  EXPECT_THROW(parse_config(std::string("{not json")), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, RoundTripAndStableHash) {
  const Config c = crane::testing::scenario_config(2);
  const Config back = parse_config(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
  EXPECT_EQ(config_hash(c).size(), 16u);
  Config d = c;
  d.params.m_p += 1e-9;
  EXPECT_NE(config_hash(d), config_hash(c));
}

TEST(Config, Fnv1aReferenceValues) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}
