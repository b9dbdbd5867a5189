#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "oracles.hpp"
#include "trajdiffuse/synth.hpp"

namespace td = trajdiffuse;

namespace {

std::size_t navigable_count(const td::NavEnvironment& env) {
  return static_cast<std::size_t>(std::count(env.nav_grid().begin(), env.nav_grid().end(), std::uint8_t{1}));
}

// A straight horizontal corridor 5 cells tall.
td::NavEnvironment straight_corridor(std::size_t rows, std::size_t cols) {
  std::vector<std::uint8_t> g(rows * cols, 0);
  for (std::size_t r = rows / 2 - 2; r <= rows / 2 + 2; ++r)
    for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] = 1;
  return {rows, cols, std::move(g), 0.5};
}

}  // namespace

TEST(EnvKind, ParsesAndPrints) {
  for (auto k : {td::EnvKind::corridor, td::EnvKind::rooms, td::EnvKind::maze})
    EXPECT_EQ(td::parse_env_kind(td::to_string(k)), k);
  EXPECT_THROW(td::parse_env_kind("forest"), td::Error);
}

TEST(FloodFill, CountsTheFirstComponentOnly) {
  const std::vector<std::uint8_t> g{1, 1, 0, 0, 0, 1, 1, 0, 1};
  EXPECT_EQ(td::flood_fill_count(g, 3, 3), 2u);
  EXPECT_FALSE(td::is_connected(g, 3, 3));
  EXPECT_TRUE(td::is_connected({1, 1, 1, 0}, 2, 2));
  EXPECT_FALSE(td::is_connected({0, 0, 0, 0}, 2, 2));
}

class Generated : public ::testing::TestWithParam<td::EnvKind> {};

TEST_P(Generated, ConnectedAndCoveredForManySeeds) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto env = td::generate_environment(GetParam(), 64, 64, 0.25, seed);
    EXPECT_TRUE(td::is_connected(env.nav_grid(), 64, 64)) << "seed " << seed;
    EXPECT_GE(5 * navigable_count(env), 64u * 64u) << "seed " << seed;
    EXPECT_EQ(env.resolution(), 0.25);
  }
}

TEST_P(Generated, SameSeedSameMapAndSeedsDiffer) {
  const auto a = td::generate_environment(GetParam(), 32, 40, 0.5, 7);
  const auto b = td::generate_environment(GetParam(), 32, 40, 0.5, 7);
  EXPECT_EQ(a, b);
  bool any_different = false;
  for (std::uint64_t s = 8; s < 14 && !any_different; ++s)
    any_different = !(td::generate_environment(GetParam(), 32, 40, 0.5, s) == a);
  EXPECT_TRUE(any_different);
}

TEST_P(Generated, TrajectoriesStayNavigableWithTheRequestedLength) {
  const auto env = td::generate_environment(GetParam(), 48, 48, 0.5, 3);
  td::TrajectoryConfig cfg;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto traj = td::generate_trajectory(env, cfg, seed);
    ASSERT_EQ(traj.size(), cfg.frames);
    for (const auto& p : traj) ASSERT_TRUE(td::testing::nearest_pixel_navigable(env, p)) << "seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(AllKinds, Generated,
                         ::testing::Values(td::EnvKind::corridor, td::EnvKind::rooms, td::EnvKind::maze),
                         [](const auto& info) { return std::string(td::to_string(info.param)); });

TEST(Generate, RejectsTinyOrBadInput) {
  EXPECT_THROW(td::generate_environment(td::EnvKind::rooms, 8, 32, 0.5, 0), td::Error);
  EXPECT_THROW(td::generate_environment(td::EnvKind::rooms, 32, 32, 0.0, 0), td::Error);
}

TEST(Corridor, HasBothArmsOfTheL) {
  // Every corridor reaches two different map borders.
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto env = td::generate_environment(td::EnvKind::corridor, 40, 40, 0.5, seed);
    int borders = 0;
    auto any = [&](auto pred) {
      for (std::size_t i = 0; i < 40; ++i)
        if (pred(i)) return true;
      return false;
    };
    borders += any([&](std::size_t i) { return env.navigable({0, i}); });
    borders += any([&](std::size_t i) { return env.navigable({39, i}); });
    borders += any([&](std::size_t i) { return env.navigable({i, 0}); });
    borders += any([&](std::size_t i) { return env.navigable({i, 39}); });
    EXPECT_GE(borders, 2) << "seed " << seed;
  }
}

TEST(PathFinder, StraightLineDistancesAndNoCornerCutting) {
  const td::NavEnvironment open(5, 5, std::vector<std::uint8_t>(25, 1), 1.0);
  td::PathFinder pf(open, false);
  pf.run({0, 0});
  EXPECT_DOUBLE_EQ(pf.distance({0, 4}), 4.0);
  EXPECT_NEAR(pf.distance({4, 4}), 4 * std::numbers::sqrt2, 1e-12);
  EXPECT_NEAR(pf.distance({2, 4}), 2 + 2 * std::numbers::sqrt2, 1e-12);

  // Diagonal through a pinched corner is forbidden.
  const td::NavEnvironment pinch(2, 2, {1, 0, 0, 1}, 1.0);
  td::PathFinder p2(pinch, false);
  p2.run({0, 0});
  EXPECT_TRUE(std::isinf(p2.distance({1, 1})));
  EXPECT_TRUE(p2.path_to({1, 1}).empty());

  const auto path = pf.path_to({2, 4});
  EXPECT_EQ(path.front(), (td::Cell{0, 0}));
  EXPECT_EQ(path.back(), (td::Cell{2, 4}));
}

TEST(PathFinder, ClearanceDropsCellsNextToWalls) {
  const auto env = straight_corridor(11, 20);
  td::PathFinder pf(env, true);
  for (const auto& c : pf.usable_cells()) {
    EXPECT_GE(c.row, 4u);
    EXPECT_LE(c.row, 6u);
    EXPECT_GT(c.col, 0u);
    EXPECT_LT(c.col, 19u);
  }
}

TEST(Resample, EqualSpacingAndEndpoints) {
  const std::vector<td::Vec2> pts{{0, 0}, {3, 0}, {3, 3}};
  const auto r = td::resample_polyline(pts, 7);
  ASSERT_EQ(r.size(), 7u);
  for (std::size_t i = 1; i < r.size(); ++i) EXPECT_NEAR((r[i] - r[i - 1]).norm(), 1.0, 1e-12);
  EXPECT_EQ(r.back(), (td::Vec2{3, 3}));
  const auto still = td::resample_polyline({{1, 2}}, 3);
  for (const auto& p : still) EXPECT_EQ(p, (td::Vec2{1, 2}));
  EXPECT_THROW(td::resample_polyline({}, 3), td::Error);
}

TEST(Trajectory, StraightCorridorWalkIsMonotoneAtWalkingSpeed) {
  const auto env = straight_corridor(11, 80);
  td::TrajectoryConfig cfg;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto traj = td::generate_trajectory(env, cfg, seed);
    const double dir = traj.back().x > traj.front().x ? 1.0 : -1.0;
    for (std::size_t t = 1; t < traj.size(); ++t) {
      const double step = dir * (traj[t].x - traj[t - 1].x);
      EXPECT_GT(step, 0.0) << "seed " << seed << " frame " << t;
      EXPECT_LT(step / cfg.dt, 1.15 * cfg.max_speed + 0.2);
    }
  }
}

TEST(Trajectory, SameSeedIsBitIdentical) {
  const auto env = td::generate_environment(td::EnvKind::rooms, 32, 32, 0.5, 1);
  EXPECT_EQ(td::generate_trajectory(env, {}, 5), td::generate_trajectory(env, {}, 5));
}

TEST(IntentFrames, EvenSpacingForTheDefaultHorizon) {
  td::IntentOracleConfig cfg;
  EXPECT_EQ(cfg.frames_for(8, 12), (std::vector<std::size_t>{11, 15}));
  cfg.n_points = 1;
  EXPECT_TRUE(cfg.frames_for(8, 12).empty());
  cfg.n_points = 3;
  cfg.waypoint_frames = {12, 10};
  EXPECT_THROW(cfg.frames_for(8, 12), td::Error);
  cfg.waypoint_frames = {19};
  EXPECT_THROW(cfg.frames_for(8, 12), td::Error);
}

TEST(IntentOracle, NoiseFreeIntentsCopyTheTruth) {
  const auto env = td::generate_environment(td::EnvKind::rooms, 32, 32, 0.5, 2);
  td::TrajectoryConfig motion;
  const auto truth = td::generate_trajectory(env, motion, 9);
  td::IntentOracleConfig cfg;
  cfg.goal_noise_sigma = 0.0;
  const auto intents = td::intent_oracle(truth, 8, cfg, env, 4, 1);
  ASSERT_EQ(intents.size(), 4u);
  for (const auto& c : intents) {
    EXPECT_NO_THROW(c.validate(8, 12));
    for (std::size_t j = 0; j < c.frames.size(); ++j) EXPECT_EQ(c.values[j], truth[c.frames[j]]);
    EXPECT_EQ(c.waypoint_frames(), (std::vector<std::size_t>{11, 15}));
  }
}

TEST(IntentOracle, NoisyIntentsKeepHistoryAndLandOnNavigableCells) {
  const auto env = td::generate_environment(td::EnvKind::maze, 32, 32, 0.5, 4);
  const auto truth = td::generate_trajectory(env, {}, 2);
  const auto intents = td::intent_oracle(truth, 8, {}, env, 20, 3);
  std::set<std::pair<double, double>> goals;
  for (const auto& c : intents) {
    for (std::size_t t = 0; t < 8; ++t) EXPECT_EQ(c.values[t], truth[t]);
    for (std::size_t j = 8; j < c.values.size(); ++j) EXPECT_TRUE(env.navigable_at(c.values[j]));
    goals.insert({c.goal().x, c.goal().y});
  }
  EXPECT_GT(goals.size(), 1u);
  EXPECT_EQ(intents, td::intent_oracle(truth, 8, {}, env, 20, 3));
}

TEST(IntentOracle, DiversifiedGoalsAreDistinctAndReachable) {
  const auto env = td::generate_environment(td::EnvKind::maze, 48, 48, 0.5, 5);
  const auto truth = td::generate_trajectory(env, {}, 6);
  td::IntentOracleConfig cfg;
  cfg.diversify = true;
  const auto intents = td::intent_oracle(truth, 8, cfg, env, 10, 7);
  ASSERT_EQ(intents.size(), 10u);
  std::set<std::pair<double, double>> goals;
  td::PathFinder pf(env, false);
  pf.run(*env.cell_of(truth[7]));
  for (const auto& c : intents) {
    EXPECT_NO_THROW(c.validate(8, 12));
    EXPECT_TRUE(env.navigable_at(c.goal()));
    EXPECT_TRUE(std::isfinite(pf.distance(*env.cell_of(c.goal()))));
    goals.insert({c.goal().x, c.goal().y});
  }
  EXPECT_GE(goals.size(), 2u);
}

TEST(Projection, LeavesNavigablePointsAndSnapsBlockedOnes) {
  const td::NavEnvironment env(3, 3, {1, 1, 1, 1, 0, 0, 1, 0, 0}, 1.0);
  EXPECT_EQ(td::project_to_navigable(env, {0.2, 0.1}), (td::Vec2{0.2, 0.1}));
  const auto snapped = td::project_to_navigable(env, {1.1, 1.0});
  ASSERT_TRUE(snapped);
  EXPECT_TRUE(env.navigable_at(*snapped));
  EXPECT_EQ(*snapped, (td::Vec2{1.0, 0.0}));
  const td::NavEnvironment far(1, 30, [] {
    std::vector<std::uint8_t> g(30, 0);
    g[0] = 1;
    return g;
  }(), 1.0);
  EXPECT_FALSE(td::project_to_navigable(far, {25.0, 0.0}, 10));
}
