#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "bevbridge/policy.hpp"

using namespace bevbridge;

namespace {

const ActionLimits kLimits = ActionLimits::for_platform(carla_default_platform());

Observation straight_obs() {
  Observation o;
  for (int k = 0; k < kNumWaypoints; ++k) o.waypoints[k] = {2.0 * (k + 1), 0.0};
  return o;
}

void mark_cell(Observation& o, GroundPoint p, int ch) {
  const CellIndex c = BevGridSpec{}.lattice_index(p);
  o.bev.set(c.row, c.col, ch, true);
}

}  // namespace

TEST(Waypoints, IdentityFrame) {
  const Polyline route{{0, 0}, {100, 0}};
  const Waypoints w = waypoints(route, {0, 0, 0});
  for (int k = 0; k < kNumWaypoints; ++k) {
    EXPECT_NEAR(w[k].x, 2.0 * (k + 1), 1e-12);
    EXPECT_NEAR(w[k].y, 0.0, 1e-12);
  }
}

TEST(Waypoints, RotatedEgo) {
  const Polyline route{{0, 0}, {100, 0}};
  const Waypoints w = waypoints(route, {0, 0, std::numbers::pi / 2});
  for (int k = 0; k < kNumWaypoints; ++k) {
    // world (d, 0) seen from an ego facing +y: x' = d cos(-pi/2) ..., y' = -d
    EXPECT_NEAR(w[k].x, 0.0, 1e-12);
    EXPECT_NEAR(w[k].y, -2.0 * (k + 1), 1e-12);
  }
}

TEST(Waypoints, ShortRouteRepeatsEndpoint) {
  const Polyline route{{0, 0}, {10, 0}};
  const Waypoints w = waypoints(route, {0, 0, 0});
  for (int k = 0; k < kNumWaypoints; ++k) EXPECT_NEAR(w[k].x, std::min(2.0 * (k + 1), 10.0), 1e-12);
  EXPECT_THROW(waypoints(Polyline{{0, 0}}, {0, 0, 0}), std::invalid_argument);
  EXPECT_THROW(waypoints(Polyline{{0, 0}, {0, 0}}, {0, 0, 0}), std::invalid_argument);
}

TEST(Waypoints, SpacingOnCurvedRoute) {
  Polyline route;
  for (int i = 0; i <= 200; ++i) {
    const double a = i * 0.01;  // 40 m of arc
    route.push_back({20.0 * std::sin(a), 20.0 * (1 - std::cos(a))});
  }
  const Waypoints w = waypoints(route, {0, 0, 0});
  double prev_x = 0.0, prev_y = 0.0;
  for (int k = 0; k < kNumWaypoints; ++k) {
    const double d = std::hypot(w[k].x - prev_x, w[k].y - prev_y);
    EXPECT_NEAR(d, 2.0, 0.01);  // chord of a 2 m arc on R = 20, plus polyline quantization
    prev_x = w[k].x;
    prev_y = w[k].y;
  }
}

TEST(PurePursuit, StraightGivesZeroSteer) {
  const PolicyOutput out = pure_pursuit(straight_obs(), 6.0, kLimits);
  EXPECT_EQ(out.a1, 0.0);
  EXPECT_NEAR(out.a2, 2.0 * 4.0 / kLimits.v_max - 1.0, 1e-12);
}

TEST(PurePursuit, CurvatureTowardLookaheadPoint) {
  Observation o = straight_obs();
  o.waypoints[4] = {std::sqrt(99.0), 1.0};  // 10 m away, 1 m left
  const PolicyOutput out = pure_pursuit(o, 10.0, kLimits);
  EXPECT_NEAR(out.a1, 0.02 / kLimits.kappa_max, 1e-12);
  o.waypoints[4].y = -1.0;
  EXPECT_NEAR(pure_pursuit(o, 10.0, kLimits).a1, -0.02 / kLimits.kappa_max, 1e-12);
}

TEST(PurePursuit, OccupiedCorridorSlowsDown) {
  const Observation free = straight_obs();
  Observation blocked = straight_obs();
  for (double x = 7.0; x < 9.0; x += 0.1)
    for (double y = -0.9; y < 0.9; y += 0.1) mark_cell(blocked, {x, y}, label_of(SemanticClass::vehicle));
  const double a_free = pure_pursuit(free, 6.0, kLimits).a2;
  const double a_blocked = pure_pursuit(blocked, 6.0, kLimits).a2;
  EXPECT_LT(a_blocked, a_free);
  // nearest object 3.1 m ahead of the bumper, inside the stop gap: full stop
  EXPECT_EQ(a_blocked, -1.0);
  // the same object outside the corridor leaves the speed alone
  Observation aside = straight_obs();
  for (double x = 7.0; x < 9.0; x += 0.1)
    for (double y = 2.0; y < 3.0; y += 0.1) mark_cell(aside, {x, y}, label_of(SemanticClass::vehicle));
  EXPECT_EQ(pure_pursuit(aside, 6.0, kLimits).a2, a_free);
}

TEST(PurePursuit, PathLateralInterpolates) {
  Observation o = straight_obs();
  o.waypoints[0] = {2.0, 1.0};
  EXPECT_NEAR(path_lateral_at(o.waypoints, 1.0), 0.5, 1e-12);
  EXPECT_NEAR(path_lateral_at(o.waypoints, 3.0), 0.5, 1e-12);
  EXPECT_NEAR(path_lateral_at(o.waypoints, 100.0), 0.0, 1e-12);
}

TEST(RandomJitter, DeterministicBoundedAndVaried) {
  const RandomJitterPolicy p(kLimits, 0.6, 3);
  Observation o = straight_obs();
  double lo = 1, hi = -1;
  for (std::uint64_t c = 0; c < 500; ++c) {
    o.cycle = c;
    const PolicyOutput a = p.act(o), b = p.act(o);
    EXPECT_EQ(a, b);
    EXPECT_LE(std::abs(a.a1), 0.6);
    lo = std::min(lo, a.a1);
    hi = std::max(hi, a.a1);
  }
  EXPECT_LT(lo, -0.5);
  EXPECT_GT(hi, 0.5);
}

TEST(Features, SectorsPartitionForwardDisc) {
  const auto& sizes = features::sector_sizes();
  int total = 0;
  for (int n : sizes) {
    EXPECT_GT(n, 0);
    total += n;
  }
  int counted = 0;
  const BevGridSpec g;
  for (int r = 0; r < kBevCells; ++r)
    for (int c = 0; c < kBevCells; ++c) {
      const GroundPoint p = g.cell_center(r, c);
      const bool inside = p.x > 0 && std::hypot(p.x, p.y) < 10.0;
      EXPECT_EQ(features::sector_of(r, c) >= 0, inside);
      counted += inside;
    }
  EXPECT_EQ(total, counted);
  // half-disc of radius 10 m in cells of (20/192)^2
  EXPECT_NEAR(total * std::pow(20.0 / 192, 2), std::numbers::pi * 50.0, 0.5);
  // left/right mirror
  for (int s = 0; s < 6; ++s) EXPECT_EQ(sizes[s], sizes[5 - s]);
}

TEST(Features, ExtractOnKnownObservation) {
  Observation o = straight_obs();
  o.state = {0.5, -0.25, 0.1};
  const BevGridSpec g;
  // fill the whole forward disc with road
  for (int r = 0; r < kBevCells; ++r)
    for (int c = 0; c < kBevCells; ++c)
      if (features::sector_of(r, c) >= 0) o.bev.set(r, c, 0, true);
  const auto f = features::extract(o);
  for (int s = 0; s < features::kSectors; ++s) {
    EXPECT_EQ(f[s], 1.0);
    EXPECT_EQ(f[features::kSectors + s], 0.0);
  }
  EXPECT_EQ(f[features::kBevFeatures], 0.0);  // straight waypoints: zero bearing
  EXPECT_EQ(f[features::kCount - 4], 0.5);
  EXPECT_EQ(f[features::kCount - 3], -0.25);
  EXPECT_EQ(f[features::kCount - 1], 1.0);
  o.state[0] = std::nan("");
  EXPECT_THROW(features::extract(o), std::invalid_argument);
}

TEST(Learnable, ZeroParametersGiveCenterOutput) {
  const LearnablePolicy p;
  EXPECT_EQ(evaluate_policy(p, straight_obs()), (PolicyOutput{0.0, 0.0}));
  EXPECT_EQ(p.lipschitz_bound(), 0.0);
  EXPECT_THROW(LearnablePolicy(std::vector<double>(3, 0.0)), std::invalid_argument);
}

TEST(Learnable, OutputsStayInBoxForExtremeWeights) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 100.0);
  std::vector<double> w(LearnablePolicy::kParams);
  for (auto& x : w) x = n(rng);
  const LearnablePolicy p(w);
  Observation o = straight_obs();
  for (int i = 0; i < 50; ++i) {
    o.state = {n(rng), n(rng), n(rng)};
    const PolicyOutput out = evaluate_policy(p, o);
    EXPECT_LE(std::abs(out.a1), 1.0);
    EXPECT_LE(std::abs(out.a2), 1.0);
  }
}

TEST(Learnable, SingleCellPerturbationWithinLipschitzBound) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 20.0);
  std::uniform_int_distribution<int> cell(0, kBevCells - 1), ch(0, kBevChannels - 1);
  std::bernoulli_distribution coin(0.3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> w(LearnablePolicy::kParams);
    for (auto& x : w) x = n(rng);
    const LearnablePolicy p(w);
    const double bound = p.lipschitz_bound();
    Observation o = straight_obs();
    for (int k = 0; k < 3000; ++k) o.bev.set(cell(rng), cell(rng), ch(rng), coin(rng));
    const PolicyOutput base = p.act(o);
    for (int k = 0; k < 100; ++k) {
      Observation q = o;
      const int r = cell(rng), c = cell(rng), h = ch(rng);
      q.bev.set(r, c, h, !q.bev.at(r, c, h));
      const PolicyOutput out = p.act(q);
      EXPECT_LE(std::hypot(out.a1 - base.a1, out.a2 - base.a2), bound * 1.0 + 1e-12);
    }
  }
}

TEST(Learnable, LipschitzBoundIsAttainedInTheLinearRegime) {
  // one nonzero weight: the bound equals |w| / N and a flip moves the
  // pre-activation by exactly that much
  std::vector<double> w(LearnablePolicy::kParams, 0.0);
  w[features::kSectors + 2] = 3.0;  // object group, sector 2, output a1
  const LearnablePolicy p(w);
  const double n = features::sector_sizes()[2];
  EXPECT_NEAR(p.lipschitz_bound(), 3.0 / n, 1e-15);
  Observation o = straight_obs();
  int r0 = -1, c0 = -1;
  for (int r = 0; r < kBevCells && r0 < 0; ++r)
    for (int c = 0; c < kBevCells; ++c)
      if (features::sector_of(r, c) == 2) {
        r0 = r;
        c0 = c;
        break;
      }
  o.bev.set(r0, c0, label_of(SemanticClass::obstacle), true);
  EXPECT_NEAR(std::atanh(p.act(o).a1), 3.0 / n, 1e-12);
}

TEST(PolicyFile, RoundTripExact) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  std::vector<double> w(LearnablePolicy::kParams);
  for (auto& x : w) x = n(rng);
  const LearnablePolicy p(w);
  std::stringstream ss;
  write_policy(ss, p);
  EXPECT_EQ(read_policy(ss).params(), p.params());
}

TEST(PolicyFile, Malformed) {
  std::stringstream bad1("nonsense\n");
  EXPECT_THROW(read_policy(bad1), std::runtime_error);
  std::stringstream bad2("bevbridge-policy\nfeatures 9 58\nparams 116\n");
  EXPECT_THROW(read_policy(bad2), std::runtime_error);
  std::stringstream bad3("bevbridge-policy\nfeatures 1 58\nparams 116\n1.0\n");
  EXPECT_THROW(read_policy(bad3), std::runtime_error);
  EXPECT_THROW(make_policy("/nonexistent/policy.txt", kLimits), std::runtime_error);
}

TEST(PolicyFactory, BuiltinNames) {
  for (const char* name : {"pure_pursuit", "pure_pursuit_detuned", "random_jitter", "zero"})
    EXPECT_NE(make_policy(name, kLimits), nullptr) << name;
}

TEST(Reward, Examples) {
  EXPECT_EQ(task_reward({}), 0.0);
  EXPECT_EQ(task_reward({1.0, false, 0.0, 0.0}), 1.0);
  EXPECT_EQ(task_reward({0.0, true, 0.0, 0.0}), -10.0);
  EXPECT_EQ(task_reward({0.0, false, 2.0, 0.0}), -1.0);
  EXPECT_NEAR(task_reward({0.0, false, 0.0, 15.0 / 3.6 + 1.0}), -0.5, 1e-12);
}

TEST(Reward, BoundedByRmax) {
  const RewardWeights w;
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-100, 100);
  std::bernoulli_distribution coin(0.5);
  for (int i = 0; i < 10000; ++i) {
    const Transition t{u(rng), coin(rng), u(rng), u(rng)};
    EXPECT_LE(std::abs(task_reward(t, w)), w.r_max());
  }
  EXPECT_NEAR(w.r_max(), 1.0 + 10 + 1.5 + 0.5 * (15 - 15 / 3.6), 1e-12);
  EXPECT_EQ(w.lipschitz(), 3.0);
}

TEST(Return, Examples) {
  const std::vector<double> zeros(10, 0.0), ones{1, 1, 1};
  EXPECT_EQ(discounted_return(zeros, 0.9), 0.0);
  EXPECT_EQ(discounted_return(ones, 0.5), 1.75);
  const std::vector<double> c(50, 2.0);
  EXPECT_NEAR(discounted_return(c, 0.9), 2.0 * (1 - std::pow(0.9, 50)) / (1 - 0.9), 1e-12);
  EXPECT_THROW(discounted_return(ones, 1.0), std::invalid_argument);
  EXPECT_THROW(discounted_return(ones, 0.0), std::invalid_argument);
}
