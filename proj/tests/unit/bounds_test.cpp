#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "bevbridge/bounds.hpp"
#include "bevbridge/scenario.hpp"

using namespace bevbridge;

namespace {

FinitePomdp single_state(double reward, double gamma) {
  FinitePomdp m;
  m.transition = {{{1.0}}};
  m.obs_a = m.obs_b = {{1.0}};
  m.reward = {{reward}};
  m.gamma = gamma;
  m.r_max = std::abs(reward);
  m.initial = {1.0};
  return m;
}

// Direct solve of (I - gamma P) V = r by Gaussian elimination.
double direct_return(const FinitePomdp& m, const ReactivePolicy& pi, ObsKernel k) {
  const Matrix& O = k == ObsKernel::a ? m.obs_a : m.obs_b;
  const int n = m.n_states;
  Matrix A(n, std::vector<double>(n + 1, 0.0));
  for (int s = 0; s < n; ++s) {
    A[s][s] = 1.0;
    for (int o = 0; o < m.n_obs; ++o)
      for (int a = 0; a < m.n_actions; ++a) {
        const double p = O[s][o] * pi[o][a];
        A[s][n] += p * m.reward[s][a];
        for (int t = 0; t < n; ++t) A[s][t] -= m.gamma * p * m.transition[s][a][t];
      }
  }
  for (int c = 0; c < n; ++c) {
    int piv = c;
    for (int r = c + 1; r < n; ++r)
      if (std::abs(A[r][c]) > std::abs(A[piv][c])) piv = r;
    std::swap(A[c], A[piv]);
    for (int r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = A[r][c] / A[c][c];
      for (int j = c; j <= n; ++j) A[r][j] -= f * A[c][j];
    }
  }
  double j = 0.0;
  for (int s = 0; s < n; ++s) j += m.initial[s] * A[s][n] / A[s][s];
  return j;
}

}  // namespace

TEST(BoundReport, SlackAndViolation) {
  const auto r = make_bound_report("x", "i", 2.0, 1.5, 0.1);
  EXPECT_EQ(r.slack, -0.5);
  EXPECT_TRUE(r.violated);
  EXPECT_FALSE(make_bound_report("x", "i", 1.55, 1.5, 0.1).violated);
  const std::vector<BoundReport> rows{make_bound_report("a", "", 0, 1), make_bound_report("b", "", 2, 1),
                                      make_bound_report("a", "", 0, 3)};
  const auto s = summarize_reports(rows);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].rows, 2u);
  EXPECT_EQ(s[0].median_slack, 2.0);
  EXPECT_EQ(s[1].violations, 1u);
  std::ostringstream os;
  write_bound_reports(os, rows);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "check,instance,measured,bound,slack,violated");
}

TEST(Lipschitz, ConstantPolicyIsZero) {
  const ConstantPolicy p({0.3, -0.2});
  EXPECT_EQ(estimate_lipschitz(p, random_bev_sampler(1), 5, 2).l_hat, 0.0);
}

TEST(Lipschitz, CellSumMatchesAnalyticSlope) {
  // operating point: the base observations have no set cells, offset 0
  const double c = 1e-3;
  const CellSumPolicy p(c, 4, 0.0, CellSumPolicy::Squash::tanh);
  const ObservationSampler empty = [](std::uint64_t) { return Observation{}; };
  const auto est = estimate_lipschitz(p, empty, 300, 5, 8);
  // a single flip on channel 4 changes the output by tanh(c)
  EXPECT_NEAR(est.l_hat, std::tanh(c), 1e-15);
  EXPECT_NEAR(est.l_hat, p.slope_at(0.0), c * c);
  EXPECT_LE(est.l_hat, p.analytic_lipschitz());
  EXPECT_EQ(est.argmax_cells, 1);
}

TEST(Lipschitz, LearnablePolicyWithinFeatureMapBound) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<double> w(LearnablePolicy::kParams);
    for (auto& x : w) x = n(rng);
    const LearnablePolicy p(w);
    const auto est = estimate_lipschitz(p, random_bev_sampler(trial, 0.05), 20, trial);
    EXPECT_GT(est.l_hat, 0.0);
    EXPECT_LE(est.l_hat, p.lipschitz_bound() * (1 + 1e-12));
  }
}

TEST(GobBound, ZeroNoiseBothSidesVanish) {
  const auto gen = gob_pair_generator(default_scenario(ScenarioId::car_following), SegNoiseModel{0.0, 0, 3}, 1);
  const CellSumPolicy p(1e-3, 0, 3000.0);
  const auto r = check_gob_bound(p, 1e-3, gen, 3);
  EXPECT_EQ(r.epsilon_hat, 0.0);
  EXPECT_EQ(r.report.measured, 0.0);
  EXPECT_EQ(r.report.bound, 0.0);
  EXPECT_FALSE(r.report.violated);
}

TEST(GobBound, ConstantAndLinearPolicies) {
  const auto gen = gob_pair_generator(default_scenario(ScenarioId::car_following), SegNoiseModel{0.05, 0, 3}, 2);
  const ConstantPolicy k({0.1, 0.1});
  const auto rk = check_gob_bound(k, 0.0, gen, 4);
  EXPECT_EQ(rk.report.measured, 0.0);
  EXPECT_GT(rk.epsilon_hat, 0.0);
  EXPECT_FALSE(rk.report.violated);
  const CellSumPolicy lin(1e-4, 0, 3000.0);
  const auto rl = check_gob_bound(lin, lin.analytic_lipschitz(), gen, 20);
  EXPECT_GT(rl.report.measured, 0.0);
  EXPECT_FALSE(rl.report.violated);
  EXPECT_GT(rl.report.slack, 0.0);
}

TEST(PamBound, WorkedExample) {
  EXPECT_NEAR(pam_bound(4.17, 2.0, 0.01), 0.347778, 1e-6);
  EXPECT_NEAR(pam_bound(4.17, 4.0, 0.01), 4.0 * pam_bound(4.17, 2.0, 0.01), 1e-12);
}

TEST(PamBound, ZeroDisturbanceGivesZeroError) {
  const auto rows = check_pam_bound(carla_default_platform(), 4.17, 2.0, 0.0, 50, 1);
  for (const auto& r : rows) {
    EXPECT_EQ(r.measured, 0.0);
    EXPECT_EQ(r.slack, 0.0);
  }
}

TEST(PamBound, ConstantSignMatchesClosedForm) {
  // straight intended path vs an arc of curvature eps turned through th = v eps T
  PamTrial t;
  t.v = 4.17;
  t.horizon = 2.0;
  t.eps_pid = 0.01;
  const double th = t.v * t.eps_pid * t.horizon;
  const double exact = std::hypot(t.v * t.horizon - std::sin(th) / t.eps_pid, (1.0 - std::cos(th)) / t.eps_pid);
  const double measured = simulate_tracking_error(t);
  EXPECT_NEAR(measured, exact, t.v * t.v * t.eps_pid * kPamDt * t.horizon);
  EXPECT_LE(measured, pam_bound(4.17, 2.0, 0.01));
}

TEST(PamBound, SweepHoldsAndGrowsWithHorizon) {
  const auto theta = carla_default_platform();
  const auto a = check_pam_bound(theta, 4.17, 2.0, 0.01, 100, 3);
  const auto b = check_pam_bound(theta, 4.17, 4.0, 0.01, 100, 3);
  double wa = 0, wb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_FALSE(a[i].violated);
    EXPECT_FALSE(b[i].violated);
    wa = std::max(wa, a[i].measured);
    wb = std::max(wb, b[i].measured);
  }
  EXPECT_GT(wb, wa);
  for (const auto& r : pam_bound_sweep(theta, 4.17, 5.0, 0.05, 100, 4)) EXPECT_FALSE(r.violated);
}

TEST(ValueIteration, TrivialCases) {
  FinitePomdp zero = single_state(0.0, 0.9);
  zero.r_max = 1.0;
  EXPECT_EQ(value_iteration(zero, {{1.0}}, ObsKernel::a).j, 0.0);
  const auto r = value_iteration(single_state(1.0, 0.9), {{1.0}}, ObsKernel::a);
  EXPECT_NEAR(r.j, 10.0, 1e-10);
  EXPECT_LE(r.residual, 1e-12);
}

TEST(ValueIteration, MatchesDirectSolve) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const FinitePomdp m = random_pomdp(seed);
    const auto pi = random_reactive_policy(m.n_obs, m.n_actions, seed + 100);
    for (ObsKernel k : {ObsKernel::a, ObsKernel::b})
      EXPECT_NEAR(value_iteration(m, pi, k).j, direct_return(m, pi, k), 1e-9);
  }
}

TEST(ValueIteration, MonteCarloAgreesOnThreeStateInstance) {
  RandomPomdpLimits lim;
  lim.max_states = 3;
  FinitePomdp m = random_pomdp(42, lim);
  const auto pi = random_reactive_policy(m.n_obs, m.n_actions, 43);
  const double j = value_iteration(m, pi, ObsKernel::a).j;
  const auto mc = monte_carlo_return(m, pi, ObsKernel::a, 100000, 44);
  EXPECT_LE(std::abs(j - mc.mean), 3.0 * mc.std_error);
}

TEST(ValueIteration, RejectsNonStochasticRows) {
  FinitePomdp m = single_state(1.0, 0.9);
  m.transition[0][0][0] = 0.9;
  EXPECT_THROW(value_iteration(m, {{1.0}}, ObsKernel::a), std::invalid_argument);
  FinitePomdp g = single_state(1.0, 1.0);
  EXPECT_THROW(g.validate(), std::invalid_argument);
  FinitePomdp r = single_state(1.0, 0.9);
  r.r_max = 0.5;
  EXPECT_THROW(r.validate(), std::invalid_argument);
}

TEST(TvDistance, Examples) {
  const std::vector<double> p{0.5, 0.5}, q{0.8, 0.2}, a{1.0, 0.0}, b{0.0, 1.0};
  EXPECT_EQ(tv_distance(p, p), 0.0);
  EXPECT_EQ(tv_distance(a, b), 1.0);
  EXPECT_NEAR(tv_distance(p, q), 0.3, 1e-15);
  EXPECT_THROW(tv_distance(p, std::vector<double>{1.0}), std::invalid_argument);
  EXPECT_THROW(tv_distance(p, std::vector<double>{0.7, 0.7}), std::invalid_argument);
}

TEST(TvDistance, MetricAxiomsOnRandomTriples) {
  std::mt19937_64 rng(5);
  std::exponential_distribution<double> e(1.0);
  auto draw = [&](int n) {
    std::vector<double> v(n);
    double s = 0;
    for (auto& x : v) s += (x = e(rng));
    for (auto& x : v) x /= s;
    return v;
  };
  for (int i = 0; i < 500; ++i) {
    const int n = 1 + static_cast<int>(rng() % 6);
    const auto p = draw(n), q = draw(n), r = draw(n);
    const double pq = tv_distance(p, q);
    EXPECT_EQ(pq, tv_distance(q, p));
    EXPECT_GE(pq, 0.0);
    EXPECT_LE(pq, 1.0);
    EXPECT_LE(tv_distance(p, r), pq + tv_distance(q, r) + 1e-15);
  }
}

TEST(TvBound, IdenticalKernelsAndArithmetic) {
  FinitePomdp m = random_pomdp(9);
  m.obs_b = m.obs_a;
  const auto pi = random_reactive_policy(m.n_obs, m.n_actions, 1);
  const auto r = check_tv_bound(m, pi);
  EXPECT_EQ(r.d_tv, 0.0);
  EXPECT_EQ(r.j_a, r.j_b);
  EXPECT_EQ(r.report.slack, 0.0);
  EXPECT_FALSE(r.report.violated);
  // R_max = 1, gamma = 0.9, d_TV = 0.1 -> 20
  FinitePomdp two;
  two.n_obs = 2;
  two.transition = {{{1.0}}};
  two.obs_a = {{0.5, 0.5}};
  two.obs_b = {{0.6, 0.4}};
  two.reward = {{1.0}};
  two.initial = {1.0};
  const auto t = check_tv_bound(two, {{1.0}, {1.0}});
  EXPECT_NEAR(t.d_tv, 0.1, 1e-15);
  EXPECT_NEAR(t.report.bound, 20.0, 1e-12);
}

TEST(TvBound, RandomSweepHasNoViolations) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const FinitePomdp m = random_pomdp(seed);
    const auto pi = random_reactive_policy(m.n_obs, m.n_actions, seed ^ 0xabc);
    const auto r = check_tv_bound(m, pi);
    EXPECT_FALSE(r.report.violated) << seed;
    EXPECT_LE(r.tightness, 1.0);
  }
}

TEST(Pomdp, SerializationRoundTrip) {
  const FinitePomdp m = random_pomdp(77);
  std::stringstream ss;
  write_pomdp(ss, m);
  const FinitePomdp back = read_pomdp(ss);
  EXPECT_EQ(back.transition, m.transition);
  EXPECT_EQ(back.obs_a, m.obs_a);
  EXPECT_EQ(back.obs_b, m.obs_b);
  EXPECT_EQ(back.reward, m.reward);
  EXPECT_EQ(back.gamma, m.gamma);
  EXPECT_EQ(back.initial, m.initial);
  std::istringstream bad("bevbridge-pomdp\nsizes 1 1 1\ngamma x\n");
  EXPECT_THROW(read_pomdp(bad), std::invalid_argument);
  std::istringstream wrong("not-a-pomdp");
  EXPECT_THROW(read_pomdp(wrong), std::invalid_argument);
}

TEST(Curriculum, MatchedAndEqualDistributions) {
  const ScenarioSpec spec = default_scenario(ScenarioId::car_following);
  CyclePipelineMode gt;
  CyclePipelineMode gob;
  gob.source = ObservationSource::gob_bev;
  gob.noise = SegNoiseModel{0.02, 1, 1};
  CyclePipelineMode noisier = gob;
  noisier.noise = SegNoiseModel{0.05, 1, 2};
  const ObservationBuilder bg(gt), bp(gob), bd(noisier);
  std::vector<BevTensor> p1, p2, dep;
  for (std::uint64_t i = 0; i < 6; ++i) {
    const World w = build_scenario(spec, i);
    p1.push_back(bg.bev(w, 0));
    p2.push_back(bp.bev(w, i));
    dep.push_back(bd.bev(w, i + 100));
  }
  const auto same = check_curriculum_ordering(p1, dep, dep);
  EXPECT_EQ(same.measured, 0.0);
  EXPECT_FALSE(same.violated);
  const auto eq = check_curriculum_ordering(p2, p2, dep);
  EXPECT_EQ(eq.slack, 0.0);
  EXPECT_FALSE(eq.violated);
  const auto r = check_curriculum_ordering(p1, p2, dep);
  EXPECT_FALSE(r.violated);
  EXPECT_GE(curriculum_bootstrap(p1, p2, dep, 200, 3), 0.95);
  EXPECT_THROW(check_curriculum_ordering({}, {}, {}), std::invalid_argument);
}

TEST(Composed, AllKnobsZeroIsExact) {
  ScenarioSpec spec = default_scenario(ScenarioId::car_following);
  spec.route_length = 20.0;
  const auto p = composed_reference_policy();
  const auto r = check_composed_bound(spec, p, p.lipschitz_bound(), {}, 1);
  EXPECT_EQ(r.gob_term, 0.0);
  EXPECT_EQ(r.pam_term, 0.0);
  EXPECT_EQ(r.tpt_term, 0.0);
  EXPECT_EQ(r.report.measured, 0.0);
  EXPECT_EQ(r.j_ideal, r.j_degraded);
  EXPECT_FALSE(r.report.violated);
}

TEST(Composed, PamKnobAlone) {
  ScenarioSpec spec = default_scenario(ScenarioId::car_following);
  spec.route_length = 20.0;
  const auto p = composed_reference_policy();
  ComposedKnobs k;
  k.eps_pid = 0.01;
  const auto r = check_composed_bound(spec, p, p.lipschitz_bound(), k, 1);
  EXPECT_EQ(r.gob_term, 0.0);
  EXPECT_EQ(r.tpt_term, 0.0);
  EXPECT_GT(r.pam_term, 0.0);
  EXPECT_EQ(r.j_ideal, r.j_perceived);
  EXPECT_LE(r.report.measured, r.pam_term);
  EXPECT_FALSE(r.report.violated);
}
