#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "bevbridge/pam.hpp"
#include "bevbridge/worldsim.hpp"

using namespace bevbridge;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

}  // namespace

TEST(Decode, Corners) {
  const ActionLimits lim{0.5, 10.0};
  EXPECT_EQ(decode_action({0, -1}, lim), (PhysicsAction{0.0, 0.0}));
  EXPECT_EQ(decode_action({1, 1}, lim), (PhysicsAction{0.5, 10.0}));
  EXPECT_EQ(decode_action({-1, 1}, lim), (PhysicsAction{-0.5, 10.0}));
  EXPECT_EQ(decode_action({1, -1}, lim), (PhysicsAction{0.5, 0.0}));
  EXPECT_EQ(decode_action({0, 0}, lim).v_des, 5.0);
}

TEST(Decode, CarlaKappaMax) {
  const ActionLimits lim = ActionLimits::for_platform(carla_default_platform());
  // tan(70 deg) / 2.875
  EXPECT_NEAR(lim.kappa_max, 2.7474774194546216 / 2.875, 1e-15);
  EXPECT_NEAR(lim.kappa_max, 0.9556, 1e-4);
  EXPECT_NEAR(decode_action({0.5, 0}, lim).kappa, 0.4778, 1e-4);
  EXPECT_NEAR(lim.v_max, 35.0 / 3.6, 1e-15);
}

TEST(Decode, LinearInEachComponent) {
  const ActionLimits lim{0.7, 9.0};
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 200; ++i) {
    const double a = u(rng), b = u(rng), t = (u(rng) + 1) / 2;
    const auto pa = decode_action({a, b}, lim), pb = decode_action({b, a}, lim);
    const auto pm = decode_action({t * a + (1 - t) * b, t * b + (1 - t) * a}, lim);
    EXPECT_NEAR(pm.kappa, t * pa.kappa + (1 - t) * pb.kappa, 1e-12);
    EXPECT_NEAR(pm.v_des, t * pa.v_des + (1 - t) * pb.v_des, 1e-12);
  }
}

TEST(Decode, RejectsBadInput) {
  const ActionLimits lim{0.5, 10.0};
  EXPECT_THROW(decode_action({1.01, 0}, lim), std::invalid_argument);
  EXPECT_THROW(decode_action({0, std::nan("")}, lim), std::invalid_argument);
  EXPECT_THROW(decode_action({std::numeric_limits<double>::infinity(), 0}, lim), std::invalid_argument);
}

TEST(Steering, Examples) {
  const PlatformParams et = e_transit_platform();
  EXPECT_EQ(curvature_to_steering(0.0, et), 0.0);
  const double delta = std::atan(3.67 * 0.1);
  EXPECT_NEAR(delta / kDeg, 20.15, 0.01);
  EXPECT_NEAR(curvature_to_steering(0.1, et), delta / (38.5 * kDeg), 1e-15);
  EXPECT_NEAR(curvature_to_steering(0.1, et), 0.5234, 1e-4);
  EXPECT_EQ(curvature_to_steering(5.0, et), 1.0);
  EXPECT_EQ(curvature_to_steering(-5.0, et), -1.0);
  EXPECT_THROW(curvature_to_steering(std::nan(""), et), std::invalid_argument);
}

TEST(Steering, OddMonotoneSaturating) {
  for (const auto& p : {carla_default_platform(), e_transit_platform()}) {
    double prev = -2.0;
    for (double k = -3.0; k <= 3.0; k += 0.001) {
      const double u = curvature_to_steering(k, p);
      EXPECT_EQ(curvature_to_steering(-k, p), -u);
      EXPECT_GE(u, prev);
      EXPECT_LE(std::abs(u), 1.0);
      prev = u;
    }
  }
}

TEST(Steering, BicycleRoundTrip) {
  for (const auto& p : {carla_default_platform(), e_transit_platform()}) {
    const double kmax = p.reachable_kappa();
    for (int i = -999; i <= 999; ++i) {
      const double k = kmax * i / 1000.0;
      const double u = curvature_to_steering(k, p);
      ASSERT_LT(std::abs(u), 1.0);
      const double back = steering_to_curvature(u, p);
      if (k == 0.0)
        EXPECT_EQ(back, 0.0);
      else
        EXPECT_LE(std::abs(back - k) / std::abs(k), 1e-12);
    }
  }
}

TEST(Pid, ZeroErrorGivesZeroCommand) {
  const auto s = pid_step({}, 3.0, 3.0, 0.05, carla_default_platform());
  EXPECT_EQ(s.u_v, 0.0);
  EXPECT_EQ(s.state, (PidState{0.0, 0.0}));
}

TEST(Pid, WorkedExample) {
  const PlatformParams p = carla_default_platform();
  // raw = 0.5*1 + 0.05*(1*0.05) + 0.1*(1/0.05) = 2.5025 -> clamped
  auto s = pid_step({}, 1.0, 0.0, 0.05, p);
  EXPECT_EQ(s.u_v, 1.0);
  EXPECT_NEAR(s.state.e_int, 0.05, 1e-15);
  EXPECT_EQ(s.state.e_prev, 1.0);
  // small error stays in the linear region: 0.005 + 0.05*0.0005 + 0.1*0.2
  s = pid_step({}, 0.01, 0.0, 0.05, p);
  EXPECT_NEAR(s.u_v, 0.025025, 1e-15);
}

TEST(Pid, IntegralSaturatesAtEmax) {
  const PlatformParams p = carla_default_platform();
  PidState st;
  for (int i = 0; i < 1000; ++i) {
    st = pid_step(st, 1.0, 0.0, 0.05, p).state;
    EXPECT_LE(st.e_int, p.e_max);
  }
  EXPECT_EQ(st.e_int, p.e_max);
}

TEST(Pid, IntegralNeverExceedsClipUnderRandomCommands) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> speed(0.0, 15.0), dt(0.001, 0.5);
  for (const auto& p : {carla_default_platform(), e_transit_platform()}) {
    PidState st;
    for (int i = 0; i < 20000; ++i) {
      st = pid_step(st, speed(rng), speed(rng), dt(rng), p).state;
      ASSERT_LE(std::abs(st.e_int), p.e_max);
    }
  }
}

TEST(Pid, RejectsBadInput) {
  const PlatformParams p = carla_default_platform();
  EXPECT_THROW(pid_step({}, 1.0, 0.0, 0.0, p), std::invalid_argument);
  EXPECT_THROW(pid_step({}, std::nan(""), 0.0, 0.05, p), std::invalid_argument);
}

TEST(PamMap, FixedPointAndComposition) {
  const PlatformParams et = e_transit_platform();
  const auto fixed = pam_map({0.0, 4.0}, 4.0, 0.05, et, {});
  EXPECT_EQ(fixed.cmd, (VehicleCommand{0.0, 0.0}));
  const PlatformParams cd = carla_default_platform();
  const auto composed = pam_map({0.1, 1.0}, 0.0, 0.05, cd, {});
  EXPECT_EQ(composed.cmd.u_delta, curvature_to_steering(0.1, cd));
  EXPECT_EQ(composed.cmd.u_v, 1.0);
  EXPECT_THROW(pam_map({std::nan(""), 1.0}, 0.0, 0.05, cd, {}), std::invalid_argument);
}

TEST(ConvertPlatform, IdentityAndEnvelope) {
  const PlatformParams cd = carla_default_platform(), et = e_transit_platform();
  EXPECT_NEAR(et.reachable_kappa(), 0.2168, 1e-4);
  const auto far = convert_platform({0.9, 3.0}, cd, et);
  EXPECT_TRUE(far.unreachable);
  EXPECT_EQ(far.act, (PhysicsAction{0.9, 3.0}));
  const auto zero = convert_platform({0.0, 3.0}, cd, et);
  EXPECT_FALSE(zero.unreachable);
  EXPECT_EQ(zero.act, (PhysicsAction{0.0, 3.0}));
  const auto inside = convert_platform({0.15, 2.0}, cd, et);
  EXPECT_FALSE(inside.unreachable);
  EXPECT_EQ(inside.act, (PhysicsAction{0.15, 2.0}));
}

TEST(ConvertPlatform, FactoredCurvatureOnLagFreePlant) {
  // the same physical action drives both platforms along the commanded curvature
  for (const auto& p : {carla_default_platform(), e_transit_platform()}) {
    World w;
    w.platform = p;
    w.actuator.steer_slew_time = 0.0;
    w.actuator.lag = 0.0;
    w.ego.v = 3.0;
    const PhysicsAction act{0.1, 3.0};
    PidState pid;
    for (int i = 0; i < 40; ++i) {
      const auto m = pam_map(act, w.ego.v, kControlDt, p, pid);
      pid = m.state;
      const double psi0 = w.ego.psi, v0 = w.ego.v;
      w = step(w, m.cmd, kControlDt);
      EXPECT_NEAR(wrap_angle(w.ego.psi - psi0) / (v0 * kControlDt), 0.1, 1e-12);
    }
  }
}

TEST(PlatformFile, RoundTripAndPresets) {
  for (const auto& p : {carla_default_platform(), e_transit_platform()}) {
    const PlatformParams back = parse_platform_text(platform_to_text(p));
    EXPECT_EQ(back, p);
  }
  const PlatformParams partial = parse_platform_text("preset = e-transit\nKp = 1.5\n");
  EXPECT_EQ(partial.Kp, 1.5);
  EXPECT_EQ(partial.L, 3.67);
  EXPECT_THROW(platform_preset("tractor"), std::invalid_argument);
  EXPECT_THROW(parse_platform_text("L = -1\n"), std::invalid_argument);
}

TEST(StepResponse, MetricsOnHandTrace) {
  StepResponseSpec spec;
  spec.step_speed = 1.0;
  spec.dt = 1.0;
  // overshoot 20%, first inside band at index 2, last outside at 3
  const std::vector<double> trace = {0.5, 0.99, 1.2, 0.97, 1.01, 1.0};
  const auto m = measure_step_response(trace, spec);
  EXPECT_NEAR(m.overshoot, 0.2, 1e-12);
  EXPECT_EQ(m.settling_time, 5.0);
  EXPECT_EQ(m.zero_crossings, 3);  // +, -, +, -
  EXPECT_NEAR(m.iae, 0.5 + 0.01 + 0.2 + 0.03 + 0.01 + 0.0, 1e-12);
}

TEST(Calibration, LagFreePlantMeetsTwoSecondSpec) {
  ActuatorModel ideal;
  ideal.lag = 0.0;
  StepResponseSpec spec;
  spec.settling_time = 2.0;
  const auto plant = make_speed_plant(ideal);
  const auto res = calibrate_pid(plant, carla_default_platform(), spec);
  ASSERT_TRUE(res.feasible) << res.violation_report;
  // re-simulate the selected gains independently of the search
  const auto m = measure_step_response(plant(res.params, spec), spec);
  EXPECT_LE(m.settling_time, 2.0);
  EXPECT_LE(m.overshoot, 0.10);
  EXPECT_LE(m.zero_crossings, 2);
  // IAE-optimal among feasible candidates
  for (const auto& c : res.candidates)
    if (c.feasible) EXPECT_GE(c.metrics.iae, res.metrics.iae);
}

TEST(Calibration, RespondsToPlantChangeAndIsDeterministic) {
  ActuatorModel ideal;
  ideal.lag = 0.0;
  ActuatorModel lagged;  // 0.2 s default
  const auto a = calibrate_pid(make_speed_plant(ideal), carla_default_platform());
  const auto b = calibrate_pid(make_speed_plant(lagged), carla_default_platform());
  EXPECT_NE(a.params.gains(), b.params.gains());
  const auto b2 = calibrate_pid(make_speed_plant(lagged), carla_default_platform());
  EXPECT_EQ(b.params, b2.params);
  EXPECT_EQ(b.response, b2.response);
}

TEST(Calibration, ImpossibleSpecFlagsWarning) {
  StepResponseSpec spec;
  spec.settling_time = 0.01;
  const auto res = calibrate_pid(make_speed_plant(ActuatorModel{}), carla_default_platform(), spec);
  EXPECT_FALSE(res.feasible);
  EXPECT_NE(res.violation_report.find("settling time"), std::string::npos);
}
