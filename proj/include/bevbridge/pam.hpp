#pragma once

#include <functional>
#include <string>
#include <vector>

namespace bevbridge {

struct PolicyOutput {
  double a1 = 0.0;
  double a2 = 0.0;
  friend bool operator==(const PolicyOutput&, const PolicyOutput&) = default;
};

// Platform-agnostic intermediate action: path curvature and desired speed.
struct PhysicsAction {
  double kappa = 0.0;  // 1/m, positive turns left
  double v_des = 0.0;  // m/s
  friend bool operator==(const PhysicsAction&, const PhysicsAction&) = default;
};

struct PlatformParams;

struct ActionLimits {
  double kappa_max = 0.0;  // 1/m
  double v_max = 35.0 / 3.6;

  void validate() const;
  // kappa_max = tan(delta_max) / L of the training platform.
  static ActionLimits for_platform(const PlatformParams& p, double v_max = 35.0 / 3.6);
};

struct PidGains {
  double Kp = 0.0;
  double Ki = 0.0;
  double Kd = 0.0;
  friend bool operator==(const PidGains&, const PidGains&) = default;
};

struct PlatformParams {
  std::string name;
  double L = 2.875;           // wheelbase, m
  double delta_max = 0.0;     // rad
  double Kp = 0.0;
  double Ki = 0.0;
  double Kd = 0.0;
  double e_max = 5.0;         // integral clip, m/s
  double d_delta_max = 0.1;   // steering-rate limit per cycle, normalized

  void validate() const;
  double reachable_kappa() const;  // tan(delta_max) / L
  PidGains gains() const { return {Kp, Ki, Kd}; }
  void set_gains(const PidGains& g);

  friend bool operator==(const PlatformParams&, const PlatformParams&) = default;
};

PlatformParams carla_default_platform();
PlatformParams e_transit_platform();
// "carla-default" or "e-transit"; throws std::invalid_argument otherwise.
PlatformParams platform_preset(const std::string& name);

// Platform file keys: L, delta_max_deg, Kp, Ki, Kd, e_max, d_delta_max, and
// optionally preset (values not given fall back to that preset).
PlatformParams load_platform_file(const std::string& path);
PlatformParams parse_platform_text(const std::string& text);
std::string platform_to_text(const PlatformParams& p);

struct PidState {
  double e_int = 0.0;
  double e_prev = 0.0;
  friend bool operator==(const PidState&, const PidState&) = default;
};

struct VehicleCommand {
  double u_delta = 0.0;
  double u_v = 0.0;
  friend bool operator==(const VehicleCommand&, const VehicleCommand&) = default;
};

// Throws std::invalid_argument for non-finite or out-of-range inputs.
PhysicsAction decode_action(const PolicyOutput& out, const ActionLimits& lim);

// clamp(atan(L kappa) / delta_max, -1, 1); throws on non-finite kappa.
double curvature_to_steering(double kappa, const PlatformParams& p);
// Inverse of the unsaturated branch: tan(u delta_max) / L.
double steering_to_curvature(double u_delta, const PlatformParams& p);

struct PidStep {
  double u_v = 0.0;
  PidState state;
};

PidStep pid_step(const PidState& state, double v_des, double v, double dt, const PlatformParams& p);

struct PamStep {
  VehicleCommand cmd;
  PidState state;
};

PamStep pam_map(const PhysicsAction& act, double v_current, double dt, const PlatformParams& p,
                const PidState& state);

struct PlatformConversion {
  PhysicsAction act;
  bool unreachable = false;  // |kappa| exceeds the target's tan(delta_max)/L
};

PlatformConversion convert_platform(const PhysicsAction& act, const PlatformParams& from,
                                    const PlatformParams& to);

// Speed step-response calibration.

struct StepResponseSpec {
  double step_speed = 0.5 * 35.0 / 3.6;  // m/s, starting from rest
  double duration = 10.0;                // s
  double dt = 0.05;                      // s
  double max_overshoot = 0.10;           // fraction of step
  int max_zero_crossings = 2;            // error sign changes after first settle
  double settling_time = 3.0;            // s, 2% band
  double band = 0.02;
};

struct StepResponseMetrics {
  double iae = 0.0;
  double overshoot = 0.0;
  double settling_time = 0.0;  // infinity when never settled
  int zero_crossings = 0;
  bool meets(const StepResponseSpec& spec) const;
};

// speeds[k] is the speed after k+1 steps; starts from rest.
StepResponseMetrics measure_step_response(const std::vector<double>& speeds,
                                          const StepResponseSpec& spec);

// Deterministic map from gains (plus the fixed platform fields) to the
// recorded speed trace of one step-response run.
using SpeedPlant = std::function<std::vector<double>(const PlatformParams&, const StepResponseSpec&)>;

struct CalibrationCandidate {
  PidGains gains;
  StepResponseMetrics metrics;
  bool feasible = false;
};

struct CalibrationResult {
  PlatformParams params;           // base platform with the selected gains
  StepResponseMetrics metrics;
  bool feasible = false;           // false: best effort, constraints violated
  std::string violation_report;    // empty when feasible
  std::vector<double> response;    // speed trace of the selected gains
  std::vector<CalibrationCandidate> candidates;
};

struct CalibrationGrid {
  std::vector<double> kp;
  std::vector<double> ki;
  std::vector<double> kd;
  static CalibrationGrid logarithmic();
};

CalibrationResult calibrate_pid(const SpeedPlant& plant, const PlatformParams& base,
                                const StepResponseSpec& spec = {},
                                const CalibrationGrid& grid = CalibrationGrid::logarithmic());

}  // namespace bevbridge
