#include "bevbridge/pam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "bevbridge/csv.hpp"
#include "bevbridge/keyvalue.hpp"

namespace bevbridge {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

void ActionLimits::validate() const {
  require(std::isfinite(kappa_max) && kappa_max > 0.0, "limits: kappa_max must be > 0");
  require(std::isfinite(v_max) && v_max > 0.0, "limits: v_max must be > 0");
}

ActionLimits ActionLimits::for_platform(const PlatformParams& p, double v_max) {
  return {p.reachable_kappa(), v_max};
}

void PlatformParams::validate() const {
  require(std::isfinite(L) && L > 0.0, "platform: L must be > 0");
  require(delta_max > 0.0 && delta_max < std::numbers::pi / 2,
          "platform: delta_max must lie in (0, pi/2)");
  require(Kp >= 0.0 && Ki >= 0.0 && Kd >= 0.0, "platform: PID gains must be >= 0");
  require(std::isfinite(e_max) && e_max > 0.0, "platform: e_max must be > 0");
  require(std::isfinite(d_delta_max) && d_delta_max > 0.0, "platform: d_delta_max must be > 0");
}

double PlatformParams::reachable_kappa() const { return std::tan(delta_max) / L; }

void PlatformParams::set_gains(const PidGains& g) {
  Kp = g.Kp;
  Ki = g.Ki;
  Kd = g.Kd;
}

PlatformParams carla_default_platform() {
  PlatformParams p;
  p.name = "carla-default";
  p.L = 2.875;
  p.delta_max = 70.0 * kDeg;
  p.Kp = 0.5;
  p.Ki = 0.05;
  p.Kd = 0.1;
  return p;
}

PlatformParams e_transit_platform() {
  PlatformParams p;
  p.name = "e-transit";
  p.L = 3.67;
  p.delta_max = 38.5 * kDeg;
  p.Kp = 0.8;
  p.Ki = 0.1;
  p.Kd = 0.15;
  return p;
}

PlatformParams platform_preset(const std::string& name) {
  if (name == "carla-default") return carla_default_platform();
  if (name == "e-transit") return e_transit_platform();
  throw std::invalid_argument("unknown platform preset '" + name +
                              "' (expected carla-default or e-transit)");
}

namespace {

PlatformParams platform_from(const KeyValueFile& f) {
  const KeyValueSection* s = f.first("platform");
  if (!s) s = &f.sections.front();
  PlatformParams p = s->has("preset") ? platform_preset(s->get("preset")) : PlatformParams{};
  p.name = s->get_string("name", p.name.empty() ? "custom" : p.name);
  p.L = s->get_number("L", p.L);
  if (s->has("delta_max_deg")) p.delta_max = s->get_number("delta_max_deg") * kDeg;
  p.Kp = s->get_number("Kp", p.Kp);
  p.Ki = s->get_number("Ki", p.Ki);
  p.Kd = s->get_number("Kd", p.Kd);
  p.e_max = s->get_number("e_max", p.e_max);
  p.d_delta_max = s->get_number("d_delta_max", p.d_delta_max);
  p.validate();
  return p;
}

}  // namespace

PlatformParams load_platform_file(const std::string& path) {
  return platform_from(load_key_value_file(path));
}

PlatformParams parse_platform_text(const std::string& text) {
  return platform_from(parse_key_value_text(text));
}

std::string platform_to_text(const PlatformParams& p) {
  std::ostringstream os;
  os << "# platform parameters; delta_max_deg in degrees, e_max in m/s,\n"
     << "# d_delta_max is the per-cycle limit on normalized steering\n"
     << "[platform]\n"
     << "name = " << p.name << '\n'
     << "L = " << format_exact(p.L) << '\n'
     << "delta_max_deg = " << format_exact(p.delta_max / kDeg) << '\n'
     << "Kp = " << format_exact(p.Kp) << '\n'
     << "Ki = " << format_exact(p.Ki) << '\n'
     << "Kd = " << format_exact(p.Kd) << '\n'
     << "e_max = " << format_exact(p.e_max) << '\n'
     << "d_delta_max = " << format_exact(p.d_delta_max) << '\n';
  return os.str();
}

PhysicsAction decode_action(const PolicyOutput& out, const ActionLimits& lim) {
  require(std::isfinite(out.a1) && std::isfinite(out.a2), "decode_action: non-finite output");
  require(std::abs(out.a1) <= 1.0 && std::abs(out.a2) <= 1.0,
          "decode_action: output outside [-1, 1]");
  return {out.a1 * lim.kappa_max, (out.a2 + 1.0) / 2.0 * lim.v_max};
}

double curvature_to_steering(double kappa, const PlatformParams& p) {
  require(std::isfinite(kappa), "curvature_to_steering: non-finite curvature");
  return std::clamp(std::atan(p.L * kappa) / p.delta_max, -1.0, 1.0);
}

double steering_to_curvature(double u_delta, const PlatformParams& p) {
  return std::tan(u_delta * p.delta_max) / p.L;
}

PidStep pid_step(const PidState& state, double v_des, double v, double dt, const PlatformParams& p) {
  require(std::isfinite(v_des) && std::isfinite(v), "pid_step: non-finite speed");
  require(std::isfinite(dt) && dt > 0.0, "pid_step: dt must be > 0");
  const double e = v_des - v;
  PidStep out;
  out.state.e_int = std::clamp(state.e_int + e * dt, -p.e_max, p.e_max);
  out.state.e_prev = e;
  const double raw = p.Kp * e + p.Ki * out.state.e_int + p.Kd * (e - state.e_prev) / dt;
  out.u_v = std::clamp(raw, -1.0, 1.0);
  return out;
}

PamStep pam_map(const PhysicsAction& act, double v_current, double dt, const PlatformParams& p,
                const PidState& state) {
  require(std::isfinite(act.kappa) && std::isfinite(act.v_des), "pam_map: non-finite action");
  const PidStep s = pid_step(state, act.v_des, v_current, dt, p);
  return {{curvature_to_steering(act.kappa, p), s.u_v}, s.state};
}

PlatformConversion convert_platform(const PhysicsAction& act, const PlatformParams&,
                                    const PlatformParams& to) {
  require(std::isfinite(act.kappa) && std::isfinite(act.v_des), "convert_platform: non-finite action");
  return {act, std::abs(act.kappa) > to.reachable_kappa()};
}

bool StepResponseMetrics::meets(const StepResponseSpec& spec) const {
  return overshoot <= spec.max_overshoot && zero_crossings <= spec.max_zero_crossings &&
         settling_time <= spec.settling_time;
}

StepResponseMetrics measure_step_response(const std::vector<double>& speeds,
                                          const StepResponseSpec& spec) {
  StepResponseMetrics m;
  const double target = spec.step_speed;
  const double tol = spec.band * target;
  double peak = 0.0;
  int first_settle = -1;
  int last_outside = -1;
  for (std::size_t k = 0; k < speeds.size(); ++k) {
    const double e = target - speeds[k];
    m.iae += std::abs(e) * spec.dt;
    peak = std::max(peak, speeds[k]);
    if (std::abs(e) <= tol) {
      if (first_settle < 0) first_settle = static_cast<int>(k);
    } else {
      last_outside = static_cast<int>(k);
    }
  }
  m.overshoot = std::max(0.0, (peak - target) / target);
  if (first_settle < 0 || last_outside + 1 >= static_cast<int>(speeds.size()))
    m.settling_time = std::numeric_limits<double>::infinity();
  else
    m.settling_time = (last_outside + 2) * spec.dt;  // time of the first sample that stays inside
  if (first_settle >= 0) {
    int sign = 0;
    for (std::size_t k = static_cast<std::size_t>(first_settle); k < speeds.size(); ++k) {
      const double e = target - speeds[k];
      const int s = e > 0 ? 1 : (e < 0 ? -1 : 0);
      if (s == 0) continue;
      if (sign != 0 && s != sign) ++m.zero_crossings;
      sign = s;
    }
  }
  return m;
}

CalibrationGrid CalibrationGrid::logarithmic() {
  CalibrationGrid g;
  auto logspace = [](double lo, double hi, int n) {
    std::vector<double> v;
    for (int i = 0; i < n; ++i) v.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1)));
    return v;
  };
  g.kp = logspace(0.05, 10.0, 13);
  g.ki = logspace(0.005, 2.0, 9);
  g.ki.insert(g.ki.begin(), 0.0);
  g.kd = logspace(0.005, 0.5, 6);
  g.kd.insert(g.kd.begin(), 0.0);
  return g;
}

namespace {

// Lower is better; feasible candidates always beat infeasible ones.
double violation_amount(const StepResponseMetrics& m, const StepResponseSpec& spec) {
  double v = 0.0;
  v += std::max(0.0, m.overshoot - spec.max_overshoot) / spec.max_overshoot;
  v += std::max(0, m.zero_crossings - spec.max_zero_crossings);
  const double ts = std::isfinite(m.settling_time) ? m.settling_time : 2.0 * spec.duration;
  v += std::max(0.0, ts - spec.settling_time) / spec.settling_time;
  return v;
}

}  // namespace

CalibrationResult calibrate_pid(const SpeedPlant& plant, const PlatformParams& base,
                                const StepResponseSpec& spec, const CalibrationGrid& grid) {
  require(spec.step_speed > 0.0 && spec.duration > 0.0 && spec.dt > 0.0,
          "calibrate_pid: invalid step-response spec");
  require(!grid.kp.empty() && !grid.ki.empty() && !grid.kd.empty(), "calibrate_pid: empty grid");
  CalibrationResult res;
  int best = -1;
  double best_violation = 0.0;
  for (double kp : grid.kp)
    for (double ki : grid.ki)
      for (double kd : grid.kd) {
        PlatformParams p = base;
        p.set_gains({kp, ki, kd});
        const auto trace = plant(p, spec);
        CalibrationCandidate c{{kp, ki, kd}, measure_step_response(trace, spec), false};
        c.feasible = c.metrics.meets(spec);
        const double viol = violation_amount(c.metrics, spec);
        res.candidates.push_back(c);
        const int idx = static_cast<int>(res.candidates.size()) - 1;
        if (best < 0) {
          best = idx;
          best_violation = viol;
          continue;
        }
        const auto& b = res.candidates[best];
        // strict comparisons keep the first grid point among ties
        const bool better = (viol < best_violation) ||
                            (viol == best_violation && c.metrics.iae < b.metrics.iae);
        if (better) {
          best = idx;
          best_violation = viol;
        }
      }
  const auto& chosen = res.candidates[best];
  res.params = base;
  res.params.set_gains(chosen.gains);
  res.metrics = chosen.metrics;
  res.feasible = chosen.feasible;
  res.response = plant(res.params, spec);
  if (!res.feasible) {
    std::ostringstream os;
    os << "no gain triple meets the step-response spec;";
    if (chosen.metrics.overshoot > spec.max_overshoot)
      os << " overshoot " << format_number(chosen.metrics.overshoot, 4) << " > "
         << format_number(spec.max_overshoot, 4) << ';';
    if (chosen.metrics.zero_crossings > spec.max_zero_crossings)
      os << " zero crossings " << chosen.metrics.zero_crossings << " > " << spec.max_zero_crossings
         << ';';
    if (!(chosen.metrics.settling_time <= spec.settling_time))
      os << " settling time " << format_number(chosen.metrics.settling_time, 4) << " s > "
         << format_number(spec.settling_time, 4) << " s;";
    res.violation_report = os.str();
  }
  return res;
}

}  // namespace bevbridge
