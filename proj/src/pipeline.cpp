#include "bevbridge/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include "bevbridge/csv.hpp"
#include "bevbridge/hashing.hpp"

namespace bevbridge {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

bool finite(const PolicyOutput& o) { return std::isfinite(o.a1) && std::isfinite(o.a2); }

double route_s(const Polyline& route, Point2 p) { return project_onto(route, p).s; }

}  // namespace

void SafetyLimits::validate() const {
  for (double v : {v_limit, d_limit, d_delta_max, r_safe, obstacle_half_width, geofence_margin})
    if (!std::isfinite(v) || v <= 0.0) throw std::invalid_argument("safety limits must be finite and > 0");
  if (obstacle_min_cells < 1) throw std::invalid_argument("obstacle_min_cells must be >= 1");
  if (!geofence.empty() && geofence.size() < 3) throw std::invalid_argument("geofence needs >= 3 vertices");
}

std::string_view safety_event_name(SafetyEventKind k) {
  switch (k) {
    case SafetyEventKind::speed_capped: return "speed_capped";
    case SafetyEventKind::steer_rate_clipped: return "steer_rate_clipped";
    case SafetyEventKind::emergency_brake_nan: return "emergency_brake_nan";
    case SafetyEventKind::emergency_brake_lane: return "emergency_brake_lane";
    case SafetyEventKind::emergency_brake_obstacle: return "emergency_brake_obstacle";
    case SafetyEventKind::emergency_brake_geofence: return "emergency_brake_geofence";
    case SafetyEventKind::estop: return "estop";
    case SafetyEventKind::takeover: return "takeover";
  }
  return "?";
}

bool is_emergency(SafetyEventKind k) {
  return k != SafetyEventKind::speed_capped && k != SafetyEventKind::steer_rate_clipped &&
         k != SafetyEventKind::takeover;
}

SafetyOutcome apply_safety(const VehicleCommand& cmd, const SafetyInputs& in, const SafetyLimits& limits) {
  SafetyOutcome out;
  out.cmd = cmd;
  if (in.nan || !std::isfinite(cmd.u_delta) || !std::isfinite(cmd.u_v)) {
    out.cmd = {0.0, -1.0};
    out.events.push_back(SafetyEventKind::emergency_brake_nan);
    out.emergency = true;
  }
  if (!limits.enabled) return out;

  if (!out.emergency) {
    const double bound = (limits.v_limit - in.speed) / (in.a_max * in.dt);
    if (out.cmd.u_v > bound) {
      out.cmd.u_v = std::max(bound, -1.0);
      out.events.push_back(SafetyEventKind::speed_capped);
    }
    const double step = out.cmd.u_delta - in.prev_u_delta;
    if (std::abs(step) > limits.d_delta_max) {
      out.cmd.u_delta = in.prev_u_delta + std::copysign(limits.d_delta_max, step);
      out.events.push_back(SafetyEventKind::steer_rate_clipped);
    }
  }

  auto brake = [&](bool trigger, SafetyEventKind kind) {
    if (!trigger) return;
    out.events.push_back(kind);
    out.emergency = true;
  };
  brake(in.lateral_deviation > limits.d_limit, SafetyEventKind::emergency_brake_lane);
  brake(in.obstacle_in, SafetyEventKind::emergency_brake_obstacle);
  brake(!in.inside_geofence, SafetyEventKind::emergency_brake_geofence);
  brake(in.estop, SafetyEventKind::estop);
  if (out.emergency) out.cmd = {0.0, -1.0};

  if (in.takeover) {
    out.events.push_back(SafetyEventKind::takeover);
    out.released = true;
  }
  return out;
}

bool obstacle_in(const Observation& obs, const SafetyLimits& limits, double front_x) {
  const auto occ = corridor_occupancy(obs, Corridor{front_x, front_x + limits.r_safe, limits.obstacle_half_width},
                                      limits.obstacle_min_cells);
  return occ.occupied >= limits.obstacle_min_cells;
}

std::string_view observation_source_name(ObservationSource s) {
  return s == ObservationSource::gt_bev ? "gt_bev" : "gob_bev";
}

ObservationSource parse_observation_source(std::string_view name) {
  if (name == "gt_bev") return ObservationSource::gt_bev;
  if (name == "gob_bev") return ObservationSource::gob_bev;
  throw std::invalid_argument("unknown observation mode '" + std::string(name) + "' (gt_bev | gob_bev)");
}

void CyclePipelineMode::validate() const {
  if (source == ObservationSource::gob_bev && !noise)
    throw std::invalid_argument("gob_bev mode needs a segmentation noise model");
  if (source == ObservationSource::gt_bev && noise)
    throw std::invalid_argument("gt_bev mode takes no segmentation noise model");
  if (noise) noise->validate();
  platform_preset(platform);
  platform_preset(training_platform);
}

CameraCalibration ObservationBuilder::default_camera() {
  return CameraCalibration::from_horizontal_fov(640, 480, 110.0 * std::numbers::pi / 180.0, 1.7);
}

ObservationBuilder::ObservationBuilder(CyclePipelineMode mode, CameraCalibration calib)
    : mode_(std::move(mode)), calib_(calib) {
  mode_.validate();
  calib_.validate();
  limits_ = ActionLimits::for_platform(platform_preset(mode_.training_platform));
  if (mode_.source == ObservationSource::gob_bev)
    renderer_ = std::make_shared<const FrontViewRenderer>(calib_, grid_);
}

BevTensor ObservationBuilder::bev(const World& w, std::uint64_t noise_seed) const {
  if (mode_.source == ObservationSource::gt_bev) return render_gt_bev(w, grid_);
  if (!(w.lattice == grid_)) throw std::invalid_argument("world lattice differs from the BEV grid");
  SegNoiseModel noise = *mode_.noise;
  noise.seed = hash_combine(noise.seed, noise_seed);
  const SemanticImage seg = corrupt(renderer_->render(w), noise);
  return encode(ipm_project(seg, calib_, grid_), side_inputs(w, grid_));
}

Observation ObservationBuilder::with_bev(BevTensor bev, const World& w, std::uint64_t cycle) const {
  Observation obs;
  obs.bev = std::move(bev);
  obs.cycle = cycle;
  obs.state = {w.ego.v / limits_.v_max, w.ego.delta / w.platform.delta_max, w.ego.throttle};
  if (w.route.size() >= 2) obs.waypoints = waypoints(w.route, w.ego.pose());
  return obs;
}

Observation ObservationBuilder::observe(const World& w, std::uint64_t cycle, std::uint64_t noise_seed) const {
  return with_bev(bev(w, noise_seed), w, cycle);
}

CycleResult control_cycle(const World& w, const Policy& policy, const ObservationBuilder& builder,
                          const PlatformParams& theta, const SafetyLimits& limits, const CycleState& state,
                          const OperatorInputs& op, std::uint64_t noise_seed) {
  CycleResult res;
  res.state = state;
  const auto start = Clock::now();
  auto t = start;

  // 1. observation
  BevTensor bev = builder.bev(w, noise_seed);
  res.latency.stage_ms[0] = ms_since(t);
  t = Clock::now();

  // 2. waypoint match and ego state
  const Observation obs = builder.with_bev(std::move(bev), w, state.cycle);
  res.latency.stage_ms[1] = ms_since(t);
  t = Clock::now();

  // 3. inference
  bool nan = false;
  try {
    res.raw = policy.act(obs);
  } catch (const std::exception&) {
    res.raw = {std::nan(""), std::nan("")};
  }
  nan = !finite(res.raw);
  res.latency.stage_ms[2] = ms_since(t);
  t = Clock::now();

  // 4. PAM
  VehicleCommand cmd{0.0, -1.0};
  if (!nan) {
    const PolicyOutput a{std::clamp(res.raw.a1, -1.0, 1.0), std::clamp(res.raw.a2, -1.0, 1.0)};
    const PhysicsAction act = decode_action(a, builder.limits());
    const PamStep pam = pam_map(act, w.ego.v, kControlDt, theta, state.pid);
    cmd = pam.cmd;
    res.state.pid = pam.state;
    nan = !std::isfinite(cmd.u_delta) || !std::isfinite(cmd.u_v);
  }
  res.latency.stage_ms[3] = ms_since(t);
  t = Clock::now();

  // 5. safety layer
  SafetyInputs in;
  in.speed = w.ego.v;
  const Point2 ref{w.ego.x, w.ego.y};
  if (w.route.size() >= 2) in.lateral_deviation = project_onto(w.route, ref).distance;
  in.obstacle_in = obstacle_in(obs, limits, w.platform.L + w.body.front_overhang);
  if (!limits.geofence.empty())
    in.inside_geofence = point_in_polygon(limits.geofence, ref);
  else if (w.route.size() >= 2)
    in.inside_geofence = in.lateral_deviation <= limits.geofence_margin;
  in.estop = op.estop;
  in.takeover = op.takeover;
  in.nan = nan;
  in.prev_u_delta = state.prev_u_delta;
  in.a_max = w.actuator.a_max;
  const SafetyOutcome safe = apply_safety(cmd, in, limits);
  for (SafetyEventKind k : safe.events) res.events.push_back({k, state.cycle});
  res.emergency = safe.emergency;
  res.released = safe.released;
  if (res.emergency) res.state.pid = {};
  res.latency.stage_ms[4] = ms_since(t);
  t = Clock::now();

  // 6. emission
  res.cmd = safe.cmd;
  res.state.prev_u_delta = res.cmd.u_delta;
  res.state.cycle = state.cycle + 1;
  res.latency.stage_ms[5] = ms_since(t);
  res.latency.total_ms = ms_since(start);
  return res;
}

std::string_view outcome_name(Outcome o) {
  switch (o) {
    case Outcome::success: return "success";
    case Outcome::safety_violation: return "safety_violation";
    case Outcome::stagnation: return "stagnation";
  }
  return "?";
}

EpisodeResult run_episode(const World& initial, const Policy& policy, const ObservationBuilder& builder,
                          const PlatformParams& theta, const SafetyLimits& limits, const EpisodeOptions& options) {
  limits.validate();
  if (initial.route.size() < 2) throw std::invalid_argument("run_episode needs a route");
  EpisodeResult res;
  EpisodeMetrics& m = res.metrics;
  World w = initial;
  const double route_len = polyline_length(w.route);
  const double goal_s = std::max(0.0, route_len - options.goal_tolerance);
  TerminationRules rules;
  rules.stuck_time *= options.stuck_factor;
  MotionHistory history;
  history.update(w, rules);
  CycleState state;
  double s_now = route_s(w.route, {w.ego.x, w.ego.y});
  double s_best = s_now;
  double speed_sum = 0.0;
  bool done = false;

  auto finish = [&](Outcome o, std::string reason) {
    m.outcome = o;
    m.end_reason = std::move(reason);
    done = true;
  };

  if (s_now >= goal_s) finish(Outcome::success, "goal");
  while (!done) {
    if (w.clock >= options.max_time - 1e-9) {
      finish(Outcome::stagnation, "timeout");
      break;
    }
    OperatorInputs op;
    op.estop = options.estop_at && w.clock >= *options.estop_at;
    op.takeover = options.takeover_at && w.clock >= *options.takeover_at;
    if (options.on_cycle) options.on_cycle(w, state.cycle);
    const CycleResult cyc = control_cycle(w, policy, builder, theta, limits, state, op,
                                          hash_combine(options.seed, state.cycle));
    state = cyc.state;
    ++res.cycles;
    if (cyc.latency.total_ms > 50.0) ++res.deadline_misses;
    res.events.insert(res.events.end(), cyc.events.begin(), cyc.events.end());
    if (options.record) res.latency.push_back(cyc.latency);
    if (cyc.released) {
      finish(Outcome::safety_violation, "takeover");
      break;
    }

    const World next = step(w, cyc.cmd, kControlDt);
    history.update(next, rules);
    const auto term = detect_termination(next, history, rules);
    const Point2 p{next.ego.x, next.ego.y};
    const auto proj = project_onto(next.route, p);
    Transition tr;
    tr.progress = proj.s - s_now;
    tr.collision = term && term->kind == TerminationKind::collision;
    tr.lateral = proj.distance;
    tr.speed = next.ego.v;
    res.rewards.push_back(task_reward(tr, options.reward));
    m.td += std::hypot(next.ego.x - w.ego.x, next.ego.y - w.ego.y);
    speed_sum += next.ego.v;
    s_now = proj.s;
    s_best = std::max(s_best, s_now);

    std::string event;
    if (cyc.emergency) event = std::string(safety_event_name(cyc.events.back().kind));
    if (term) event = std::string(termination_name(term->kind));
    if (options.record) res.trajectory.push_back({next.clock, next.ego, cyc.cmd, event});
    w = next;

    if (term) {
      if (term->kind == TerminationKind::collision) {
        m.ac = 1.0;
        m.cs = term->impact_speed * 3.6;
      }
      finish(term->kind == TerminationKind::stuck ? Outcome::stagnation : Outcome::safety_violation,
             std::string(termination_name(term->kind)));
    } else if (cyc.emergency) {
      finish(Outcome::safety_violation, std::string(safety_event_name(cyc.events.back().kind)));
    } else if (s_now >= goal_s) {
      finish(Outcome::success, "goal");
    }
  }
  m.sr = m.outcome == Outcome::success ? 1.0 : 0.0;
  m.rc = m.outcome == Outcome::success || route_len <= 0.0 ? 1.0 : std::clamp(s_best / route_len, 0.0, 1.0);
  m.as = res.cycles > 0 ? speed_sum / static_cast<double>(res.cycles) * 3.6 : 0.0;
  m.duration = w.clock;
  m.ret = res.rewards.empty() ? 0.0 : discounted_return(res.rewards, options.gamma);
  return res;
}

EpisodeResult run_episode(const ScenarioSpec& scenario, const Policy& policy, const CyclePipelineMode& mode,
                          const SafetyLimits& limits, const EpisodeOptions& options) {
  const World w = build_scenario(scenario, options.seed);
  const ObservationBuilder builder(mode);
  EpisodeOptions opt = options;
  opt.max_time = scenario.max_time;
  return run_episode(w, policy, builder, platform_preset(mode.platform), limits, opt);
}

std::vector<LatencyProfile> profile_latency(const World& initial, const Policy& policy,
                                            const ObservationBuilder& builder, const PlatformParams& theta,
                                            const SafetyLimits& limits, int cycles, std::uint64_t seed) {
  limits.validate();
  if (cycles < 1) throw std::invalid_argument("profile_latency needs at least one cycle");
  std::vector<LatencyProfile> rows;
  rows.reserve(static_cast<std::size_t>(cycles));
  World w = initial;
  CycleState state;
  for (int k = 0; k < cycles; ++k) {
    const CycleResult cyc = control_cycle(w, policy, builder, theta, limits, state, {}, hash_combine(seed, state.cycle));
    state = cyc.state;
    rows.push_back(cyc.latency);
    w = step(w, cyc.cmd, kControlDt);
  }
  return rows;
}

LatencySummary summarize_latency(std::span<const LatencyProfile> rows, double budget_ms) {
  LatencySummary s;
  s.budget_ms = budget_ms;
  s.cycles = rows.size();
  if (rows.empty()) return s;
  std::vector<double> totals;
  for (const auto& r : rows) {
    totals.push_back(r.total_ms);
    s.mean_ms += r.total_ms;
    s.max_ms = std::max(s.max_ms, r.total_ms);
    if (r.total_ms > budget_ms) ++s.deadline_misses;
  }
  s.mean_ms /= static_cast<double>(rows.size());
  std::sort(totals.begin(), totals.end());
  const auto idx = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(totals.size()))) - 1;
  s.p95_ms = totals[std::min(idx, totals.size() - 1)];
  return s;
}

double metric_value(const EpisodeMetrics& m, std::string_view name) {
  if (name == "AS") return m.as;
  if (name == "RC") return m.rc;
  if (name == "TD") return m.td;
  if (name == "CS") return m.cs;
  if (name == "SR") return m.sr;
  if (name == "AC") return m.ac;
  throw std::invalid_argument("unknown metric '" + std::string(name) + "'");
}

std::optional<double> performance_retention(double transfer, double reference) {
  if (reference == 0.0) return std::nullopt;
  return 100.0 * transfer / reference;
}

std::vector<MetricSummary> aggregate(std::span<const EpisodeMetrics> trials,
                                     std::span<const EpisodeMetrics> reference) {
  if (trials.empty()) throw std::invalid_argument("aggregate needs at least one trial");
  auto stats = [](std::span<const EpisodeMetrics> xs, std::string_view name) {
    double mean = 0.0;
    for (const auto& x : xs) mean += metric_value(x, name);
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (const auto& x : xs) var += (metric_value(x, name) - mean) * (metric_value(x, name) - mean);
    const double sd = xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1)) : 0.0;
    return std::pair{mean, sd};
  };
  std::vector<MetricSummary> out;
  for (std::string_view name : kMetricNames) {
    MetricSummary s;
    s.name = std::string(name);
    std::tie(s.mean, s.stddev) = stats(trials, name);
    if (!reference.empty()) s.pr = performance_retention(s.mean, stats(reference, name).first);
    out.push_back(std::move(s));
  }
  return out;
}

OfflineReactionStats offline_reaction_test(std::span<const RecordedFrame> frames, const Policy& policy,
                                           const PlatformParams& theta, const ActionLimits& limits) {
  OfflineReactionStats st;
  if (frames.empty()) throw std::invalid_argument("offline reaction test needs frames");
  std::size_t straight_ok = 0, curve_ok = 0, speed_ok = 0;
  std::vector<double> lat;
  lat.reserve(frames.size());
  for (const RecordedFrame& f : frames) {
    if (!f.shape) throw std::invalid_argument("offline reaction test: frame without road-shape annotation");
    const auto t0 = Clock::now();
    PolicyOutput out;
    try {
      out = policy.act(f.obs);
    } catch (const std::exception&) {
      out = {std::nan(""), std::nan("")};
    }
    bool valid = finite(out) && std::abs(out.a1) <= 1.0 && std::abs(out.a2) <= 1.0;
    VehicleCommand cmd{std::nan(""), std::nan("")};
    if (valid) {
      const PhysicsAction act = decode_action(out, limits);
      valid = act.v_des >= 0.0 && act.v_des <= limits.v_max;
      cmd = pam_map(act, f.obs.state[0] * limits.v_max, kControlDt, theta, {}).cmd;
    }
    lat.push_back(ms_since(t0));
    speed_ok += valid;
    if (*f.shape == RoadShape::straight) {
      ++st.straight_frames;
      straight_ok += std::abs(cmd.u_delta) < 0.1;
    } else {
      ++st.curve_frames;
      curve_ok += *f.shape == RoadShape::left ? cmd.u_delta > 0.0 : cmd.u_delta < 0.0;
    }
  }
  const double n = static_cast<double>(frames.size());
  st.straight_band = st.straight_frames ? static_cast<double>(straight_ok) / st.straight_frames : 0.0;
  st.curve_sign = st.curve_frames ? static_cast<double>(curve_ok) / st.curve_frames : 0.0;
  st.speed_valid = static_cast<double>(speed_ok) / n;
  double sum = 0.0;
  for (double l : lat) sum += l;
  st.latency_mean_ms = sum / n;
  std::sort(lat.begin(), lat.end());
  st.latency_p95_ms = lat[std::min(lat.size() - 1, static_cast<std::size_t>(std::ceil(0.95 * n)) - 1)];
  return st;
}

void write_events_csv(std::ostream& os, std::span<const SafetyEvent> events) {
  os << "cycle,kind\n";
  for (const auto& e : events) os << e.cycle << ',' << safety_event_name(e.kind) << '\n';
}

void write_latency_csv(std::ostream& os, std::span<const LatencyProfile> rows) {
  os << "cycle";
  for (auto n : kStageNames) os << ',' << n;
  os << ",total\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    os << i;
    for (double v : rows[i].stage_ms) os << ',' << format_number(v, 6);
    os << ',' << format_number(rows[i].total_ms, 6) << '\n';
  }
}

void write_metrics_header(std::ostream& os) {
  os << "seed,AS,RC,TD,CS,SR,AC,outcome,end_reason,return,duration\n";
}

void write_metrics_row(std::ostream& os, std::uint64_t seed, const EpisodeMetrics& m) {
  os << seed << ',' << format_number(m.as) << ',' << format_number(m.rc) << ',' << format_number(m.td) << ','
     << format_number(m.cs) << ',' << format_number(m.sr) << ',' << format_number(m.ac) << ','
     << outcome_name(m.outcome) << ',' << m.end_reason << ',' << format_number(m.ret) << ','
     << format_number(m.duration) << '\n';
}

std::vector<EpisodeMetrics> read_metrics_csv(std::istream& is) {
  const CsvTable t = read_csv(is);
  std::vector<EpisodeMetrics> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    EpisodeMetrics m;
    m.as = t.number(r, "AS");
    m.rc = t.number(r, "RC");
    m.td = t.number(r, "TD");
    m.cs = t.number(r, "CS");
    m.sr = t.number(r, "SR");
    m.ac = t.number(r, "AC");
    const std::size_t oc = t.column("outcome");
    const std::string& o = t.rows[r][oc];
    m.outcome = o == "success" ? Outcome::success : o == "safety_violation" ? Outcome::safety_violation
                                                                               : Outcome::stagnation;
    out.push_back(std::move(m));
  }
  return out;
}

void write_summary_csv(std::ostream& os, std::span<const MetricSummary> rows) {
  os << "metric,mean,std,pr_percent\n";
  for (const auto& s : rows)
    os << s.name << ',' << format_number(s.mean) << ',' << format_number(s.stddev) << ','
       << (s.pr ? format_number(*s.pr) : std::string("undefined")) << '\n';
}

}  // namespace bevbridge
