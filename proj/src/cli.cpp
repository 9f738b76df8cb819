#include "bevbridge/cli.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

#include "CLI11.hpp"
#include "bevbridge/csv.hpp"
#include "bevbridge/hashing.hpp"
#include "bevbridge/keyvalue.hpp"
#include "bevbridge/semantics.hpp"
#include "bevbridge/training.hpp"

namespace bevbridge {

namespace fs = std::filesystem;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

std::string resolve(const std::string& path, const std::string& base_dir) {
  if (path.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base_dir) / path).lexically_normal().string();
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw ConfigError(what + " not found: " + path);
}

bool is_preset(const std::string& name) { return name == "carla-default" || name == "e-transit"; }

PlatformParams resolve_platform(const std::string& value, const std::string& base_dir) {
  if (is_preset(value)) return platform_preset(value);
  const std::string path = resolve(value, base_dir);
  require_file(path, "platform file");
  return load_platform_file(path);
}

// "1,2,3" or "first..last" (inclusive).
std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  const auto dots = text.find("..");
  if (dots != std::string::npos) {
    const auto a = parse_number_list(text.substr(0, dots));
    const auto b = parse_number_list(text.substr(dots + 2));
    if (a.size() != 1 || b.size() != 1 || a[0] < 0 || b[0] < a[0] || a[0] != std::floor(a[0]) ||
        b[0] != std::floor(b[0]))
      throw ConfigError("seeds: malformed range '" + text + "'");
    for (auto s = static_cast<std::uint64_t>(a[0]); s <= static_cast<std::uint64_t>(b[0]); ++s) out.push_back(s);
    return out;
  }
  for (double v : parse_number_list(text)) {
    if (v < 0 || v != std::floor(v)) throw ConfigError("seeds: not a non-negative integer in '" + text + "'");
    out.push_back(static_cast<std::uint64_t>(v));
  }
  return out;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir + ": " + ec.message());
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + p.string());
  return os;
}

ObservationBuilder make_builder(const RunConfig& c) { return ObservationBuilder(c.mode, c.camera); }

}  // namespace

// --- configuration ------------------------------------------------------------

SafetyLimits parse_safety_section(const KeyValueSection& s, const SafetyLimits& base) {
  SafetyLimits l = base;
  if (s.has("v_limit_kmh")) l.v_limit = s.get_number("v_limit_kmh") / 3.6;
  l.v_limit = s.get_number("v_limit", l.v_limit);
  l.d_limit = s.get_number("d_limit", l.d_limit);
  l.d_delta_max = s.get_number("d_delta_max", l.d_delta_max);
  l.r_safe = s.get_number("r_safe", l.r_safe);
  l.obstacle_half_width = s.get_number("obstacle_half_width", l.obstacle_half_width);
  l.obstacle_min_cells = static_cast<int>(s.get_integer("obstacle_min_cells", l.obstacle_min_cells));
  l.geofence_margin = s.get_number("geofence_margin", l.geofence_margin);
  if (s.has("geofence")) l.geofence = parse_points(s.get("geofence"));
  l.enabled = s.get_bool("enabled", l.enabled);
  l.validate();
  return l;
}

CameraCalibration parse_camera_section(const KeyValueSection& s) {
  const CameraCalibration d = ObservationBuilder::default_camera();
  const int width = static_cast<int>(s.get_integer("width", d.width));
  const int height = static_cast<int>(s.get_integer("height", d.height));
  CameraCalibration c = CameraCalibration::from_horizontal_fov(
      width, height, s.get_number("fov_deg", 110.0) * kDeg, s.get_number("h", d.h),
      s.get_number("pitch_deg", 0.0) * kDeg, s.get_number("roll_deg", 0.0) * kDeg);
  c.validate();
  return c;
}

void RunConfig::validate() const {
  if (seeds.empty()) throw ConfigError("config: seeds must not be empty");
  if (frames < 1) throw ConfigError("config: frames must be positive");
  if (cycles < 1) throw ConfigError("config: cycles must be positive");
  try {
    scenario.validate();
    platform.validate();
    mode.validate();
    safety.validate();
    camera.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

RunConfig parse_run_config(const std::string& text, const std::string& base_dir) {
  RunConfig c;
  try {
    const KeyValueFile f = parse_key_value_text(text);
    static const KeyValueSection empty;
    const KeyValueSection* run = f.first("run");
    if (!run) run = &empty;

    c.scenario_path = run->get_string("scenario", "");
    if (c.scenario_path.empty()) {
      c.scenario = default_scenario(ScenarioId::car_following);
    } else if (!c.scenario_path.ends_with(".scn") && !c.scenario_path.ends_with(".cfg") &&
               !c.scenario_path.ends_with(".txt") && c.scenario_path.find('/') == std::string::npos) {
      c.scenario = default_scenario(parse_scenario_id(c.scenario_path));  // builtin by name
    } else {
      c.scenario_path = resolve(c.scenario_path, base_dir);
      require_file(c.scenario_path, "scenario file");
      c.scenario = load_scenario_file(c.scenario_path);
    }
    if (run->has("max_time")) c.scenario.max_time = run->get_number("max_time");

    const std::string platform = run->get_string("platform", c.scenario.platform);
    c.platform = resolve_platform(platform, base_dir);
    c.mode.platform = is_preset(c.platform.name) ? c.platform.name : "carla-default";
    c.mode.training_platform = run->get_string("training_platform", "carla-default");
    c.mode.source = parse_observation_source(run->get_string("mode", "gt_bev"));
    if (const KeyValueSection* n = f.first("noise")) {
      SegNoiseModel noise;
      noise.flip_rate = n->get_number("flip_rate", 0.0);
      noise.boundary_jitter = static_cast<int>(n->get_integer("boundary_jitter", 0));
      noise.seed = static_cast<std::uint64_t>(n->get_integer("seed", 0));
      c.mode.noise = noise;
    }

    c.seeds = parse_seeds(run->get_string("seeds", "0"));
    c.policy = run->get_string("policy", c.policy);
    if (c.policy.find('/') != std::string::npos || c.policy.ends_with(".policy") || c.policy.ends_with(".txt")) {
      c.policy = resolve(c.policy, base_dir);
      require_file(c.policy, "policy file");
    }
    c.out_dir = resolve(run->get_string("out", c.out_dir), base_dir);
    if (run->has("reference_metrics")) {
      c.reference_metrics = resolve(run->get("reference_metrics"), base_dir);
      require_file(c.reference_metrics, "reference metrics");
    }
    c.frames = static_cast<int>(run->get_integer("frames", c.frames));
    c.cycles = static_cast<int>(run->get_integer("cycles", c.cycles));

    if (const KeyValueSection* s = f.first("safety")) {
      if (s->has("file")) {
        const std::string path = resolve(s->get("file"), base_dir);
        require_file(path, "safety file");
        const KeyValueFile sf = load_key_value_file(path);
        const KeyValueSection* body = sf.first("safety");
        if (!body) body = &sf.sections.front();
        c.safety = parse_safety_section(*body);
      }
      c.safety = parse_safety_section(*s, c.safety);
    }
    if (const KeyValueSection* s = f.first("camera")) {
      if (s->has("file")) {
        const std::string path = resolve(s->get("file"), base_dir);
        require_file(path, "camera file");
        const KeyValueFile cf = load_key_value_file(path);
        const KeyValueSection* body = cf.first("camera");
        c.camera = parse_camera_section(body ? *body : cf.sections.front());
      } else {
        c.camera = parse_camera_section(*s);
      }
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  require_file(path, "config file");
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string dir = fs::path(path).parent_path().string();
  return parse_run_config(ss.str(), dir.empty() ? "." : dir);
}

// --- simulate -----------------------------------------------------------------

int cmd_simulate(const RunConfig& config, int jobs, std::ostream& log) {
  config.validate();
  ensure_dir(config.out_dir);
  const ObservationBuilder builder = make_builder(config);
  // Fail on a bad policy before any episode runs.
  make_policy(config.policy, builder.limits(), 0);

  const int n = static_cast<int>(config.seeds.size());
  std::vector<EpisodeMetrics> metrics(n);
  std::vector<std::string> errors(n);
  const fs::path out(config.out_dir);
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, jobs))
  for (int i = 0; i < n; ++i) {
    try {
      const std::uint64_t seed = config.seeds[i];
      const auto policy = make_policy(config.policy, builder.limits(), seed);
      const World w = build_scenario(config.scenario, seed);
      EpisodeOptions opt;
      opt.seed = seed;
      opt.max_time = config.scenario.max_time;
      const EpisodeResult r = run_episode(w, *policy, builder, config.platform, config.safety, opt);
      const std::string tag = "seed" + std::to_string(seed);
      auto traj = open_out(out / ("trajectory_" + tag + ".csv"));
      write_trajectory_csv(traj, r.trajectory);
      auto ev = open_out(out / ("events_" + tag + ".csv"));
      write_events_csv(ev, r.events);
      auto lat = open_out(out / ("latency_" + tag + ".csv"));
      write_latency_csv(lat, r.latency);
      metrics[i] = r.metrics;
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (int i = 0; i < n; ++i)
    if (!errors[i].empty()) throw ConfigError("seed " + std::to_string(config.seeds[i]) + ": " + errors[i]);

  auto mo = open_out(out / "metrics.csv");
  write_metrics_header(mo);
  for (int i = 0; i < n; ++i) write_metrics_row(mo, config.seeds[i], metrics[i]);

  std::vector<EpisodeMetrics> reference;
  if (!config.reference_metrics.empty()) {
    std::ifstream in(config.reference_metrics);
    reference = read_metrics_csv(in);
  }
  const auto summary = aggregate(metrics, reference);
  auto so = open_out(out / "summary.csv");
  write_summary_csv(so, summary);

  int successes = 0;
  for (const auto& m : metrics) successes += m.outcome == Outcome::success;
  log << "simulate: " << n << " episodes, " << successes << " successes, outputs in " << config.out_dir << '\n';
  return kExitOk;
}

// --- evaluate -----------------------------------------------------------------

int cmd_evaluate(const std::string& transfer_csv, const std::string& reference_csv, const std::string& out_csv,
                 std::ostream& log) {
  require_file(transfer_csv, "transfer metrics");
  require_file(reference_csv, "reference metrics");
  std::vector<EpisodeMetrics> transfer, reference;
  try {
    std::ifstream a(transfer_csv), b(reference_csv);
    transfer = read_metrics_csv(a);
    reference = read_metrics_csv(b);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("evaluate: ") + e.what());
  }
  if (transfer.empty()) throw ConfigError("evaluate: transfer metrics file has no trials");
  if (reference.empty()) throw ConfigError("evaluate: reference metrics file has no trials");
  const auto rows = aggregate(transfer, reference);
  const auto ref = aggregate(reference);
  if (const auto dir = fs::path(out_csv).parent_path(); !dir.empty()) ensure_dir(dir.string());
  auto os = open_out(out_csv);
  os << "metric,transfer_mean,reference_mean,pr_percent\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    os << rows[i].name << ',' << format_number(rows[i].mean) << ',' << format_number(ref[i].mean) << ','
       << (rows[i].pr ? format_number(*rows[i].pr, 4) : std::string("undefined")) << '\n';
    log << rows[i].name << " PR = " << (rows[i].pr ? format_number(*rows[i].pr, 4) + "%" : "undefined") << '\n';
  }
  return kExitOk;
}

// --- verify-bounds ------------------------------------------------------------

std::vector<BoundReport> run_bound_suite(const std::string& selector, const VerifyOptions& o, std::ostream& log) {
  static const std::vector<std::string> suites = {"gob", "pam", "tv", "curriculum", "composed"};
  if (selector != "all" && std::find(suites.begin(), suites.end(), selector) == suites.end())
    throw ConfigError("verify-bounds: unknown selector '" + selector +
                      "' (expected gob, pam, tv, curriculum, composed or all)");
  auto want = [&](const std::string& s) { return selector == "all" || selector == s; };
  std::vector<BoundReport> rows;
  const ScenarioSpec scenario = default_scenario(ScenarioId::car_following);

  if (want("gob")) {
    const CellSumPolicy linear(1e-5, 0);
    for (double flip : {0.0, 0.01, 0.05, 0.1}) {
      const auto gen = gob_pair_generator(scenario, {flip, 0, o.seed}, o.seed);
      auto r = check_gob_bound(linear, linear.analytic_lipschitz(), gen, o.gob_pairs,
                               "cell_sum flip=" + format_number(flip));
      log << "gob: " << r.report.instance << " eps_hat=" << format_number(r.epsilon_hat, 6) << '\n';
      rows.push_back(r.report);
    }
    const LearnablePolicy ref = composed_reference_policy();
    const auto gen = gob_pair_generator(scenario, {0.05, 1, o.seed}, o.seed);
    rows.push_back(check_gob_bound(ref, ref.lipschitz_bound(), gen, o.gob_pairs, "reference flip=0.05 jitter=1").report);
  }
  if (want("pam")) {
    const PlatformParams theta = carla_default_platform();
    const double v_max = 35.0 / 3.6;
    auto r = o.eps_pid ? check_pam_bound(theta, v_max, o.pam_horizon, *o.eps_pid, o.pam_trials, o.seed)
                       : pam_bound_sweep(theta, v_max, 5.0, 0.05, o.pam_trials, o.seed);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  if (want("tv")) {
    std::vector<BoundReport> r(o.tv_instances);
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < o.tv_instances; ++i) {
      const std::uint64_t h = hash_combine(o.seed, static_cast<std::uint64_t>(i));
      const FinitePomdp m = random_pomdp(h);
      const ReactivePolicy pi = random_reactive_policy(m.n_obs, m.n_actions, hash_combine(h, 1));
      r[i] = check_tv_bound(m, pi, "pomdp " + std::to_string(i)).report;
    }
    rows.insert(rows.end(), r.begin(), r.end());
  }
  if (want("curriculum")) {
    CurriculumConfig cfg;
    cfg.curriculum_samples = o.curriculum_samples;
    cfg.trainer.seed = o.seed;
    const std::vector<ScenarioSpec> scenes = {scenario};
    const CurriculumSamples s = sample_curriculum(cfg, scenes);
    rows.push_back(check_curriculum_ordering(s.phase1, s.phase2, s.deploy, "car_following"));
    log << "curriculum: bootstrap fraction holding = "
        << format_number(curriculum_bootstrap(s.phase1, s.phase2, s.deploy, 200, o.seed), 4) << '\n';
  }
  if (want("composed")) {
    ScenarioSpec spec = scenario;
    spec.route_length = o.composed_route_length;
    const LearnablePolicy policy = composed_reference_policy();
    const std::vector<ComposedKnobs> knobs = {{0.05, 0, 0.0}, {0.0, 0, 0.002}, {0.05, 1, 0.002}};
    for (int k = 0; k < o.composed_seeds; ++k) {
      const auto res = composed_sweep(spec, policy, policy.lipschitz_bound(), knobs,
                                      hash_combine(o.seed, static_cast<std::uint64_t>(k)));
      for (const auto& r : res) {
        rows.push_back(r.report);
        log << "composed: " << r.report.instance << " looseness=" << format_number(r.looseness, 4) << '\n';
      }
    }
  }
  return rows;
}

int cmd_verify_bounds(const std::string& selector, const VerifyOptions& options, const std::string& out_dir,
                      std::ostream& log) {
  const auto rows = run_bound_suite(selector, options, log);
  ensure_dir(out_dir);
  auto os = open_out(fs::path(out_dir) / "bounds.csv");
  write_bound_reports(os, rows);
  const auto summary = summarize_reports(rows);
  auto ss = open_out(fs::path(out_dir) / "bounds_summary.txt");
  write_bound_summary(ss, summary);
  write_bound_summary(log, summary);
  const bool violated = std::any_of(rows.begin(), rows.end(), [](const BoundReport& r) { return r.violated; });
  return violated ? kExitViolation : kExitOk;
}

// --- calibrate ----------------------------------------------------------------

ActuatorModel plant_preset(const std::string& name) {
  ActuatorModel a;
  if (name == "default") return a;
  if (name == "lag-free") {
    a.lag = 0.0;
    return a;
  }
  if (name == "e-transit") {
    // heavier shuttle: weaker drive and a slower response
    a.a_max = 1.5;
    a.lag = 0.5;
    a.v_cap = 8.0;
    return a;
  }
  throw ConfigError("unknown plant preset '" + name + "' (expected default, lag-free or e-transit)");
}

int cmd_calibrate(const PlatformParams& base, const std::string& plant, const StepResponseSpec& spec,
                  const std::string& out_dir, std::ostream& log) {
  const ActuatorModel actuator = plant_preset(plant);
  const CalibrationResult r = calibrate_pid(make_speed_plant(actuator), base, spec);
  ensure_dir(out_dir);
  const fs::path out(out_dir);
  {
    auto os = open_out(out / "platform.cfg");
    os << platform_to_text(r.params);
    os << "feasible = " << (r.feasible ? "true" : "false") << '\n';
  }
  {
    auto os = open_out(out / "step_response.csv");
    os << "t,v,v_ref\n";
    for (std::size_t k = 0; k < r.response.size(); ++k)
      os << format_number((k + 1) * spec.dt) << ',' << format_number(r.response[k]) << ','
         << format_number(spec.step_speed) << '\n';
  }
  {
    auto os = open_out(out / "calibration.csv");
    os << "Kp,Ki,Kd,iae,overshoot,settling_time,zero_crossings,feasible\n";
    for (const auto& c : r.candidates)
      os << format_exact(c.gains.Kp) << ',' << format_exact(c.gains.Ki) << ',' << format_exact(c.gains.Kd) << ','
         << format_number(c.metrics.iae) << ',' << format_number(c.metrics.overshoot) << ','
         << format_number(c.metrics.settling_time) << ',' << c.metrics.zero_crossings << ','
         << (c.feasible ? 1 : 0) << '\n';
  }
  log << "calibrate: Kp=" << format_number(r.params.Kp) << " Ki=" << format_number(r.params.Ki)
      << " Kd=" << format_number(r.params.Kd) << " IAE=" << format_number(r.metrics.iae, 6) << '\n';
  if (!r.feasible) log << "warning: no gains meet the step-response spec; best effort written\n" << r.violation_report << '\n';
  return kExitOk;
}

// --- gob-metrics --------------------------------------------------------------

int cmd_gob_metrics(const RunConfig& config, std::ostream& log) {
  config.validate();
  if (config.mode.source != ObservationSource::gob_bev)
    throw ConfigError("gob-metrics: mode must be gob_bev (it compares GOB-BEV against GT-BEV)");
  ensure_dir(config.out_dir);
  CyclePipelineMode gt_mode = config.mode;
  gt_mode.source = ObservationSource::gt_bev;
  gt_mode.noise.reset();
  const ObservationBuilder gt(gt_mode, config.camera), gob(config.mode, config.camera);
  const PurePursuitPolicy driver(gt.limits());
  const std::uint64_t seed = config.seeds.front();

  // Drive on GT perception so both sequences see the same scenes.
  World w = build_scenario(config.scenario, seed);
  CycleState state;
  std::vector<BevTensor> seq_gt, seq_gob;
  std::vector<FrameChannelMetrics> rows;
  for (int k = 0; k < config.frames; ++k) {
    seq_gt.push_back(gt.bev(w, 0));
    seq_gob.push_back(gob.bev(w, hash_combine(seed, static_cast<std::uint64_t>(k))));
    const auto fm = frame_metrics(k, seq_gt.back(), seq_gob.back());
    rows.insert(rows.end(), fm.begin(), fm.end());
    const CycleResult cyc = control_cycle(w, driver, gt, config.platform, config.safety, state, {}, 0);
    state = cyc.state;
    w = step(w, cyc.cmd, kControlDt);
  }
  const fs::path out(config.out_dir);
  auto os = open_out(out / "gob_metrics.csv");
  write_metrics_csv(os, rows);

  auto ss = open_out(out / "gob_summary.csv");
  ss << "channel,name,mean_iou,frames_with_iou,mean_activation_gt,mean_activation_gob,temporal_mean_iou,"
        "temporal_fraction_above\n";
  for (int ch = 0; ch < kBevChannels; ++ch) {
    double iou = 0.0, act_a = 0.0, act_b = 0.0;
    int used = 0;
    for (const auto& r : rows) {
      if (r.channel != ch) continue;
      act_a += r.activation_a;
      act_b += r.activation_b;
      if (r.iou) {
        iou += *r.iou;
        ++used;
      }
    }
    const TemporalConsistency tc = config.frames >= 2 ? temporal_consistency(seq_gob, ch) : TemporalConsistency{};
    ss << ch << ',' << class_name(static_cast<Label>(ch)) << ','
       << (used ? format_number(iou / used) : std::string("undefined")) << ',' << used << ','
       << format_number(act_a / config.frames) << ',' << format_number(act_b / config.frames) << ','
       << (tc.used_pairs ? format_number(tc.mean_iou) : std::string("undefined")) << ','
       << (tc.used_pairs ? format_number(tc.fraction_above) : std::string("undefined")) << '\n';
  }
  log << "gob-metrics: " << config.frames << " frames, outputs in " << config.out_dir << '\n';
  return kExitOk;
}

// --- profile ------------------------------------------------------------------

int cmd_profile(const RunConfig& config, std::ostream& log) {
  config.validate();
  ensure_dir(config.out_dir);
  const ObservationBuilder builder = make_builder(config);
  const std::uint64_t seed = config.seeds.front();
  const auto policy = make_policy(config.policy, builder.limits(), seed);
  const auto rows =
      profile_latency(build_scenario(config.scenario, seed), *policy, builder, config.platform, config.safety,
                      config.cycles, seed);
  const LatencySummary s = summarize_latency(rows);
  const fs::path out(config.out_dir);
  auto os = open_out(out / "latency.csv");
  write_latency_csv(os, rows);
  auto ss = open_out(out / "latency_summary.csv");
  ss << "cycles,mean_ms,p95_ms,max_ms,budget_ms,deadline_misses,miss_fraction\n"
     << s.cycles << ',' << format_number(s.mean_ms, 6) << ',' << format_number(s.p95_ms, 6) << ','
     << format_number(s.max_ms, 6) << ',' << format_number(s.budget_ms) << ',' << s.deadline_misses << ','
     << format_number(static_cast<double>(s.deadline_misses) / static_cast<double>(s.cycles), 6) << '\n';
  log << "profile: " << s.cycles << " cycles, mean " << format_number(s.mean_ms, 4) << " ms, p95 "
      << format_number(s.p95_ms, 4) << " ms, max " << format_number(s.max_ms, 4) << " ms, " << s.deadline_misses
      << " over " << format_number(s.budget_ms) << " ms\n";
  return kExitOk;
}

// --- plot ---------------------------------------------------------------------

int cmd_plot(const std::string& input_csv, PlotKind kind, const std::string& output_svg) {
  require_file(input_csv, "plot input");
  std::string svg;
  try {
    svg = render_plot(read_csv_file(input_csv), kind);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("plot: ") + e.what());
  }
  if (const auto dir = fs::path(output_svg).parent_path(); !dir.empty()) ensure_dir(dir.string());
  auto os = open_out(output_svg);
  os << svg;
  return kExitOk;
}

// --- entry point --------------------------------------------------------------

int run_cli(int argc, char** argv) {
  CLI::App app{"bevbridge: BEV perception bridge, platform mapping and transfer-bound checks"};
  app.require_subcommand(1);
  std::string config_path, out_override;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  app.add_option("--config", config_path, "run configuration file");
  app.add_option("--out", out_override, "output directory (overrides [run] out)");
  app.add_option("--seed", seed, "single seed (overrides [run] seeds; base seed for verify-bounds)");
  app.add_option("--jobs,-j", jobs, "worker threads")->check(CLI::PositiveNumber);

  auto* simulate = app.add_subcommand("simulate", "run one episode per seed");
  auto* gob_metrics = app.add_subcommand("gob-metrics", "GT-BEV vs GOB-BEV perception metrics over a drive");
  auto* profile = app.add_subcommand("profile", "latency-only run");

  auto* evaluate = app.add_subcommand("evaluate", "performance retention of transfer vs reference metrics");
  std::string transfer_csv, reference_csv, pr_out;
  evaluate->add_option("transfer", transfer_csv, "transfer metrics CSV")->required();
  evaluate->add_option("reference", reference_csv, "reference metrics CSV")->required();
  evaluate->add_option("-o,--output", pr_out, "PR table CSV (default <out>/pr.csv)");

  auto* verify = app.add_subcommand("verify-bounds", "run bound verification sweeps");
  std::string selector;
  VerifyOptions vopt;
  verify->add_option("suite", selector, "gob, pam, tv, curriculum, composed or all")->required();
  verify->add_option("--gob-pairs", vopt.gob_pairs)->check(CLI::PositiveNumber);
  verify->add_option("--pam-trials", vopt.pam_trials)->check(CLI::PositiveNumber);
  verify->add_option("--eps-pid", vopt.eps_pid, "fixed curvature disturbance for the pam suite");
  verify->add_option("--horizon", vopt.pam_horizon, "s, pam suite with --eps-pid");
  verify->add_option("--tv-instances", vopt.tv_instances)->check(CLI::PositiveNumber);
  verify->add_option("--curriculum-samples", vopt.curriculum_samples)->check(CLI::PositiveNumber);
  verify->add_option("--composed-seeds", vopt.composed_seeds)->check(CLI::PositiveNumber);

  auto* calibrate = app.add_subcommand("calibrate", "PID step-response calibration");
  std::string platform = "carla-default", plant = "default";
  StepResponseSpec sspec;
  calibrate->add_option("--platform", platform, "preset name or platform file");
  calibrate->add_option("--plant", plant, "default, lag-free or e-transit");
  calibrate->add_option("--settling-time", sspec.settling_time, "s, 2% band");
  calibrate->add_option("--max-overshoot", sspec.max_overshoot, "fraction of the step");

  auto* plot = app.add_subcommand("plot", "render a CSV as SVG");
  std::string plot_in, plot_kind, plot_out;
  plot->add_option("input", plot_in, "CSV file")->required();
  plot->add_option("--kind", plot_kind, "trajectory, speed_profile, steering_profile, latency, bound_slack, "
                                        "iou_timeline")->required();
  plot->add_option("-o,--output", plot_out, "SVG path (default: input with .svg)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    omp_set_num_threads(jobs);
    auto config = [&] {
      if (config_path.empty()) throw ConfigError("--config is required for this command");
      RunConfig c = load_run_config(config_path);
      if (!out_override.empty()) c.out_dir = out_override;
      if (seed) c.seeds = {*seed};
      return c;
    };
    const std::string out_dir = out_override.empty() ? "out" : out_override;
    if (*simulate) return cmd_simulate(config(), jobs, std::cout);
    if (*gob_metrics) return cmd_gob_metrics(config(), std::cout);
    if (*profile) return cmd_profile(config(), std::cout);
    if (*evaluate)
      return cmd_evaluate(transfer_csv, reference_csv, pr_out.empty() ? (fs::path(out_dir) / "pr.csv").string() : pr_out,
                          std::cout);
    if (*verify) {
      if (seed) vopt.seed = *seed;
      return cmd_verify_bounds(selector, vopt, out_dir, std::cout);
    }
    if (*calibrate) {
      PlatformParams base;
      try {
        base = resolve_platform(platform, ".");
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception& e) {
        throw ConfigError(std::string("calibrate: ") + e.what());
      }
      return cmd_calibrate(base, plant, sspec, out_dir, std::cout);
    }
    if (*plot) {
      PlotKind kind;
      try {
        kind = parse_plot_kind(plot_kind);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
      const std::string target = plot_out.empty() ? fs::path(plot_in).replace_extension(".svg").string() : plot_out;
      return cmd_plot(plot_in, kind, target);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace bevbridge
