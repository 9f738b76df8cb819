#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bevbridge/bounds.hpp"
#include "bevbridge/keyvalue.hpp"
#include "bevbridge/pipeline.hpp"
#include "bevbridge/plot.hpp"

namespace bevbridge {

// Configuration and IO faults; run_cli maps them to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitViolation = 1;  // verify-bounds only
inline constexpr int kExitConfig = 2;

// Sections: [run] (scenario, platform, training_platform, mode, policy, seeds,
// max_time, out, reference_metrics, frames, cycles), [noise] (flip_rate,
// boundary_jitter, seed), [safety] (limits inline or file = path),
// [camera] (width, height, fov_deg, h, pitch_deg, roll_deg or file = path).
// Relative paths resolve against the config file's directory.
struct RunConfig {
  std::string scenario_path;  // empty: default car_following
  ScenarioSpec scenario;
  PlatformParams platform;
  CyclePipelineMode mode;
  std::vector<std::uint64_t> seeds;
  std::string policy = "pure_pursuit";  // builtin name or resolved file path
  SafetyLimits safety;
  CameraCalibration camera = ObservationBuilder::default_camera();
  std::string out_dir = "out";
  std::string reference_metrics;  // optional metrics CSV for PR
  int frames = 100;   // gob-metrics
  int cycles = 1000;  // profile

  void validate() const;  // throws ConfigError
};

RunConfig parse_run_config(const std::string& text, const std::string& base_dir = ".");
RunConfig load_run_config(const std::string& path);

// Limits from a [safety] section: v_limit_kmh, d_limit, d_delta_max, r_safe,
// obstacle_half_width, obstacle_min_cells, geofence_margin, geofence, enabled.
SafetyLimits parse_safety_section(const KeyValueSection& s, const SafetyLimits& base = {});
CameraCalibration parse_camera_section(const KeyValueSection& s);

int cmd_simulate(const RunConfig& config, int jobs, std::ostream& log);
int cmd_evaluate(const std::string& transfer_csv, const std::string& reference_csv, const std::string& out_csv,
                 std::ostream& log);

struct VerifyOptions {
  std::uint64_t seed = 1;
  int gob_pairs = 200;
  int pam_trials = 1000;
  std::optional<double> eps_pid;  // fixed disturbance for the pam suite
  double pam_horizon = 5.0;       // s, with eps_pid
  int tv_instances = 200;
  int curriculum_samples = 16;
  int composed_seeds = 3;
  double composed_route_length = 40.0;
};

// selector: gob, pam, tv, curriculum, composed or all. Writes bounds.csv and
// bounds_summary.txt to out_dir.
int cmd_verify_bounds(const std::string& selector, const VerifyOptions& options, const std::string& out_dir,
                      std::ostream& log);
std::vector<BoundReport> run_bound_suite(const std::string& selector, const VerifyOptions& options,
                                         std::ostream& log);

// plant: default, lag-free or e-transit. Writes platform.cfg, step_response.csv
// and calibration.csv; an infeasible search still writes best-effort gains
// with feasible = false.
int cmd_calibrate(const PlatformParams& base, const std::string& plant, const StepResponseSpec& spec,
                  const std::string& out_dir, std::ostream& log);
ActuatorModel plant_preset(const std::string& name);

// GT-BEV vs GOB-BEV along a pure-pursuit drive: gob_metrics.csv and
// gob_summary.csv.
int cmd_gob_metrics(const RunConfig& config, std::ostream& log);
// Fixed-length latency run: latency.csv and latency_summary.csv.
int cmd_profile(const RunConfig& config, std::ostream& log);
int cmd_plot(const std::string& input_csv, PlotKind kind, const std::string& output_svg);

int run_cli(int argc, char** argv);

}  // namespace bevbridge
