#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bevbridge/policy.hpp"
#include "bevbridge/scenario.hpp"
#include "bevbridge/worldsim.hpp"

namespace bevbridge {

struct SafetyLimits {
  double v_limit = 15.0 / 3.6;  // m/s
  double d_limit = 0.8;         // m from the route
  double d_delta_max = 0.1;     // normalized steering change per cycle
  double r_safe = 3.0;          // m ahead of the front bumper
  double obstacle_half_width = 1.3;  // m, around the waypoint path
  int obstacle_min_cells = 24;       // object cells that count as an obstacle
  // Closed polygon; empty means the route corridor dilated by geofence_margin.
  Polygon geofence;
  double geofence_margin = 10.0;
  bool enabled = true;  // false: command passes through unchanged (training, ablations)

  void validate() const;
};

enum class SafetyEventKind : std::uint8_t {
  speed_capped,
  steer_rate_clipped,
  emergency_brake_nan,
  emergency_brake_lane,
  emergency_brake_obstacle,
  emergency_brake_geofence,
  estop,
  takeover,
};

std::string_view safety_event_name(SafetyEventKind k);
bool is_emergency(SafetyEventKind k);

struct SafetyEvent {
  SafetyEventKind kind = SafetyEventKind::speed_capped;
  std::uint64_t cycle = 0;
  friend bool operator==(const SafetyEvent&, const SafetyEvent&) = default;
};

// Everything the safety layer looks at besides the command.
struct SafetyInputs {
  double speed = 0.0;            // m/s
  double lateral_deviation = 0.0;  // m from the route
  bool obstacle_in = false;      // object inside the emergency zone
  bool inside_geofence = true;
  bool estop = false;
  bool takeover = false;
  bool nan = false;              // policy or PAM produced a non-finite value
  double prev_u_delta = 0.0;     // last emitted steering command
  double a_max = 3.0;            // m/s^2 at |u_v| = 1
  double dt = kControlDt;
};

struct SafetyOutcome {
  VehicleCommand cmd;
  std::vector<SafetyEventKind> events;
  bool emergency = false;
  bool released = false;  // takeover: autonomy hands control back
};

// Fixed order: speed cap, steering-rate clip, then the emergency checks
// (NaN, lane, obstacle, geofence, e-stop) which all replace the command with
// (0, -1), then takeover. The speed cap limits the acceleration demand so the
// speed reached after one cycle at full actuator response stays within
// v_limit: u_v <= (v_limit - v) / (a_max dt), floored at -1. Emergency
// commands are exempt from the steering-rate clip.
SafetyOutcome apply_safety(const VehicleCommand& cmd, const SafetyInputs& in, const SafetyLimits& limits);

// Object cells of the BEV inside [front_x, front_x + r_safe] around the
// waypoint path.
bool obstacle_in(const Observation& obs, const SafetyLimits& limits, double front_x);

enum class ObservationSource : std::uint8_t { gt_bev, gob_bev };
std::string_view observation_source_name(ObservationSource s);
ObservationSource parse_observation_source(std::string_view name);

struct CyclePipelineMode {
  ObservationSource source = ObservationSource::gt_bev;
  std::optional<SegNoiseModel> noise;  // present iff gob_bev
  std::string platform = "carla-default";           // deployment platform, supplies theta
  std::string training_platform = "carla-default";  // fixes kappa_max of the action decoding

  void validate() const;
};

// Builds BEV observations. gob_bev renders the front view, corrupts it with a
// per-cycle noise seed, back-projects it and encodes it with the route and
// ego side channels.
class ObservationBuilder {
 public:
  ObservationBuilder(CyclePipelineMode mode, CameraCalibration calib = default_camera());
  const CyclePipelineMode& mode() const { return mode_; }
  const CameraCalibration& camera() const { return calib_; }
  const ActionLimits& limits() const { return limits_; }

  BevTensor bev(const World& w, std::uint64_t noise_seed) const;
  // BEV plus waypoints and normalized ego state.
  Observation observe(const World& w, std::uint64_t cycle, std::uint64_t noise_seed) const;
  Observation with_bev(BevTensor bev, const World& w, std::uint64_t cycle) const;

  // 640 x 480, 110 degree horizontal FOV, mounted at 1.7 m, level.
  static CameraCalibration default_camera();

 private:
  CyclePipelineMode mode_;
  CameraCalibration calib_;
  BevGridSpec grid_;
  ActionLimits limits_;
  std::shared_ptr<const FrontViewRenderer> renderer_;
};

inline constexpr int kNumStages = 6;
inline constexpr std::array<std::string_view, kNumStages> kStageNames = {
    "perception", "route_state", "inference", "pam", "safety", "actuation"};

struct LatencyProfile {
  std::array<double, kNumStages> stage_ms{};
  double total_ms = 0.0;
};

struct CycleState {
  PidState pid;
  double prev_u_delta = 0.0;
  std::uint64_t cycle = 0;
};

struct OperatorInputs {
  bool estop = false;
  bool takeover = false;
};

struct CycleResult {
  VehicleCommand cmd;
  std::vector<SafetyEvent> events;
  LatencyProfile latency;
  CycleState state;
  PolicyOutput raw;          // policy output before PAM, may be non-finite
  bool emergency = false;
  bool released = false;
};

// One pass of the six-stage loop. Never throws on policy misbehaviour: policy
// exceptions and non-finite values become an emergency brake.
CycleResult control_cycle(const World& w, const Policy& policy, const ObservationBuilder& builder,
                          const PlatformParams& theta, const SafetyLimits& limits, const CycleState& state,
                          const OperatorInputs& op = {}, std::uint64_t noise_seed = 0);

enum class Outcome : std::uint8_t { success, safety_violation, stagnation };
std::string_view outcome_name(Outcome o);

struct EpisodeMetrics {
  double as = 0.0;  // mean speed, km/h
  double rc = 0.0;  // route fraction completed
  double td = 0.0;  // distance driven, m
  double cs = 0.0;  // mean impact speed, km/h (0 without collisions)
  double sr = 0.0;  // 1 on success
  double ac = 0.0;  // collision count
  Outcome outcome = Outcome::stagnation;
  std::string end_reason;
  double ret = 0.0;       // discounted task return
  double duration = 0.0;  // s
};

struct EpisodeOptions {
  double max_time = 40.0;         // s
  std::uint64_t seed = 0;         // scenario and noise seed
  double goal_tolerance = 2.0;    // m before the route end
  double stuck_factor = 0.2;      // scales the 90 s stagnation timeout
  double gamma = 0.99;
  RewardWeights reward;
  std::optional<double> estop_at;     // s
  std::optional<double> takeover_at;  // s
  bool record = true;                 // keep trajectory and latency rows
  // Called with the world before every control cycle.
  std::function<void(const World&, std::uint64_t cycle)> on_cycle;
};

struct EpisodeResult {
  std::vector<TrajectoryRow> trajectory;
  std::vector<SafetyEvent> events;
  std::vector<LatencyProfile> latency;
  std::vector<double> rewards;
  EpisodeMetrics metrics;
  std::uint64_t cycles = 0;
  std::uint64_t deadline_misses = 0;  // cycles over 50 ms
};

// Closed loop at 20 Hz until the goal, a termination event, an emergency
// brake, a takeover or max_time.
EpisodeResult run_episode(const World& initial, const Policy& policy, const ObservationBuilder& builder,
                          const PlatformParams& theta, const SafetyLimits& limits,
                          const EpisodeOptions& options = {});
EpisodeResult run_episode(const ScenarioSpec& scenario, const Policy& policy, const CyclePipelineMode& mode,
                          const SafetyLimits& limits, const EpisodeOptions& options = {});

struct LatencySummary {
  double mean_ms = 0.0;
  double p95_ms = 0.0;
  double max_ms = 0.0;
  std::uint64_t cycles = 0;
  std::uint64_t deadline_misses = 0;  // cycles over budget_ms
  double budget_ms = 50.0;
};

// Exactly `cycles` control cycles; the world keeps stepping through
// terminations and emergencies, so only timing is measured.
std::vector<LatencyProfile> profile_latency(const World& initial, const Policy& policy,
                                            const ObservationBuilder& builder, const PlatformParams& theta,
                                            const SafetyLimits& limits, int cycles, std::uint64_t seed = 0);
LatencySummary summarize_latency(std::span<const LatencyProfile> rows, double budget_ms = 50.0);

struct MetricSummary {
  std::string name;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 for one trial
  std::optional<double> pr;  // percent of the reference mean
};

inline constexpr std::array<std::string_view, 6> kMetricNames = {"AS", "RC", "TD", "CS", "SR", "AC"};

double metric_value(const EpisodeMetrics& m, std::string_view name);

// Throws std::invalid_argument on an empty trial list.
std::vector<MetricSummary> aggregate(std::span<const EpisodeMetrics> trials,
                                     std::span<const EpisodeMetrics> reference = {});

// 100 * transfer / reference; nullopt when the reference is 0.
std::optional<double> performance_retention(double transfer, double reference);

enum class RoadShape : std::uint8_t { straight, left, right };

struct RecordedFrame {
  Observation obs;
  std::optional<RoadShape> shape;  // required annotation
};

struct OfflineReactionStats {
  double straight_band = 0.0;   // fraction of straight frames with |u_delta| < 0.1
  double curve_sign = 0.0;      // fraction of curve frames steering toward the curve
  double speed_valid = 0.0;     // fraction with v_des in [0, v_max]
  double latency_mean_ms = 0.0;
  double latency_p95_ms = 0.0;
  std::size_t straight_frames = 0;
  std::size_t curve_frames = 0;
};

// Stages 2 to 4 on recorded observations, no actuation. Throws
// std::invalid_argument when a frame lacks its annotation.
OfflineReactionStats offline_reaction_test(std::span<const RecordedFrame> frames, const Policy& policy,
                                           const PlatformParams& theta, const ActionLimits& limits);

// CSV writers; schemas in FORMATS.md.
void write_events_csv(std::ostream& os, std::span<const SafetyEvent> events);
void write_latency_csv(std::ostream& os, std::span<const LatencyProfile> rows);
void write_metrics_header(std::ostream& os);
void write_metrics_row(std::ostream& os, std::uint64_t seed, const EpisodeMetrics& m);
std::vector<EpisodeMetrics> read_metrics_csv(std::istream& is);
void write_summary_csv(std::ostream& os, std::span<const MetricSummary> rows);

}  // namespace bevbridge
