#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bevbridge/geometry.hpp"
#include "bevbridge/pam.hpp"
#include "bevbridge/perception.hpp"
#include "bevbridge/polyline.hpp"

namespace bevbridge {

inline constexpr double kControlDt = 0.05;

// Rear-axle reference point; the BEV and camera frames share this origin.
struct EgoState {
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
  double v = 0.0;
  double delta = 0.0;
  double throttle = 0.0;  // last longitudinal command, normalized
  double accel = 0.0;     // actuator state (m/s^2)

  Pose2 pose() const { return {x, y, psi}; }
  friend bool operator==(const EgoState&, const EgoState&) = default;
};

// Ego footprint relative to the rear axle: x in [-rear, L + front], |y| <= width/2.
struct EgoBody {
  double rear_overhang = 1.0;
  double front_overhang = 1.0;
  double width = 2.0;
  friend bool operator==(const EgoBody&, const EgoBody&) = default;
};

struct ActuatorModel {
  double a_max = 3.0;            // m/s^2 at |u_v| = 1
  double lag = 0.2;              // s, first-order; 0 = instantaneous
  double steer_slew_time = 0.5;  // s for a full delta_max swing; 0 = instantaneous
  double v_cap = 15.0;           // hard speed cap, m/s
  // Additive path-curvature disturbance: yaw rate v (tan(delta)/L + d_kappa)
  // with |d_kappa| <= kappa_disturbance per step.
  double kappa_disturbance = 0.0;
  bool disturbance_constant_sign = true;
  std::uint64_t disturbance_seed = 0;

  void validate() const;
  friend bool operator==(const ActuatorModel&, const ActuatorModel&) = default;
};

enum class EntityKind : std::uint8_t {
  vehicle,
  pedestrian,
  cyclist,
  motorcycle,
  obstacle,
  stop_sign,
  traffic_light,
};

enum class LightState : std::uint8_t { red, yellow, green };

std::string_view entity_kind_name(EntityKind k);
EntityKind parse_entity_kind(std::string_view name);

struct SpeedSegment {
  double duration = 0.0;  // s
  double speed = 0.0;     // m/s
  friend bool operator==(const SpeedSegment&, const SpeedSegment&) = default;
};

// Rectangle centered on pose. Entities with a path move along it with the
// piecewise-constant profile (last segment held); otherwise they are static.
struct Entity {
  EntityKind kind = EntityKind::obstacle;
  Pose2 pose;
  double length = 1.0;
  double width = 1.0;
  Polyline path;
  double path_s = 0.0;
  std::vector<SpeedSegment> profile;
  LightState light = LightState::red;

  Label label() const;
  double speed_at(double t) const;
  friend bool operator==(const Entity&, const Entity&) = default;
};

struct RoadMap {
  std::vector<Polyline> centerlines;
  double lane_width = 7.0;
  std::vector<Polyline> markings;
  double marking_width = 0.15;
  std::vector<Polygon> sidewalks;
  bool ground_is_road = false;  // every ground point is road (infinite plane)

  bool empty() const { return centerlines.empty() && markings.empty() && sidewalks.empty() && !ground_is_road; }
  void validate() const;
  friend bool operator==(const RoadMap&, const RoadMap&) = default;
};

// Ground semantics of a RoadMap sampled once onto a world-aligned raster.
class StaticMap {
 public:
  static constexpr double kResolution = 0.05;

  explicit StaticMap(RoadMap road);
  const RoadMap& road() const { return road_; }
  // Priority lane_marking > road > sidewalk; unknown off the map.
  Label ground_label(Point2 p) const;
  bool drivable(Point2 p) const;

 private:
  RoadMap road_;
  double x0_ = 0.0, y0_ = 0.0;
  int nx_ = 0, ny_ = 0;
  std::vector<Label> raster_;
};

// Road band, edge markings and sidewalks laid along a route polyline.
RoadMap road_along(const Polyline& route, double road_width = 7.0, double marking_offset = 3.3,
                   double sidewalk_inner = 3.5, double sidewalk_outer = 5.5);

struct World {
  EgoState ego;
  EgoBody body;
  std::vector<Entity> entities;
  std::shared_ptr<const StaticMap> map;
  Polyline route;
  double clock = 0.0;
  std::uint64_t tick = 0;
  PlatformParams platform = carla_default_platform();
  ActuatorModel actuator;
  // Lattice that quantizes rendered semantics; renderers using the same
  // lattice agree cell-exactly.
  BevGridSpec lattice;
};

// Semantic label of a world point: first entity footprint containing it,
// otherwise the ground label.
Label label_at(const World& w, Point2 p);

// Throws std::invalid_argument for non-finite commands or dt <= 0.
// Commands are clamped to [-1, 1]. Actuators (steering slew, acceleration lag)
// update first; the pose then integrates with explicit Euler from the
// start-of-step position, heading and speed using the updated wheel angle.
World step(const World& w, const VehicleCommand& cmd, double dt = kControlDt);

// Oriented rectangle footprints.
struct OrientedRect {
  Point2 center;
  double psi = 0.0;
  double half_length = 0.0;
  double half_width = 0.0;

  bool contains(Point2 p) const;
  std::array<Point2, 4> corners() const;
};

OrientedRect ego_rect(const World& w);
OrientedRect entity_rect(const Entity& e);
bool rects_overlap(const OrientedRect& a, const OrientedRect& b);  // separating axis test

// Ego-frame route (origin + 15 waypoints) and ego footprint side channels.
BevSideInputs side_inputs(const World& w, const BevGridSpec& grid);

// Labels every lattice cell by its center; full 360 degree coverage. Route and
// ego channels from side_inputs.
BevSemanticMap render_gt_labels(const World& w, const BevGridSpec& grid);
BevTensor render_gt_bev(const World& w, const BevGridSpec& grid);

// Per-pixel ground ray cast, quantized to w.lattice; above-horizon pixels
// are unknown. Holds the per-pixel lattice table so repeated renders are cheap.
class FrontViewRenderer {
 public:
  FrontViewRenderer(const CameraCalibration& calib, const BevGridSpec& lattice);
  const CameraCalibration& calibration() const { return calib_; }
  const BevGridSpec& lattice() const { return lattice_; }
  SemanticImage render(const World& w) const;
  SemanticImage render_serial(const World& w) const;

 private:
  CameraCalibration calib_;
  BevGridSpec lattice_;
  std::vector<CellIndex> cells_;      // distinct lattice cells seen by the camera
  std::vector<std::int32_t> slot_;    // per pixel index into cells_, -1 above horizon
};

SemanticImage render_front_view(const World& w, const CameraCalibration& calib);

// Cells whose center is in view and whose nearest pixel ray-casts back into
// the same cell: the set on which GT and IPM-reconstructed labels must agree.
std::vector<std::uint8_t> resolvable_cells(const CameraCalibration& calib, const BevGridSpec& grid);

namespace reference {
BevSemanticMap render_gt_labels(const World& w, const BevGridSpec& grid);
SemanticImage render_front_view(const World& w, const CameraCalibration& calib);
}  // namespace reference

enum class TerminationKind : std::uint8_t { collision, off_road, lane_departure, stuck };
std::string_view termination_name(TerminationKind k);

struct TerminationEvent {
  TerminationKind kind = TerminationKind::collision;
  double impact_speed = 0.0;  // m/s, collision and off_road
  int entity = -1;            // colliding entity index
};

struct TerminationRules {
  double lane_departure = 3.0;        // m from the route
  double stuck_speed = 1.0 / 3.6;     // m/s
  double stuck_time = 90.0;           // s
};

// Tracks how long the ego has been below the stuck speed.
struct MotionHistory {
  double stationary_since = -1.0;
  void update(const World& w, const TerminationRules& rules = {});
};

std::optional<TerminationEvent> detect_termination(const World& w, const MotionHistory& history,
                                                   const TerminationRules& rules = {});

// Trajectory log.
struct TrajectoryRow {
  double t = 0.0;
  EgoState ego;
  VehicleCommand cmd;
  std::string event;
};

void write_trajectory_csv(std::ostream& os, const std::vector<TrajectoryRow>& rows);

// Speed trace of a straight-road step response: the calibration plant for
// the longitudinal actuator model.
SpeedPlant make_speed_plant(const ActuatorModel& actuator);

}  // namespace bevbridge
