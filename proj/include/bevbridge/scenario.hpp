#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bevbridge/worldsim.hpp"

namespace bevbridge {

enum class ScenarioId : std::uint8_t { car_following, obstacle_avoidance, stop_sign };

std::string_view scenario_name(ScenarioId id);
ScenarioId parse_scenario_id(std::string_view name);  // throws std::invalid_argument

// Entity placed relative to the route: arc length s of its center and a
// signed lateral offset (left positive). A speed profile makes it drive along
// the route at that offset.
struct EntityPlacement {
  EntityKind kind = EntityKind::obstacle;
  double s = 0.0;
  double lateral = 0.0;
  double length = 1.0;
  double width = 1.0;
  double heading_offset = 0.0;  // rad, relative to the route direction
  std::vector<SpeedSegment> profile;
  LightState light = LightState::red;
  // Crossing pedestrians walk from lateral to crossing_to, perpendicular to the route.
  std::optional<double> crossing_to;
};

struct ScenarioSpec {
  ScenarioId id = ScenarioId::car_following;
  Polyline route;                         // empty: generated from the seed
  std::vector<EntityPlacement> entities;  // empty: default placements from the seed
  double max_time = 40.0;                 // s
  std::string platform = "carla-default";
  std::uint64_t seed = 0;
  double route_length = 80.0;             // m, generated routes
  double route_curvature = 0.0;           // max |kappa| of generated arcs, 1/m
  bool crossing_pedestrian = false;       // stop_sign only
  double initial_speed = 0.0;             // m/s

  void validate() const;
};

// Default knobs per scenario id.
ScenarioSpec default_scenario(ScenarioId id);

// Deterministic per (spec, seed). Throws std::invalid_argument on invalid specs.
World build_scenario(const ScenarioSpec& spec, std::uint64_t seed);

// Sampled route: straight lead-in, then 20 m arcs with curvature uniform in
// [-max_curvature, max_curvature], resampled at 1 m.
Polyline generate_route(double length, double max_curvature, std::uint64_t seed);

// Plain-text sectioned format: one [scenario] section and any number of
// [entity] sections.
ScenarioSpec load_scenario_file(const std::string& path);
ScenarioSpec parse_scenario_text(const std::string& text);
std::string scenario_to_text(const ScenarioSpec& spec);

// "x,y; x,y; ..." and "duration:speed, duration:speed".
Polyline parse_points(std::string_view text);
std::vector<SpeedSegment> parse_profile(std::string_view text);

// Lane used for "obstacle intersects the ego lane" (half of a 3.5 m lane).
inline constexpr double kEgoLaneHalfWidth = 1.75;

}  // namespace bevbridge
