#pragma once

#include <array>

#include "bevbridge/polyline.hpp"

namespace bevbridge {

inline constexpr int kNumWaypoints = 15;
inline constexpr double kWaypointSpacing = 2.0;

using Waypoints = std::array<Point2, kNumWaypoints>;

// Throws std::invalid_argument unless the route has >= 2 points, all finite,
// with consecutive points distinct.
void validate_route(std::span<const Point2> route);

// Projects the pose onto the route, walks forward in 2 m arc-length steps and
// expresses the points in the ego frame. Past the route end the endpoint repeats.
Waypoints waypoints(std::span<const Point2> route, const Pose2& ego);

}  // namespace bevbridge
