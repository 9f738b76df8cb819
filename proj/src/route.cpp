#include "bevbridge/route.hpp"

#include <cmath>
#include <stdexcept>

namespace bevbridge {

void validate_route(std::span<const Point2> route) {
  if (route.size() < 2) throw std::invalid_argument("route: need at least 2 points");
  for (std::size_t i = 0; i < route.size(); ++i) {
    if (!std::isfinite(route[i].x) || !std::isfinite(route[i].y))
      throw std::invalid_argument("route: non-finite point");
    if (i > 0 && route[i] == route[i - 1])
      throw std::invalid_argument("route: consecutive duplicate points at index " + std::to_string(i));
  }
}

Waypoints waypoints(std::span<const Point2> route, const Pose2& ego) {
  validate_route(route);
  const double s0 = project_onto(route, {ego.x, ego.y}).s;
  Waypoints out;
  for (int k = 0; k < kNumWaypoints; ++k)
    out[k] = to_local(ego, point_at(route, s0 + kWaypointSpacing * (k + 1)));
  return out;
}

}  // namespace bevbridge
