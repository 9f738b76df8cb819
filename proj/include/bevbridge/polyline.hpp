#pragma once

#include <span>
#include <vector>

namespace bevbridge {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
  friend bool operator==(const Pose2&, const Pose2&) = default;
};

using Polyline = std::vector<Point2>;
using Polygon = std::vector<Point2>;

struct PolylineProjection {
  double s = 0.0;         // arc length of the closest point
  double distance = 0.0;  // unsigned distance to the polyline
  double signed_offset = 0.0;  // positive to the left of travel direction
  Point2 point;
};

double polyline_length(std::span<const Point2> line);
PolylineProjection project_onto(std::span<const Point2> line, Point2 p);
// Clamped to [0, length].
Point2 point_at(std::span<const Point2> line, double s);
double heading_at(std::span<const Point2> line, double s);
double distance_to(std::span<const Point2> line, Point2 p);

// Vertex-normal offset; positive d shifts to the left of travel direction.
Polyline offset_polyline(std::span<const Point2> line, double d);
// Closed band between two lateral offsets, usable as a polygon.
Polygon offset_band(std::span<const Point2> line, double d_inner, double d_outer);

bool point_in_polygon(std::span<const Point2> poly, Point2 p);

// Resample at (at most) the given spacing along arc length, keeping endpoints.
Polyline resample(std::span<const Point2> line, double spacing);

// world <-> ego-frame transforms for a pose
Point2 to_local(const Pose2& frame, Point2 world);
Point2 to_world(const Pose2& frame, Point2 local);

double wrap_angle(double a);

}  // namespace bevbridge
