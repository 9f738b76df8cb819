#include "bevbridge/polyline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace bevbridge {

double polyline_length(std::span<const Point2> line) {
  double len = 0.0;
  for (std::size_t i = 1; i < line.size(); ++i)
    len += std::hypot(line[i].x - line[i - 1].x, line[i].y - line[i - 1].y);
  return len;
}

PolylineProjection project_onto(std::span<const Point2> line, Point2 p) {
  PolylineProjection best;
  best.distance = std::numeric_limits<double>::infinity();
  if (line.empty()) return best;
  if (line.size() == 1) {
    best.point = line[0];
    best.distance = std::hypot(p.x - line[0].x, p.y - line[0].y);
    return best;
  }
  double s_base = 0.0;
  for (std::size_t i = 1; i < line.size(); ++i) {
    const Point2 a = line[i - 1], b = line[i];
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    const double seg_len = std::sqrt(len2);
    double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const Point2 q{a.x + t * dx, a.y + t * dy};
    const double d = std::hypot(p.x - q.x, p.y - q.y);
    if (d < best.distance) {
      best.distance = d;
      best.s = s_base + t * seg_len;
      best.point = q;
      const double cross = dx * (p.y - a.y) - dy * (p.x - a.x);
      best.signed_offset = cross >= 0.0 ? d : -d;
    }
    s_base += seg_len;
  }
  return best;
}

Point2 point_at(std::span<const Point2> line, double s) {
  if (line.empty()) return {};
  if (s <= 0.0) return line.front();
  double acc = 0.0;
  for (std::size_t i = 1; i < line.size(); ++i) {
    const double seg = std::hypot(line[i].x - line[i - 1].x, line[i].y - line[i - 1].y);
    if (acc + seg >= s && seg > 0.0) {
      const double t = (s - acc) / seg;
      return {line[i - 1].x + t * (line[i].x - line[i - 1].x),
              line[i - 1].y + t * (line[i].y - line[i - 1].y)};
    }
    acc += seg;
  }
  return line.back();
}

double heading_at(std::span<const Point2> line, double s) {
  if (line.size() < 2) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 1; i < line.size(); ++i) {
    const double seg = std::hypot(line[i].x - line[i - 1].x, line[i].y - line[i - 1].y);
    if (acc + seg >= s || i + 1 == line.size())
      return std::atan2(line[i].y - line[i - 1].y, line[i].x - line[i - 1].x);
    acc += seg;
  }
  return 0.0;
}

double distance_to(std::span<const Point2> line, Point2 p) { return project_onto(line, p).distance; }

Polyline offset_polyline(std::span<const Point2> line, double d) {
  Polyline out;
  const std::size_t n = line.size();
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    double nx = 0.0, ny = 0.0;
    auto add_normal = [&](Point2 a, Point2 b) {
      const double dx = b.x - a.x, dy = b.y - a.y;
      const double len = std::hypot(dx, dy);
      if (len > 0.0) {
        nx += -dy / len;
        ny += dx / len;
      }
    };
    if (i > 0) add_normal(line[i - 1], line[i]);
    if (i + 1 < n) add_normal(line[i], line[i + 1]);
    const double len = std::hypot(nx, ny);
    if (len > 0.0) {
      nx /= len;
      ny /= len;
    }
    // miter correction keeps the offset distance on both adjacent segments
    double scale = 1.0;
    if (i > 0 && i + 1 < n) {
      const double dx = line[i + 1].x - line[i].x, dy = line[i + 1].y - line[i].y;
      const double seg = std::hypot(dx, dy);
      if (seg > 0.0) {
        const double cosang = nx * (-dy / seg) + ny * (dx / seg);
        if (cosang > 0.5) scale = 1.0 / cosang;
      }
    }
    out.push_back({line[i].x + nx * d * scale, line[i].y + ny * d * scale});
  }
  return out;
}

Polygon offset_band(std::span<const Point2> line, double d_inner, double d_outer) {
  Polygon poly = offset_polyline(line, d_inner);
  Polyline outer = offset_polyline(line, d_outer);
  poly.insert(poly.end(), outer.rbegin(), outer.rend());
  return poly;
}

bool point_in_polygon(std::span<const Point2> poly, Point2 p) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point2 a = poly[i], b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

Polyline resample(std::span<const Point2> line, double spacing) {
  Polyline out;
  if (line.empty()) return out;
  const double len = polyline_length(line);
  const int n = std::max(1, static_cast<int>(std::ceil(len / spacing)));
  out.reserve(n + 1);
  for (int i = 0; i <= n; ++i) out.push_back(point_at(line, len * i / n));
  return out;
}

Point2 to_local(const Pose2& frame, Point2 world) {
  const double c = std::cos(frame.psi), s = std::sin(frame.psi);
  const double dx = world.x - frame.x, dy = world.y - frame.y;
  return {c * dx + s * dy, -s * dx + c * dy};
}

Point2 to_world(const Pose2& frame, Point2 local) {
  const double c = std::cos(frame.psi), s = std::sin(frame.psi);
  return {frame.x + c * local.x - s * local.y, frame.y + s * local.x + c * local.y};
}

double wrap_angle(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  if (a > -std::numbers::pi && a <= std::numbers::pi) return a;
  a = std::fmod(a + std::numbers::pi, kTwoPi);
  if (a < 0) a += kTwoPi;
  return a - std::numbers::pi;
}

}  // namespace bevbridge
