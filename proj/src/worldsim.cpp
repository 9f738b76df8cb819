#include "bevbridge/worldsim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <unordered_map>

#include "bevbridge/csv.hpp"
#include "bevbridge/hashing.hpp"
#include "bevbridge/route.hpp"

namespace bevbridge {

namespace {

constexpr std::uint64_t kDisturbanceTag = 0x6b617070;

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

// Pose with cached trigonometry. Both renderers go through this so a given
// lattice cell maps to a bit-identical world point.
struct Frame {
  double x, y, c, s;
  explicit Frame(const Pose2& p) : x(p.x), y(p.y), c(std::cos(p.psi)), s(std::sin(p.psi)) {}
  Point2 to_world(GroundPoint g) const { return {x + c * g.x - s * g.y, y + s * g.x + c * g.y}; }
};

struct RectTest {
  OrientedRect rect;
  double c = 1.0, s = 0.0, radius2 = 0.0;
  Label label = kUnknownLabel;

  bool contains(Point2 p) const {
    const double dx = p.x - rect.center.x, dy = p.y - rect.center.y;
    if (dx * dx + dy * dy > radius2) return false;
    const double lx = c * dx + s * dy, ly = -s * dx + c * dy;
    return std::abs(lx) <= rect.half_length && std::abs(ly) <= rect.half_width;
  }
};

RectTest make_rect_test(const OrientedRect& r, Label label) {
  RectTest t;
  t.rect = r;
  t.c = std::cos(r.psi);
  t.s = std::sin(r.psi);
  t.radius2 = r.half_length * r.half_length + r.half_width * r.half_width;
  t.label = label;
  return t;
}

// Everything needed to label world points for one world snapshot.
struct LabelContext {
  std::vector<RectTest> entities;
  const StaticMap* map = nullptr;

  explicit LabelContext(const World& w) : map(w.map.get()) {
    entities.reserve(w.entities.size());
    for (const auto& e : w.entities) entities.push_back(make_rect_test(entity_rect(e), e.label()));
  }

  Label label(Point2 p) const {
    for (const auto& e : entities)
      if (e.contains(p)) return e.label;
    return map ? map->ground_label(p) : kUnknownLabel;
  }
};

double segment_distance(Point2 a, Point2 b, Point2 p) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

void longitudinal_update(EgoState& e, double u_v, const ActuatorModel& a, double dt) {
  const double demand = u_v * a.a_max;
  if (a.lag > 0.0)
    e.accel += (demand - e.accel) * std::min(1.0, dt / a.lag);
  else
    e.accel = demand;
}

void integrate_speed(EgoState& e, const ActuatorModel& a, double dt) {
  e.v = std::clamp(e.v + e.accel * dt, 0.0, a.v_cap);
  if (e.v == 0.0 && e.accel < 0.0) e.accel = 0.0;
}

}  // namespace

void ActuatorModel::validate() const {
  require(std::isfinite(a_max) && a_max > 0.0, "actuator: a_max must be > 0");
  require(std::isfinite(lag) && lag >= 0.0, "actuator: lag must be >= 0");
  require(std::isfinite(steer_slew_time) && steer_slew_time >= 0.0,
          "actuator: steer_slew_time must be >= 0");
  require(std::isfinite(v_cap) && v_cap > 0.0, "actuator: v_cap must be > 0");
  require(std::isfinite(kappa_disturbance) && kappa_disturbance >= 0.0,
          "actuator: kappa_disturbance must be >= 0");
}

std::string_view entity_kind_name(EntityKind k) {
  switch (k) {
    case EntityKind::vehicle: return "vehicle";
    case EntityKind::pedestrian: return "pedestrian";
    case EntityKind::cyclist: return "cyclist";
    case EntityKind::motorcycle: return "motorcycle";
    case EntityKind::obstacle: return "obstacle";
    case EntityKind::stop_sign: return "stop_sign";
    case EntityKind::traffic_light: return "traffic_light";
  }
  return "obstacle";
}

EntityKind parse_entity_kind(std::string_view name) {
  for (auto k : {EntityKind::vehicle, EntityKind::pedestrian, EntityKind::cyclist,
                 EntityKind::motorcycle, EntityKind::obstacle, EntityKind::stop_sign,
                 EntityKind::traffic_light})
    if (entity_kind_name(k) == name) return k;
  throw std::invalid_argument("unknown entity kind '" + std::string(name) + "'");
}

Label Entity::label() const {
  switch (kind) {
    case EntityKind::vehicle: return label_of(SemanticClass::vehicle);
    case EntityKind::pedestrian: return label_of(SemanticClass::pedestrian);
    case EntityKind::cyclist: return label_of(SemanticClass::cyclist);
    case EntityKind::motorcycle: return label_of(SemanticClass::motorcycle);
    case EntityKind::obstacle: return label_of(SemanticClass::obstacle);
    case EntityKind::stop_sign: return label_of(SemanticClass::stop_sign);
    case EntityKind::traffic_light:
      switch (light) {
        case LightState::red: return label_of(SemanticClass::traffic_light_red);
        case LightState::yellow: return label_of(SemanticClass::traffic_light_yellow);
        case LightState::green: return label_of(SemanticClass::traffic_light_green);
      }
  }
  return label_of(SemanticClass::obstacle);
}

double Entity::speed_at(double t) const {
  if (profile.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& seg : profile) {
    acc += seg.duration;
    if (t < acc) return seg.speed;
  }
  return profile.back().speed;
}

void RoadMap::validate() const {
  require(lane_width > 0.0, "road map: lane width must be > 0");
  for (const auto& c : centerlines) require(c.size() >= 2, "road map: centerline needs >= 2 points");
  for (const auto& m : markings) require(m.size() >= 2, "road map: marking needs >= 2 points");
}

StaticMap::StaticMap(RoadMap road) : road_(std::move(road)) {
  road_.validate();
  if (road_.ground_is_road) return;
  double xmin = std::numeric_limits<double>::infinity(), ymin = xmin;
  double xmax = -xmin, ymax = -xmin;
  auto grow = [&](const std::vector<Point2>& pts, double pad) {
    for (const auto& p : pts) {
      xmin = std::min(xmin, p.x - pad);
      xmax = std::max(xmax, p.x + pad);
      ymin = std::min(ymin, p.y - pad);
      ymax = std::max(ymax, p.y + pad);
    }
  };
  for (const auto& c : road_.centerlines) grow(c, road_.lane_width / 2.0);
  for (const auto& m : road_.markings) grow(m, road_.marking_width / 2.0);
  for (const auto& s : road_.sidewalks) grow(s, 0.0);
  if (!(xmin < xmax)) return;
  constexpr double r = kResolution;
  x0_ = std::floor(xmin / r) * r - r;
  y0_ = std::floor(ymin / r) * r - r;
  nx_ = static_cast<int>(std::ceil((xmax - x0_) / r)) + 2;
  ny_ = static_cast<int>(std::ceil((ymax - y0_) / r)) + 2;
  raster_.assign(static_cast<std::size_t>(nx_) * ny_, kUnknownLabel);
  auto cell_x = [&](int i) { return x0_ + (i + 0.5) * r; };
  auto cell_y = [&](int j) { return y0_ + (j + 0.5) * r; };
  auto idx = [&](int i, int j) { return static_cast<std::size_t>(j) * nx_ + i; };

  // sidewalks: even-odd scanline fill evaluated at cell centers
  for (const auto& poly : road_.sidewalks) {
    if (poly.size() < 3) continue;
    std::vector<double> xs;
    for (int j = 0; j < ny_; ++j) {
      const double y = cell_y(j);
      xs.clear();
      for (std::size_t a = 0, b = poly.size() - 1; a < poly.size(); b = a++) {
        const Point2 p = poly[a], q = poly[b];
        if ((p.y > y) != (q.y > y)) xs.push_back(p.x + (y - p.y) * (q.x - p.x) / (q.y - p.y));
      }
      std::sort(xs.begin(), xs.end());
      for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
        // cell center strictly left of the crossing counts, as in point_in_polygon
        const int i0 = std::max(0, static_cast<int>(std::floor((xs[k] - x0_) / r - 0.5)) + 1);
        const int i1 = std::min(nx_ - 1, static_cast<int>(std::ceil((xs[k + 1] - x0_) / r - 0.5)) - 1);
        for (int i = i0; i <= i1; ++i) raster_[idx(i, j)] = label_of(SemanticClass::sidewalk);
      }
    }
  }
  auto paint_band = [&](const Polyline& line, double half, Label label) {
    for (std::size_t s = 1; s < line.size(); ++s) {
      const Point2 a = line[s - 1], b = line[s];
      const int i0 = std::max(0, static_cast<int>(std::floor((std::min(a.x, b.x) - half - x0_) / r)));
      const int i1 = std::min(nx_ - 1, static_cast<int>(std::ceil((std::max(a.x, b.x) + half - x0_) / r)));
      const int j0 = std::max(0, static_cast<int>(std::floor((std::min(a.y, b.y) - half - y0_) / r)));
      const int j1 = std::min(ny_ - 1, static_cast<int>(std::ceil((std::max(a.y, b.y) + half - y0_) / r)));
      for (int j = j0; j <= j1; ++j)
        for (int i = i0; i <= i1; ++i)
          if (segment_distance(a, b, {cell_x(i), cell_y(j)}) <= half) raster_[idx(i, j)] = label;
    }
  };
  for (const auto& c : road_.centerlines)
    paint_band(c, road_.lane_width / 2.0, label_of(SemanticClass::road));
  for (const auto& m : road_.markings)
    paint_band(m, road_.marking_width / 2.0, label_of(SemanticClass::lane_marking));
}

Label StaticMap::ground_label(Point2 p) const {
  if (road_.ground_is_road) return label_of(SemanticClass::road);
  if (raster_.empty()) return kUnknownLabel;
  const double fi = std::floor((p.x - x0_) / kResolution);
  const double fj = std::floor((p.y - y0_) / kResolution);
  if (!(fi >= 0 && fj >= 0 && fi < nx_ && fj < ny_)) return kUnknownLabel;
  return raster_[static_cast<std::size_t>(fj) * nx_ + static_cast<std::size_t>(fi)];
}

bool StaticMap::drivable(Point2 p) const {
  const Label l = ground_label(p);
  return l == label_of(SemanticClass::road) || l == label_of(SemanticClass::lane_marking);
}

RoadMap road_along(const Polyline& route, double road_width, double marking_offset,
                   double sidewalk_inner, double sidewalk_outer) {
  RoadMap m;
  m.centerlines = {route};
  m.lane_width = road_width;
  m.markings = {offset_polyline(route, marking_offset), offset_polyline(route, -marking_offset)};
  m.sidewalks = {offset_band(route, sidewalk_inner, sidewalk_outer),
                 offset_band(route, -sidewalk_inner, -sidewalk_outer)};
  return m;
}

Label label_at(const World& w, Point2 p) { return LabelContext(w).label(p); }

World step(const World& w, const VehicleCommand& cmd, double dt) {
  require(std::isfinite(cmd.u_delta) && std::isfinite(cmd.u_v), "step: non-finite command");
  require(std::isfinite(dt) && dt > 0.0, "step: dt must be > 0");
  const double u_delta = std::clamp(cmd.u_delta, -1.0, 1.0);
  const double u_v = std::clamp(cmd.u_v, -1.0, 1.0);
  const PlatformParams& p = w.platform;
  const ActuatorModel& act = w.actuator;

  World out = w;
  EgoState& e = out.ego;
  const EgoState s = w.ego;

  const double target = u_delta * p.delta_max;
  if (act.steer_slew_time > 0.0) {
    const double max_step = p.delta_max / act.steer_slew_time * dt;
    e.delta = s.delta + std::clamp(target - s.delta, -max_step, max_step);
  } else {
    e.delta = target;
  }
  longitudinal_update(e, u_v, act, dt);
  e.throttle = u_v;

  double kappa = std::tan(e.delta) / p.L;
  if (act.kappa_disturbance > 0.0) {
    double sign = 1.0;
    if (!act.disturbance_constant_sign)
      sign = 2.0 * unit_double(hash_combine(act.disturbance_seed, kDisturbanceTag, w.tick)) - 1.0;
    kappa += sign * act.kappa_disturbance;
  }
  e.x = s.x + s.v * std::cos(s.psi) * dt;
  e.y = s.y + s.v * std::sin(s.psi) * dt;
  e.psi = wrap_angle(s.psi + s.v * kappa * dt);
  integrate_speed(e, act, dt);

  for (auto& ent : out.entities) {
    if (ent.path.size() < 2 || ent.profile.empty()) continue;
    ent.path_s += ent.speed_at(w.clock) * dt;
    const Point2 q = point_at(ent.path, ent.path_s);
    ent.pose = {q.x, q.y, heading_at(ent.path, ent.path_s)};
  }
  out.clock = w.clock + dt;
  out.tick = w.tick + 1;
  return out;
}

bool OrientedRect::contains(Point2 p) const { return make_rect_test(*this, 0).contains(p); }

std::array<Point2, 4> OrientedRect::corners() const {
  const double c = std::cos(psi), s = std::sin(psi);
  std::array<Point2, 4> out;
  const double sx[4] = {1, -1, -1, 1}, sy[4] = {1, 1, -1, -1};
  for (int i = 0; i < 4; ++i) {
    const double lx = sx[i] * half_length, ly = sy[i] * half_width;
    out[i] = {center.x + c * lx - s * ly, center.y + s * lx + c * ly};
  }
  return out;
}

OrientedRect ego_rect(const World& w) {
  const double len = w.body.rear_overhang + w.platform.L + w.body.front_overhang;
  const double mid = -w.body.rear_overhang + len / 2.0;  // along the heading from the rear axle
  const double c = std::cos(w.ego.psi), s = std::sin(w.ego.psi);
  return {{w.ego.x + c * mid, w.ego.y + s * mid}, w.ego.psi, len / 2.0, w.body.width / 2.0};
}

OrientedRect entity_rect(const Entity& e) {
  return {{e.pose.x, e.pose.y}, e.pose.psi, e.length / 2.0, e.width / 2.0};
}

bool rects_overlap(const OrientedRect& a, const OrientedRect& b) {
  const auto ca = a.corners(), cb = b.corners();
  for (const OrientedRect* r : {&a, &b}) {
    const double c = std::cos(r->psi), s = std::sin(r->psi);
    for (const Point2 axis : {Point2{c, s}, Point2{-s, c}}) {
      double amin = std::numeric_limits<double>::infinity(), amax = -amin;
      double bmin = amin, bmax = -amin;
      for (const auto& p : ca) {
        const double d = p.x * axis.x + p.y * axis.y;
        amin = std::min(amin, d);
        amax = std::max(amax, d);
      }
      for (const auto& p : cb) {
        const double d = p.x * axis.x + p.y * axis.y;
        bmin = std::min(bmin, d);
        bmax = std::max(bmax, d);
      }
      if (amax < bmin || bmax < amin) return false;
    }
  }
  return true;
}

BevSideInputs side_inputs(const World& w, const BevGridSpec& grid) {
  BevSideInputs side;
  if (w.route.size() >= 2) {
    const Pose2 pose = w.ego.pose();
    const Waypoints wp = waypoints(w.route, pose);
    Polyline local;
    local.reserve(kNumWaypoints + 1);
    local.push_back(to_local(pose, project_onto(w.route, {pose.x, pose.y}).point));
    for (const auto& p : wp)
      if (!(p == local.back())) local.push_back(p);
    side.route = paint_route(local, grid);
  }
  side.ego = paint_ego(grid, -w.body.rear_overhang, w.platform.L + w.body.front_overhang,
                       w.body.width / 2.0);
  return side;
}

namespace {

void gt_row(const LabelContext& ctx, const Frame& f, const BevGridSpec& grid, BevSemanticMap& out,
            int row) {
  for (int col = 0; col < grid.cells; ++col)
    out.at(row, col) = ctx.label(f.to_world(grid.cell_center(row, col)));
}

}  // namespace

BevSemanticMap render_gt_labels(const World& w, const BevGridSpec& grid) {
  grid.validate();
  const LabelContext ctx(w);
  const Frame f(w.ego.pose());
  BevSemanticMap out(grid);
#pragma omp parallel for schedule(static)
  for (int row = 0; row < grid.cells; ++row) gt_row(ctx, f, grid, out, row);
  return out;
}

BevTensor render_gt_bev(const World& w, const BevGridSpec& grid) {
  return encode(render_gt_labels(w, grid), side_inputs(w, grid));
}

FrontViewRenderer::FrontViewRenderer(const CameraCalibration& calib, const BevGridSpec& lattice)
    : calib_(calib), lattice_(lattice) {
  lattice_.validate();
  const PinholeCamera cam(calib_);
  const std::size_t n = static_cast<std::size_t>(calib_.width) * calib_.height;
  slot_.assign(n, -1);
  std::unordered_map<std::uint64_t, std::int32_t> seen;
  for (int row = 0; row < calib_.height; ++row)
    for (int col = 0; col < calib_.width; ++col) {
      const auto g = cam.back_project({static_cast<double>(col), static_cast<double>(row)});
      if (!g) continue;
      const CellIndex c = lattice_.lattice_index(*g);
      const std::uint64_t key = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(c.row)) << 32) |
                                static_cast<std::uint32_t>(c.col);
      const auto [it, fresh] = seen.try_emplace(key, static_cast<std::int32_t>(cells_.size()));
      if (fresh) cells_.push_back(c);
      slot_[static_cast<std::size_t>(row) * calib_.width + col] = it->second;
    }
}

namespace {

void gather(const std::vector<std::int32_t>& slot, const std::vector<Label>& cell_labels, SemanticImage& out) {
  for (std::size_t i = 0; i < slot.size(); ++i)
    if (slot[i] >= 0) out.labels[i] = cell_labels[static_cast<std::size_t>(slot[i])];
}

}  // namespace

// Every pixel takes the label of its lattice cell, so each distinct cell is
// labelled once and then scattered to its pixels.
SemanticImage FrontViewRenderer::render(const World& w) const {
  const LabelContext ctx(w);
  const Frame f(w.ego.pose());
  std::vector<Label> labels(cells_.size());
  const auto n = static_cast<std::ptrdiff_t>(cells_.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    labels[i] = ctx.label(f.to_world(lattice_.cell_center(cells_[i].row, cells_[i].col)));
  SemanticImage out(calib_.width, calib_.height);
  gather(slot_, labels, out);
  return out;
}

SemanticImage FrontViewRenderer::render_serial(const World& w) const {
  const LabelContext ctx(w);
  const Frame f(w.ego.pose());
  std::vector<Label> labels(cells_.size());
  for (std::size_t i = 0; i < cells_.size(); ++i)
    labels[i] = ctx.label(f.to_world(lattice_.cell_center(cells_[i].row, cells_[i].col)));
  SemanticImage out(calib_.width, calib_.height);
  gather(slot_, labels, out);
  return out;
}

SemanticImage render_front_view(const World& w, const CameraCalibration& calib) {
  return FrontViewRenderer(calib, w.lattice).render(w);
}

std::vector<std::uint8_t> resolvable_cells(const CameraCalibration& calib, const BevGridSpec& grid) {
  const PinholeCamera cam(calib);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(grid.cells) * grid.cells, 0);
  for (int row = 0; row < grid.cells; ++row)
    for (int col = 0; col < grid.cells; ++col) {
      const auto px = cam.project(grid.cell_center(row, col));
      if (!px) continue;
      const auto g = cam.back_project({static_cast<double>(px->col()), static_cast<double>(px->row())});
      if (g && grid.lattice_index(*g) == CellIndex{row, col})
        mask[static_cast<std::size_t>(row) * grid.cells + col] = 1;
    }
  return mask;
}

namespace reference {

BevSemanticMap render_gt_labels(const World& w, const BevGridSpec& grid) {
  grid.validate();
  const LabelContext ctx(w);
  const Frame f(w.ego.pose());
  BevSemanticMap out(grid);
  for (int row = 0; row < grid.cells; ++row) gt_row(ctx, f, grid, out, row);
  return out;
}

SemanticImage render_front_view(const World& w, const CameraCalibration& calib) {
  const PinholeCamera cam(calib);
  const LabelContext ctx(w);
  const Frame f(w.ego.pose());
  SemanticImage out(calib.width, calib.height);
  for (int row = 0; row < calib.height; ++row)
    for (int col = 0; col < calib.width; ++col) {
      const auto g = cam.back_project({static_cast<double>(col), static_cast<double>(row)});
      if (!g) continue;
      const CellIndex c = w.lattice.lattice_index(*g);
      out.at(col, row) = ctx.label(f.to_world(w.lattice.cell_center(c.row, c.col)));
    }
  return out;
}

}  // namespace reference

std::string_view termination_name(TerminationKind k) {
  switch (k) {
    case TerminationKind::collision: return "collision";
    case TerminationKind::off_road: return "off_road";
    case TerminationKind::lane_departure: return "lane_departure";
    case TerminationKind::stuck: return "stuck";
  }
  return "collision";
}

void MotionHistory::update(const World& w, const TerminationRules& rules) {
  if (w.ego.v < rules.stuck_speed) {
    if (stationary_since < 0.0) stationary_since = w.clock;
  } else {
    stationary_since = -1.0;
  }
}

std::optional<TerminationEvent> detect_termination(const World& w, const MotionHistory& history,
                                                   const TerminationRules& rules) {
  const OrientedRect ego = ego_rect(w);
  for (std::size_t i = 0; i < w.entities.size(); ++i)
    if (rects_overlap(ego, entity_rect(w.entities[i])))
      return TerminationEvent{TerminationKind::collision, w.ego.v, static_cast<int>(i)};
  const Point2 ref{w.ego.x, w.ego.y};
  if (w.map && !w.map->road().empty() && !w.map->road().ground_is_road && !w.map->drivable(ref))
    return TerminationEvent{TerminationKind::off_road, w.ego.v, -1};
  if (w.route.size() >= 2 && project_onto(w.route, ref).distance > rules.lane_departure)
    return TerminationEvent{TerminationKind::lane_departure, 0.0, -1};
  if (history.stationary_since >= 0.0 && w.clock - history.stationary_since > rules.stuck_time)
    return TerminationEvent{TerminationKind::stuck, 0.0, -1};
  return std::nullopt;
}

void write_trajectory_csv(std::ostream& os, const std::vector<TrajectoryRow>& rows) {
  os << "t,x,y,psi,v,delta,u_delta,u_v,event\n";
  for (const auto& r : rows)
    os << format_number(r.t) << ',' << format_number(r.ego.x) << ',' << format_number(r.ego.y) << ','
       << format_number(r.ego.psi) << ',' << format_number(r.ego.v) << ','
       << format_number(r.ego.delta) << ',' << format_number(r.cmd.u_delta) << ','
       << format_number(r.cmd.u_v) << ',' << r.event << '\n';
}

SpeedPlant make_speed_plant(const ActuatorModel& actuator) {
  actuator.validate();
  return [actuator](const PlatformParams& p, const StepResponseSpec& spec) {
    const int steps = static_cast<int>(std::lround(spec.duration / spec.dt));
    std::vector<double> trace;
    trace.reserve(steps);
    EgoState e;
    PidState pid;
    for (int k = 0; k < steps; ++k) {
      const PidStep ps = pid_step(pid, spec.step_speed, e.v, spec.dt, p);
      pid = ps.state;
      longitudinal_update(e, ps.u_v, actuator, spec.dt);
      integrate_speed(e, actuator, spec.dt);
      trace.push_back(e.v);
    }
    return trace;
  };
}

}  // namespace bevbridge
