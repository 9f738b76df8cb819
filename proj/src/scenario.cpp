#include "bevbridge/scenario.hpp"

#include <cmath>
#include <deque>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>

#include "bevbridge/csv.hpp"
#include "bevbridge/hashing.hpp"
#include "bevbridge/keyvalue.hpp"
#include "bevbridge/route.hpp"

namespace bevbridge {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

Polyline extend(const Polyline& route, double back, double forward) {
  Polyline out;
  const double h0 = heading_at(route, 0.0);
  const double len = polyline_length(route);
  const double h1 = heading_at(route, len);
  if (back > 0) out.push_back({route.front().x - back * std::cos(h0), route.front().y - back * std::sin(h0)});
  out.insert(out.end(), route.begin(), route.end());
  if (forward > 0) {
    const int n = static_cast<int>(std::ceil(forward / 10.0));
    for (int i = 1; i <= n; ++i) {
      const double d = forward * i / n;
      out.push_back({route.back().x + d * std::cos(h1), route.back().y + d * std::sin(h1)});
    }
  }
  return out;
}

Point2 offset_point(const Polyline& route, double s, double lateral, double* heading) {
  const Point2 base = point_at(route, s);
  const double h = heading_at(route, s);
  if (heading) *heading = h;
  return {base.x - lateral * std::sin(h), base.y + lateral * std::cos(h)};
}

std::vector<EntityPlacement> default_entities(const ScenarioSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(hash_combine(seed, static_cast<std::uint64_t>(spec.id), 0x7363656e));
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  std::vector<EntityPlacement> out;
  switch (spec.id) {
    case ScenarioId::car_following: {
      EntityPlacement lead;
      lead.kind = EntityKind::vehicle;
      lead.s = uniform(14.0, 20.0);
      lead.length = 4.5;
      lead.width = 2.0;
      const int segments = static_cast<int>(std::ceil(spec.max_time / 4.0)) + 1;
      for (int i = 0; i < segments; ++i) lead.profile.push_back({4.0, uniform(2.5, 6.0)});
      out.push_back(lead);
      break;
    }
    case ScenarioId::obstacle_avoidance: {
      const double side = (rng() & 1) ? 1.0 : -1.0;
      const double s_ranges[2][2] = {{25.0, 30.0}, {50.0, 55.0}};
      for (int i = 0; i < 2; ++i) {
        EntityPlacement ob;
        ob.kind = EntityKind::obstacle;
        ob.s = uniform(s_ranges[i][0], s_ranges[i][1]);
        ob.lateral = (i == 0 ? side : -side) * uniform(2.15, 2.45);
        ob.length = 1.5;
        ob.width = 1.6;
        out.push_back(ob);
      }
      break;
    }
    case ScenarioId::stop_sign: {
      EntityPlacement sign;
      sign.kind = EntityKind::stop_sign;
      sign.s = 35.0;
      sign.lateral = -4.5;
      sign.length = 0.4;
      sign.width = 0.4;
      out.push_back(sign);
      if (spec.crossing_pedestrian) {
        EntityPlacement ped;
        ped.kind = EntityKind::pedestrian;
        ped.s = 45.0;
        ped.lateral = -5.0;
        ped.crossing_to = 5.0;
        ped.length = 0.5;
        ped.width = 0.5;
        ped.profile = {{uniform(4.0, 7.0), 0.0}, {1.0, 1.2}};
        out.push_back(ped);
      }
      break;
    }
  }
  return out;
}

}  // namespace

std::string_view scenario_name(ScenarioId id) {
  switch (id) {
    case ScenarioId::car_following: return "car_following";
    case ScenarioId::obstacle_avoidance: return "obstacle_avoidance";
    case ScenarioId::stop_sign: return "stop_sign";
  }
  return "car_following";
}

ScenarioId parse_scenario_id(std::string_view name) {
  for (auto id : {ScenarioId::car_following, ScenarioId::obstacle_avoidance, ScenarioId::stop_sign})
    if (scenario_name(id) == name) return id;
  throw std::invalid_argument("unknown scenario id '" + std::string(name) + "'");
}

void ScenarioSpec::validate() const {
  if (!route.empty()) validate_route(route);
  if (!(max_time > 0.0)) throw std::invalid_argument("scenario: max_time must be > 0");
  if (route.empty() && !(route_length > 2.0))
    throw std::invalid_argument("scenario: route_length must be > 2 m");
  if (!(route_curvature >= 0.0)) throw std::invalid_argument("scenario: route_curvature must be >= 0");
  if (!(initial_speed >= 0.0)) throw std::invalid_argument("scenario: initial_speed must be >= 0");
  for (const auto& e : entities)
    if (!(e.length > 0.0 && e.width > 0.0))
      throw std::invalid_argument("scenario: entity footprint dimensions must be > 0");
  platform_preset(platform);
}

ScenarioSpec default_scenario(ScenarioId id) {
  ScenarioSpec s;
  s.id = id;
  switch (id) {
    case ScenarioId::car_following: s.route_length = 80.0; break;
    case ScenarioId::obstacle_avoidance: s.route_length = 70.0; break;
    case ScenarioId::stop_sign: s.route_length = 60.0; break;
  }
  return s;
}

Polyline generate_route(double length, double max_curvature, std::uint64_t seed) {
  std::mt19937_64 rng(hash_combine(seed, 0x726f757465));
  std::uniform_real_distribution<double> kdist(-1.0, 1.0);
  constexpr double kLeadIn = 10.0, kArc = 20.0, kStep = 0.25;
  Polyline out{{0.0, 0.0}};
  double x = 0.0, y = 0.0, psi = 0.0, kappa = 0.0, s = 0.0, next_change = kLeadIn;
  double next_emit = 1.0;
  while (s < length - 1e-9) {
    if (s >= next_change - 1e-9) {
      kappa = max_curvature > 0.0 ? max_curvature * kdist(rng) : 0.0;
      next_change += kArc;
    }
    const double ds = std::min(kStep, length - s);
    // exact arc step
    if (std::abs(kappa) > 1e-12) {
      x += (std::sin(psi + kappa * ds) - std::sin(psi)) / kappa;
      y += (std::cos(psi) - std::cos(psi + kappa * ds)) / kappa;
    } else {
      x += ds * std::cos(psi);
      y += ds * std::sin(psi);
    }
    psi += kappa * ds;
    s += ds;
    if (s >= next_emit - 1e-9 || s >= length - 1e-9) {
      out.push_back({x, y});
      next_emit += 1.0;
    }
  }
  return out;
}

// The road raster is a pure function of the route and dominates scene
// construction, so recently built maps are shared between worlds.
std::shared_ptr<const StaticMap> static_map_for(const Polyline& route) {
  constexpr std::size_t kCapacity = 8;
  static std::mutex mu;
  static std::deque<std::pair<Polyline, std::shared_ptr<const StaticMap>>> cache;
  {
    const std::lock_guard lock(mu);
    for (const auto& [r, m] : cache)
      if (r == route) return m;
  }
  auto map = std::make_shared<const StaticMap>(road_along(extend(route, 10.0, 30.0)));
  const std::lock_guard lock(mu);
  cache.emplace_front(route, map);
  if (cache.size() > kCapacity) cache.pop_back();
  return map;
}

World build_scenario(const ScenarioSpec& spec, std::uint64_t seed) {
  spec.validate();
  World w;
  w.route = spec.route.empty() ? generate_route(spec.route_length, spec.route_curvature, seed) : spec.route;
  w.platform = platform_preset(spec.platform);
  w.map = static_map_for(w.route);
  const double h0 = heading_at(w.route, 0.0);
  w.ego.x = w.route.front().x;
  w.ego.y = w.route.front().y;
  w.ego.psi = h0;
  w.ego.v = std::min(spec.initial_speed, w.actuator.v_cap);

  const auto placements = spec.entities.empty() ? default_entities(spec, seed) : spec.entities;
  const Polyline long_route = extend(w.route, 0.0, 200.0);
  for (const auto& p : placements) {
    Entity e;
    e.kind = p.kind;
    e.length = p.length;
    e.width = p.width;
    e.light = p.light;
    e.profile = p.profile;
    double h = 0.0;
    const Point2 c = offset_point(long_route, p.s, p.lateral, &h);
    if (p.crossing_to) {
      double h2 = 0.0;
      const Point2 end = offset_point(long_route, p.s, *p.crossing_to, &h2);
      e.path = {c, end};
      e.pose = {c.x, c.y, std::atan2(end.y - c.y, end.x - c.x)};
    } else if (!p.profile.empty()) {
      e.path = p.lateral == 0.0 ? long_route : offset_polyline(long_route, p.lateral);
      e.path_s = project_onto(e.path, c).s;
      const Point2 q = point_at(e.path, e.path_s);
      e.pose = {q.x, q.y, heading_at(e.path, e.path_s) + p.heading_offset};
    } else {
      e.pose = {c.x, c.y, h + p.heading_offset};
    }
    w.entities.push_back(std::move(e));
  }
  return w;
}

Polyline parse_points(std::string_view text) {
  Polyline out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find(';', start);
    const std::string item = trim(text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    if (!item.empty()) {
      const auto v = parse_number_list(item);
      if (v.size() != 2) throw std::runtime_error("route point '" + item + "' is not x,y");
      out.push_back({v[0], v[1]});
    }
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

std::vector<SpeedSegment> parse_profile(std::string_view text) {
  std::vector<SpeedSegment> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find(',', start);
    const std::string item = trim(text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    if (!item.empty()) {
      const auto colon = item.find(':');
      if (colon == std::string::npos) throw std::runtime_error("speed segment '" + item + "' is not duration:speed");
      const auto d = parse_number_list(item.substr(0, colon));
      const auto v = parse_number_list(item.substr(colon + 1));
      if (d.size() != 1 || v.size() != 1 || !(d[0] > 0.0) || !(v[0] >= 0.0))
        throw std::runtime_error("speed segment '" + item + "' is invalid");
      out.push_back({d[0], v[0]});
    }
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

namespace {

LightState parse_light(const std::string& s) {
  if (s == "red") return LightState::red;
  if (s == "yellow") return LightState::yellow;
  if (s == "green") return LightState::green;
  throw std::runtime_error("unknown light state '" + s + "'");
}

std::string_view light_name(LightState l) {
  switch (l) {
    case LightState::red: return "red";
    case LightState::yellow: return "yellow";
    case LightState::green: return "green";
  }
  return "red";
}

ScenarioSpec scenario_from(const KeyValueFile& f) {
  const KeyValueSection* s = f.first("scenario");
  if (!s) throw std::runtime_error("scenario file: missing [scenario] section");
  ScenarioSpec spec = default_scenario(parse_scenario_id(s->get("id")));
  spec.seed = static_cast<std::uint64_t>(s->get_integer("seed", 0));
  spec.platform = s->get_string("platform", spec.platform);
  spec.max_time = s->get_number("max_time", spec.max_time);
  spec.route_length = s->get_number("route_length", spec.route_length);
  spec.route_curvature = s->get_number("route_curvature", spec.route_curvature);
  spec.crossing_pedestrian = s->get_bool("crossing_pedestrian", spec.crossing_pedestrian);
  spec.initial_speed = s->get_number("initial_speed", spec.initial_speed);
  if (s->has("route")) spec.route = parse_points(s->get("route"));
  for (const KeyValueSection* e : f.all("entity")) {
    EntityPlacement p;
    p.kind = parse_entity_kind(e->get("kind"));
    p.s = e->get_number("s");
    p.lateral = e->get_number("lateral", 0.0);
    p.length = e->get_number("length");
    p.width = e->get_number("width");
    p.heading_offset = e->get_number("heading_offset", 0.0);
    if (e->has("speeds")) p.profile = parse_profile(e->get("speeds"));
    if (e->has("light")) p.light = parse_light(e->get("light"));
    if (e->has("crossing_to")) p.crossing_to = e->get_number("crossing_to");
    spec.entities.push_back(std::move(p));
  }
  try {
    spec.validate();
  } catch (const std::invalid_argument& ex) {
    throw std::runtime_error(ex.what());
  }
  return spec;
}

}  // namespace

ScenarioSpec load_scenario_file(const std::string& path) {
  try {
    return scenario_from(load_key_value_file(path));
  } catch (const std::runtime_error& e) {
    const std::string what = e.what();
    if (what.rfind(path, 0) == 0) throw;
    throw std::runtime_error(path + ": " + what);
  }
}

ScenarioSpec parse_scenario_text(const std::string& text) {
  return scenario_from(parse_key_value_text(text));
}

std::string scenario_to_text(const ScenarioSpec& spec) {
  std::ostringstream os;
  os << "[scenario]\n"
     << "id = " << scenario_name(spec.id) << '\n'
     << "seed = " << spec.seed << '\n'
     << "platform = " << spec.platform << '\n'
     << "max_time = " << format_exact(spec.max_time) << '\n'
     << "route_length = " << format_exact(spec.route_length) << '\n'
     << "route_curvature = " << format_exact(spec.route_curvature) << '\n'
     << "crossing_pedestrian = " << (spec.crossing_pedestrian ? "true" : "false") << '\n'
     << "initial_speed = " << format_exact(spec.initial_speed) << '\n';
  if (!spec.route.empty()) {
    os << "route = ";
    for (std::size_t i = 0; i < spec.route.size(); ++i)
      os << (i ? "; " : "") << format_exact(spec.route[i].x) << ',' << format_exact(spec.route[i].y);
    os << '\n';
  }
  for (const auto& e : spec.entities) {
    os << "\n[entity]\n"
       << "kind = " << entity_kind_name(e.kind) << '\n'
       << "s = " << format_exact(e.s) << '\n'
       << "lateral = " << format_exact(e.lateral) << '\n'
       << "length = " << format_exact(e.length) << '\n'
       << "width = " << format_exact(e.width) << '\n';
    if (e.heading_offset != 0.0) os << "heading_offset = " << format_exact(e.heading_offset) << '\n';
    if (!e.profile.empty()) {
      os << "speeds = ";
      for (std::size_t i = 0; i < e.profile.size(); ++i)
        os << (i ? ", " : "") << format_exact(e.profile[i].duration) << ':' << format_exact(e.profile[i].speed);
      os << '\n';
    }
    if (e.kind == EntityKind::traffic_light) os << "light = " << light_name(e.light) << '\n';
    if (e.crossing_to) os << "crossing_to = " << format_exact(*e.crossing_to) << '\n';
  }
  return os.str();
}

}  // namespace bevbridge
