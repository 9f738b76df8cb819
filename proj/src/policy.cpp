#include "bevbridge/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "bevbridge/csv.hpp"
#include "bevbridge/hashing.hpp"

namespace bevbridge {

namespace {

const BevGridSpec kGrid{};

bool finite2(Point2 p) { return std::isfinite(p.x) && std::isfinite(p.y); }

double clamp1(double x) { return std::clamp(x, -1.0, 1.0); }

double speed_to_a2(double v_des, const ActionLimits& limits) {
  return clamp1(2.0 * v_des / limits.v_max - 1.0);
}

struct SectorTable {
  std::vector<std::int8_t> sector;
  std::array<int, features::kSectors> sizes{};

  SectorTable() : sector(static_cast<std::size_t>(kBevCells) * kBevCells, -1) {
    constexpr double kBin = std::numbers::pi / 6.0;
    for (int r = 0; r < kBevCells; ++r)
      for (int c = 0; c < kBevCells; ++c) {
        const GroundPoint p = kGrid.cell_center(r, c);
        if (p.x <= 0.0) continue;
        const double range = std::hypot(p.x, p.y);
        if (range >= 10.0) continue;
        const int band = range < 5.0 ? 0 : 1;
        const int bin = std::min(5, static_cast<int>(std::floor((std::atan2(p.y, p.x) + std::numbers::pi / 2) / kBin)));
        const int s = band * 6 + bin;
        sector[static_cast<std::size_t>(r) * kBevCells + c] = static_cast<std::int8_t>(s);
        ++sizes[s];
      }
  }
};

const SectorTable& sector_table() {
  static const SectorTable t;
  return t;
}

}  // namespace

void Observation::validate() const {
  for (double s : state)
    if (!std::isfinite(s)) throw std::invalid_argument("observation state is not finite");
  for (const auto& w : waypoints)
    if (!finite2(w)) throw std::invalid_argument("observation waypoint is not finite");
}

PolicyOutput evaluate_policy(const Policy& policy, const Observation& obs) {
  const PolicyOutput out = policy.act(obs);
  if (!std::isfinite(out.a1) || !std::isfinite(out.a2) || std::abs(out.a1) > 1.0 || std::abs(out.a2) > 1.0)
    throw std::domain_error("policy " + policy.name() + " produced an output outside [-1, 1]^2");
  return out;
}

double path_lateral_at(const Waypoints& wps, double x) {
  Point2 prev{0.0, 0.0};
  for (const Point2& w : wps) {
    if (w.x > prev.x && x <= w.x) {
      if (x <= prev.x) return prev.y;
      const double t = (x - prev.x) / (w.x - prev.x);
      return prev.y + t * (w.y - prev.y);
    }
    if (w.x > prev.x) prev = w;
  }
  return prev.y;
}

CorridorOccupancy corridor_occupancy(const Observation& obs, const Corridor& corridor, int k) {
  if (k < 1) throw std::invalid_argument("corridor_occupancy: k must be >= 1");
  CorridorOccupancy out;
  out.nearest_x = corridor.x_end;
  std::vector<double> hits;
  const double s = kGrid.cell_size();
  // rows run from far forward (row 0) toward the rear, so x decreases with row
  for (int r = kBevCells - 1; r >= 0; --r) {
    const double x = kGrid.extent / 2 - (r + 0.5) * s;
    if (x < corridor.x_begin) continue;
    if (x > corridor.x_end) break;
    const double yc = path_lateral_at(obs.waypoints, x);
    for (int c = 0; c < kBevCells; ++c) {
      const double y = kGrid.extent / 2 - (c + 0.5) * s;
      if (std::abs(y - yc) > corridor.half_width) continue;
      ++out.cells;
      bool occupied = false;
      for (int ch : {2, 3, 4, 5, 11}) occupied = occupied || obs.bev.at(r, c, ch);
      if (occupied) {
        ++out.occupied;
        hits.push_back(x);
      }
    }
  }
  if (static_cast<int>(hits.size()) >= k) out.nearest_x = hits[k - 1];
  return out;
}

PolicyOutput pure_pursuit(const Observation& obs, double lookahead, const ActionLimits& limits,
                          const PurePursuitParams& params) {
  const Point2* target = nullptr;
  double best = 0.0;
  for (const Point2& w : obs.waypoints) {
    const double gap = std::abs(std::hypot(w.x, w.y) - lookahead);
    if (!target || gap < best) {
      target = &w;
      best = gap;
    }
  }
  const double d2 = target->x * target->x + target->y * target->y;
  const double kappa = d2 > 1e-6 ? 2.0 * target->y / d2 : 0.0;

  double v_des = params.cruise_speed;
  const CorridorOccupancy occ = corridor_occupancy(
      obs, Corridor{params.front_x, kGrid.extent / 2, params.corridor_half_width}, params.min_object_cells);
  if (occ.occupied >= params.min_object_cells) {
    const double gap = occ.nearest_x - params.front_x;
    v_des *= std::clamp((gap - params.stop_gap) / params.slow_range, 0.0, 1.0);
  }
  return {clamp1(kappa / limits.kappa_max), speed_to_a2(v_des, limits)};
}

PurePursuitPolicy::PurePursuitPolicy(ActionLimits limits, PurePursuitParams params)
    : limits_(limits), params_(params) {
  limits_.validate();
  if (!(params_.lookahead > 0.0)) throw std::invalid_argument("pure pursuit lookahead must be > 0");
}

PolicyOutput PurePursuitPolicy::act(const Observation& obs) const {
  return pure_pursuit(obs, params_.lookahead, limits_, params_);
}

RandomJitterPolicy::RandomJitterPolicy(ActionLimits limits, double amplitude, std::uint64_t seed,
                                       PurePursuitParams params)
    : base_(limits, params), amplitude_(amplitude), seed_(seed) {}

PolicyOutput RandomJitterPolicy::act(const Observation& obs) const {
  PolicyOutput out = base_.act(obs);
  const double u = unit_double(hash_combine(seed_, 0x6a6974746572, obs.cycle));
  out.a1 = clamp1(out.a1 + amplitude_ * (2.0 * u - 1.0));
  return out;
}

namespace features {

int sector_of(int row, int col) {
  return sector_table().sector[static_cast<std::size_t>(row) * kBevCells + col];
}

const std::array<int, kSectors>& sector_sizes() { return sector_table().sizes; }

int group_of(int channel) {
  switch (channel) {
    case 0: case 1: return 0;                          // drivable
    case 2: case 3: case 4: case 5: case 11: return 1; // objects
    case 6: return 2;                                  // sidewalk
    case 7: case 8: case 10: return 3;                 // stop cues
    default: return -1;
  }
}

Vector extract(const Observation& obs) {
  const SectorTable& t = sector_table();
  std::array<int, kSectors * kGroups> counts{};
  std::array<int, kBevChannels> group{};
  for (int ch = 0; ch < kBevChannels; ++ch) group[ch] = group_of(ch);
  const auto data = obs.bev.data();
  for (int r = 0; r < kBevCells / 2; ++r)
    for (int c = 0; c < kBevCells; ++c) {
      const int s = t.sector[static_cast<std::size_t>(r) * kBevCells + c];
      if (s < 0) continue;
      const std::uint8_t* cell = &data[BevTensor::index(r, c, 0)];
      for (int ch = 0; ch < kBevChannels; ++ch)
        if (cell[ch] && group[ch] >= 0) counts[group[ch] * kSectors + s] += cell[ch];
    }
  Vector f{};
  for (int g = 0; g < kGroups; ++g)
    for (int s = 0; s < kSectors; ++s)
      f[g * kSectors + s] = static_cast<double>(counts[g * kSectors + s]) / t.sizes[s];
  int i = kBevFeatures;
  for (int k : {1, 3, 6, 14}) f[i++] = std::atan2(obs.waypoints[k].y, obs.waypoints[k].x);
  for (int k : {2, 5}) f[i++] = obs.waypoints[k].y / 5.0;
  for (double s : obs.state) f[i++] = s;
  f[i++] = 1.0;
  for (double v : f)
    if (!std::isfinite(v)) throw std::invalid_argument("policy features are not finite");
  return f;
}

}  // namespace features

LearnablePolicy::LearnablePolicy(std::vector<double> params) : params_(std::move(params)) {
  if (params_.size() != static_cast<std::size_t>(kParams))
    throw std::invalid_argument("learnable policy needs " + std::to_string(kParams) + " parameters, got " +
                                std::to_string(params_.size()));
  for (double p : params_)
    if (!std::isfinite(p)) throw std::invalid_argument("learnable policy parameter is not finite");
}

PolicyOutput LearnablePolicy::act(const Observation& obs) const {
  obs.validate();
  return act_features(features::extract(obs));
}

PolicyOutput LearnablePolicy::act_features(const features::Vector& f) const {
  double z[2] = {0.0, 0.0};
  for (int k = 0; k < 2; ++k)
    for (int j = 0; j < features::kCount; ++j) z[k] += weight(k, j) * f[j];
  return {std::tanh(z[0]), std::tanh(z[1])};
}

double LearnablePolicy::lipschitz_bound() const {
  const auto& sizes = features::sector_sizes();
  double sum = 0.0;
  for (int k = 0; k < 2; ++k) {
    double worst = 0.0;
    for (int g = 0; g < features::kGroups; ++g)
      for (int s = 0; s < features::kSectors; ++s)
        worst = std::max(worst, std::abs(weight(k, g * features::kSectors + s)) / sizes[s]);
    sum += worst * worst;
  }
  return std::sqrt(sum);
}

void write_policy(std::ostream& os, const LearnablePolicy& p) {
  os << "bevbridge-policy\n"
     << "features " << features::kVersion << ' ' << features::kCount << '\n'
     << "params " << p.params().size() << '\n';
  for (double v : p.params()) os << format_exact(v) << '\n';
}

LearnablePolicy read_policy(std::istream& is) {
  std::string magic, tag;
  int version = 0, count = 0;
  std::size_t n = 0;
  std::getline(is, magic);
  if (magic != "bevbridge-policy") throw std::runtime_error("not a policy file");
  if (!(is >> tag >> version >> count) || tag != "features")
    throw std::runtime_error("policy file: malformed features line");
  if (version != features::kVersion || count != features::kCount)
    throw std::runtime_error("policy file: feature map version " + std::to_string(version) + " with " +
                             std::to_string(count) + " features is not supported");
  if (!(is >> tag >> n) || tag != "params") throw std::runtime_error("policy file: malformed params line");
  std::vector<double> params;
  params.reserve(n);
  std::string line;
  while (params.size() < n && is >> line) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(line, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != line.size()) throw std::runtime_error("policy file: bad parameter '" + line + "'");
    params.push_back(v);
  }
  if (params.size() != n) throw std::runtime_error("policy file: expected " + std::to_string(n) + " parameters");
  try {
    return LearnablePolicy(std::move(params));
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("policy file: ") + e.what());
  }
}

void save_policy_file(const std::string& path, const LearnablePolicy& p) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_policy(os, p);
}

LearnablePolicy load_policy_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  try {
    return read_policy(is);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

std::unique_ptr<Policy> make_policy(const std::string& name, const ActionLimits& limits, std::uint64_t seed) {
  if (name == "pure_pursuit") return std::make_unique<PurePursuitPolicy>(limits);
  if (name == "pure_pursuit_detuned") {
    PurePursuitParams p;
    p.lookahead = 14.0;  // cuts corners on curved routes
    return std::make_unique<PurePursuitPolicy>(limits, p);
  }
  if (name == "random_jitter") return std::make_unique<RandomJitterPolicy>(limits, 0.6, seed);
  if (name == "zero") return std::make_unique<LearnablePolicy>();
  return std::make_unique<LearnablePolicy>(load_policy_file(name));
}

void RewardWeights::validate() const {
  for (double v : {progress, collision, lateral, overspeed, speed_limit, progress_cap, lateral_cap, overspeed_cap})
    if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("reward weights and caps must be finite and >= 0");
}

double RewardWeights::r_max() const {
  return progress * progress_cap + collision + lateral * lateral_cap + overspeed * overspeed_cap;
}

double task_reward(const Transition& t, const RewardWeights& w) {
  const double progress = std::clamp(t.progress, -w.progress_cap, w.progress_cap);
  const double lateral = std::min(std::abs(t.lateral), w.lateral_cap);
  const double over = std::clamp(t.speed - w.speed_limit, 0.0, w.overspeed_cap);
  return w.progress * progress - (t.collision ? w.collision : 0.0) - w.lateral * lateral - w.overspeed * over;
}

double discounted_return(std::span<const double> rewards, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("discount factor must be in (0, 1)");
  double sum = 0.0, g = 1.0;
  for (double r : rewards) {
    sum += g * r;
    g *= gamma;
  }
  return sum;
}

}  // namespace bevbridge
