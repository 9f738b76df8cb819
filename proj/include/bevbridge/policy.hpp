#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "bevbridge/pam.hpp"
#include "bevbridge/perception.hpp"
#include "bevbridge/route.hpp"

namespace bevbridge {

// What the policy sees each cycle. state = (v / v_max, delta / delta_max, throttle).
struct Observation {
  BevTensor bev;
  std::array<double, 3> state{};
  Waypoints waypoints{};
  std::uint64_t cycle = 0;  // lets stochastic baselines stay pure functions of the input

  // Throws std::invalid_argument for non-finite state or waypoints.
  void validate() const;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual PolicyOutput act(const Observation& obs) const = 0;
  virtual std::string name() const = 0;
};

// Calls the policy and checks the output contract: throws std::domain_error
// for outputs outside [-1, 1]^2 or non-finite.
PolicyOutput evaluate_policy(const Policy& policy, const Observation& obs);

// Forward corridor of the observation: the piecewise-linear path through the
// ego origin and the waypoints, widened to half_width, between x_begin and
// x_end (ego frame, meters).
struct Corridor {
  double x_begin = 0.0;
  double x_end = 10.0;
  double half_width = 1.3;
};

// Lateral position of the waypoint path at ego-frame x (linear interpolation,
// flat beyond the last waypoint).
double path_lateral_at(const Waypoints& wps, double x);

struct CorridorOccupancy {
  int cells = 0;           // corridor cells in the BEV
  int occupied = 0;        // of which carry an object class
  double nearest_x = 0.0;  // x of the k-th nearest occupied cell, x_end when fewer
};

// Counts object-class cells (vehicle, pedestrian, cyclist, motorcycle,
// obstacle) inside the corridor. k >= 1 sets how many occupied cells make an
// object, so isolated label noise does not move nearest_x.
CorridorOccupancy corridor_occupancy(const Observation& obs, const Corridor& corridor, int k = 1);

struct PurePursuitParams {
  double lookahead = 6.0;     // m
  double cruise_speed = 4.0;  // m/s
  // Slow down linearly from cruise to 0 as the nearest object in the corridor
  // goes from stop_gap + slow_range to stop_gap ahead of the front bumper.
  double stop_gap = 3.5;
  double slow_range = 2.5;
  double front_x = 3.875;     // ego front bumper, ego frame
  double corridor_half_width = 1.3;
  int min_object_cells = 12;
};

class PurePursuitPolicy : public Policy {
 public:
  PurePursuitPolicy(ActionLimits limits, PurePursuitParams params = {});
  PolicyOutput act(const Observation& obs) const override;
  std::string name() const override { return "pure_pursuit"; }
  const PurePursuitParams& params() const { return params_; }

 private:
  ActionLimits limits_;
  PurePursuitParams params_;
};

// Scripted baseline with the requested lookahead: curvature 2 y_L / d^2 toward
// the waypoint nearest to the lookahead distance, cruise speed reduced when the
// forward corridor holds an object.
PolicyOutput pure_pursuit(const Observation& obs, double lookahead, const ActionLimits& limits,
                          const PurePursuitParams& params = {});

// Pure pursuit plus uniform steering noise of the given amplitude drawn from
// (seed, obs.cycle).
class RandomJitterPolicy : public Policy {
 public:
  RandomJitterPolicy(ActionLimits limits, double amplitude, std::uint64_t seed,
                     PurePursuitParams params = {});
  PolicyOutput act(const Observation& obs) const override;
  std::string name() const override { return "random_jitter"; }

 private:
  PurePursuitPolicy base_;
  double amplitude_;
  std::uint64_t seed_;
};

class ConstantPolicy : public Policy {
 public:
  explicit ConstantPolicy(PolicyOutput out) : out_(out) {}
  PolicyOutput act(const Observation&) const override { return out_; }
  std::string name() const override { return "constant"; }

 private:
  PolicyOutput out_;
};

// Fixed feature map of the learnable policy.
//   48 BEV features: 4 channel groups x 12 forward sectors (two range bands of
//      [0, 5) and [5, 10) m, six 30 degree bearings over [-90, 90) degrees);
//      each is the group occupancy summed over the sector's cells divided by
//      the sector's cell count.
//   4 waypoint bearings (waypoints 2, 4, 7, 15), rad.
//   2 waypoint lateral offsets (waypoints 3 and 6) / 5 m.
//   3 ego state entries, 1 bias.
namespace features {
inline constexpr int kVersion = 1;
inline constexpr int kSectors = 12;
inline constexpr int kGroups = 4;
inline constexpr int kBevFeatures = kSectors * kGroups;
inline constexpr int kCount = kBevFeatures + 4 + 2 + 3 + 1;

using Vector = std::array<double, kCount>;

// Sector of a grid cell, -1 outside every sector.
int sector_of(int row, int col);
// Number of cells in each sector.
const std::array<int, kSectors>& sector_sizes();
// Channel group of a BEV channel, -1 when the channel is not pooled.
int group_of(int channel);

Vector extract(const Observation& obs);
}  // namespace features

// Linear head over the feature map with tanh squashing:
// a_k = tanh(sum_j W[k][j] f_j).
class LearnablePolicy : public Policy {
 public:
  static constexpr int kParams = 2 * features::kCount;

  LearnablePolicy() : params_(kParams, 0.0) {}
  explicit LearnablePolicy(std::vector<double> params);

  PolicyOutput act(const Observation& obs) const override;
  PolicyOutput act_features(const features::Vector& f) const;
  std::string name() const override { return "learnable"; }

  const std::vector<double>& params() const { return params_; }
  double weight(int output, int feature) const { return params_[output * features::kCount + feature]; }

  // Lipschitz bound of the output (L2) with respect to the BEV tensor (L1),
  // exact for the feature map: sqrt(sum_k max_j (|W_kj| / N_sector(j))^2).
  double lipschitz_bound() const;

 private:
  std::vector<double> params_;
};

// Plain-text policy file: "bevbridge-policy", "features <version> <count>",
// "params <n>", then one parameter per line.
void write_policy(std::ostream& os, const LearnablePolicy& p);
LearnablePolicy read_policy(std::istream& is);
void save_policy_file(const std::string& path, const LearnablePolicy& p);
LearnablePolicy load_policy_file(const std::string& path);

// Built-in policies by name: pure_pursuit, pure_pursuit_detuned, random_jitter,
// zero; anything else is read as a policy file.
std::unique_ptr<Policy> make_policy(const std::string& name_or_path, const ActionLimits& limits,
                                    std::uint64_t seed = 0);

// Per-step reward stand-in.
struct RewardWeights {
  double progress = 1.0;
  double collision = 10.0;
  double lateral = 0.5;
  double overspeed = 0.5;
  double speed_limit = 15.0 / 3.6;  // m/s, overspeed measured above this
  // Caps that bound each term; lateral is capped by the lane-departure rule,
  // progress sits above the speed cap times the control period (0.75 m).
  double progress_cap = 1.0;
  double lateral_cap = 3.0;
  double overspeed_cap = 15.0 - 15.0 / 3.6;

  void validate() const;
  double r_max() const;
  // Lipschitz constant of the reward in the ego state (L2 over x, y, v):
  // progress differences two positions, lateral and overspeed are 1-Lipschitz.
  double lipschitz() const { return 2.0 * progress + lateral + overspeed; }
};

struct Transition {
  double progress = 0.0;   // m along the route this step
  bool collision = false;
  double lateral = 0.0;    // m from the route
  double speed = 0.0;      // m/s
};

double task_reward(const Transition& t, const RewardWeights& w = {});

// Throws std::invalid_argument unless gamma is in (0, 1).
double discounted_return(std::span<const double> rewards, double gamma);

}  // namespace bevbridge
