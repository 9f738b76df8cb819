#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bevbridge/pipeline.hpp"

namespace bevbridge {

struct BoundReport {
  std::string check;
  std::string instance;
  double measured = 0.0;
  double bound = 0.0;
  double slack = 0.0;  // bound - measured
  bool violated = false;
};

// violated = slack < -tolerance.
BoundReport make_bound_report(std::string check, std::string instance, double measured, double bound,
                              double tolerance = 1e-9);

struct BoundSummary {
  std::string check;
  std::size_t rows = 0;
  std::size_t violations = 0;
  double median_slack = 0.0;
};

// One summary per check name, in order of first appearance.
std::vector<BoundSummary> summarize_reports(std::span<const BoundReport> rows);
void write_bound_reports(std::ostream& os, std::span<const BoundReport> rows);
void write_bound_summary(std::ostream& os, std::span<const BoundSummary> rows);

// --- Lipschitz estimation ---------------------------------------------------

using ObservationSampler = std::function<Observation(std::uint64_t index)>;

struct LipschitzEstimate {
  double l_hat = 0.0;
  std::size_t samples = 0;        // perturbation pairs evaluated
  std::uint64_t argmax_base = 0;  // sampler index of the maximizing pair
  int argmax_cells = 0;           // flipped bits in the maximizing pair
};

// For each base observation: one single-bit flip and one flip of 2..max_bits
// random bits. Returns the largest ||d output||_2 / ||d bev||_1.
LipschitzEstimate estimate_lipschitz(const Policy& policy, const ObservationSampler& sampler, int n_samples,
                                     std::uint64_t seed, int max_bits = 64);

// Observations with random BEV occupancy (density p) and straight waypoints.
ObservationSampler random_bev_sampler(std::uint64_t seed, double density = 0.1);

// a1 = squash(c (n - offset)), a2 = 0, where n counts the set cells of one
// channel. linear squash clamps to [-1, 1].
class CellSumPolicy : public Policy {
 public:
  enum class Squash : std::uint8_t { linear, tanh };
  CellSumPolicy(double coefficient, int channel, double offset = 0.0, Squash squash = Squash::linear);
  PolicyOutput act(const Observation& obs) const override;
  std::string name() const override { return "cell_sum"; }
  double analytic_lipschitz() const;  // |c|
  // d a1 / d n at a channel count (|c| sech^2 for tanh, |c| or 0 for linear).
  double slope_at(double count) const;

 private:
  double c_;
  int channel_;
  double offset_;
  Squash squash_;
};

// --- GOB perceptual bound ---------------------------------------------------

using ObservationPairGenerator = std::function<std::pair<Observation, Observation>(std::uint64_t index)>;

// Scene i of the scenario with the ego advanced along the route: noise-free
// GOB observation vs the same scene through the noisy pipeline.
ObservationPairGenerator gob_pair_generator(ScenarioSpec scenario, SegNoiseModel noise, std::uint64_t seed);

struct GobBoundResult {
  BoundReport report;
  double epsilon_hat = 0.0;  // mean L1 between the pair members
  double l_pi = 0.0;
};

// measured = mean ||pi(a) - pi(b)||_2, bound = l_pi * mean ||a - b||_1.
GobBoundResult check_gob_bound(const Policy& policy, double l_pi, const ObservationPairGenerator& pairs, int n_pairs,
                               std::string instance = "");

// --- PAM lateral tracking bound ---------------------------------------------

struct PamTrial {
  double v = 0.0;        // m/s, constant
  double horizon = 1.0;  // s
  double eps_pid = 0.0;  // |d kappa| per step
  double kappa = 0.0;    // intended curvature
  bool constant_sign = true;
  std::uint64_t seed = 0;  // random-sign draws
};

inline constexpr double kPamDt = 0.005;

// Integrates intended and executed unicycle paths (explicit Euler) and
// returns the largest position gap over the horizon.
double simulate_tracking_error(const PamTrial& trial, double dt = kPamDt);
double pam_bound(double v_max, double horizon, double eps_pid);

// Fixed (T, eps_pid); speeds uniform in [0, v_max], intended curvature in the
// small-angle regime of theta, alternating constant- and random-sign trials.
std::vector<BoundReport> check_pam_bound(const PlatformParams& theta, double v_max, double horizon, double eps_pid,
                                         int n_trials, std::uint64_t seed, double tolerance = 1e-6);
// Also randomizes T in (0, t_max] and eps_pid in [0, eps_max] per trial.
std::vector<BoundReport> pam_bound_sweep(const PlatformParams& theta, double v_max, double t_max, double eps_max,
                                         int n_trials, std::uint64_t seed, double tolerance = 1e-6);

// --- Finite POMDPs and the TV bound -----------------------------------------

using Matrix = std::vector<std::vector<double>>;

struct FinitePomdp {
  int n_states = 1;
  int n_actions = 1;
  int n_obs = 1;
  std::vector<Matrix> transition;  // [s][a][s']
  Matrix obs_a;                    // [s][o]
  Matrix obs_b;                    // [s][o]
  Matrix reward;                   // [s][a]
  double gamma = 0.9;
  double r_max = 1.0;
  std::vector<double> initial;

  // Throws std::invalid_argument for shape errors, rows off 1 by more than
  // 1e-12, negative entries, |r| > r_max or gamma outside (0, 1).
  void validate() const;
};

enum class ObsKernel : std::uint8_t { a, b };

// Memoryless policy: [o][a].
using ReactivePolicy = Matrix;

struct RandomPomdpLimits {
  int max_states = 6;
  int max_actions = 3;
  int max_obs = 4;
};

FinitePomdp random_pomdp(std::uint64_t seed, const RandomPomdpLimits& limits = {});
ReactivePolicy random_reactive_policy(int n_obs, int n_actions, std::uint64_t seed);

struct ValueResult {
  double j = 0.0;
  std::vector<double> v;
  double residual = 0.0;
  int iterations = 0;
};

// Fixed point of V = r_pi + gamma P_pi V under the observation-marginalized
// policy, iterated until the sup-norm residual is at most 1e-12.
ValueResult value_iteration(const FinitePomdp& m, const ReactivePolicy& pi, ObsKernel kernel);

struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t episodes = 0;
};

// Unbiased rollout estimate: each episode sums undiscounted rewards until a
// geometric stopping time with continuation probability gamma.
MonteCarloEstimate monte_carlo_return(const FinitePomdp& m, const ReactivePolicy& pi, ObsKernel kernel,
                                      std::size_t episodes, std::uint64_t seed);

// Half the L1 distance; throws for mismatched sizes or non-distributions.
double tv_distance(std::span<const double> p, std::span<const double> q);
// max over states of tv(O_a(s), O_b(s)).
double kernel_tv(const FinitePomdp& m);

struct TvBoundResult {
  BoundReport report;  // measured = J_a - J_b
  double j_a = 0.0;
  double j_b = 0.0;
  double d_tv = 0.0;
  double tightness = 0.0;  // |J_a - J_b| / bound, 0 when the bound is 0
};

TvBoundResult check_tv_bound(const FinitePomdp& m, const ReactivePolicy& pi, std::string instance = "");

void write_pomdp(std::ostream& os, const FinitePomdp& m);
FinitePomdp read_pomdp(std::istream& is);

// --- Curriculum ordering ----------------------------------------------------

// Mean-L1 proxy for the TV distance on scene-matched triples:
// bound = mean L1(phase1, deploy), measured = mean L1(phase2, deploy).
BoundReport check_curriculum_ordering(std::span<const BevTensor> phase1, std::span<const BevTensor> phase2,
                                      std::span<const BevTensor> deploy, std::string instance = "");
// Fraction of bootstrap resamples (over triples) in which the ordering holds.
double curriculum_bootstrap(std::span<const BevTensor> phase1, std::span<const BevTensor> phase2,
                            std::span<const BevTensor> deploy, int resamples, std::uint64_t seed);

// --- Composed transfer bound ------------------------------------------------

struct ComposedKnobs {
  double flip_rate = 0.0;   // segmentation label flips of the degraded run
  int boundary_jitter = 0;  // pixels
  double eps_pid = 0.0;     // curvature bias of the degraded run, 1/m
};

struct ComposedResult {
  double j_ideal = 0.0;     // r^(0): noise-free GOB, commanded curvature
  double j_perceived = 0.0; // r^(1): noisy GOB, commanded curvature
  double j_degraded = 0.0;  // r^(2): noisy GOB, disturbed curvature
  double eps_seg = 0.0;     // mean L1 between ideal and noisy BEV along the degraded run
  double d_tv = 0.0;        // eps_seg over the BEV bit count (TV proxy)
  double l_pi = 0.0;
  double l_r = 0.0;
  double r_max = 0.0;
  double v_max = 0.0;
  double horizon = 0.0;     // s, longest of the runs
  double gamma = 0.0;
  double gob_term = 0.0;
  double pam_term = 0.0;
  double tpt_term = 0.0;
  BoundReport report;       // measured = j_ideal - j_degraded, bound = sum of terms
  double looseness = 0.0;   // bound / measured gap, 0 when the gap is <= 0
};

struct ComposedSettings {
  double gamma = 0.99;
  RewardWeights reward;
  int epsilon_stride = 10;  // cycles between eps_seg samples
  std::string platform = "carla-default";
};

// Three matched-seed episodes with the safety layer off. l_pi is the
// policy's Lipschitz constant (BEV L1 to output L2).
ComposedResult check_composed_bound(const ScenarioSpec& scenario, const Policy& policy, double l_pi,
                                    const ComposedKnobs& knobs, std::uint64_t seed,
                                    const ComposedSettings& settings = {});

// Several knob settings on one seed; episodes with equal knobs are run once.
std::vector<ComposedResult> composed_sweep(const ScenarioSpec& scenario, const Policy& policy, double l_pi,
                                           std::span<const ComposedKnobs> knobs, std::uint64_t seed,
                                           const ComposedSettings& settings = {});

// Learnable policy that tracks the waypoints and slows for objects ahead;
// used as the policy under test in composed checks.
LearnablePolicy composed_reference_policy();

}  // namespace bevbridge
