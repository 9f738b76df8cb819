#include "bevbridge/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <memory>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "bevbridge/csv.hpp"
#include "bevbridge/hashing.hpp"
#include "bevbridge/polyline.hpp"
#include "bevbridge/scenario.hpp"

namespace bevbridge {

namespace {

double l2(const PolicyOutput& a, const PolicyOutput& b) { return std::hypot(a.a1 - b.a1, a.a2 - b.a2); }

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<double> random_distribution(int n, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> p(n);
  double sum = 0.0;
  for (double& x : p) sum += (x = e(rng));
  for (double& x : p) x /= sum;
  return p;
}

void check_row(std::span<const double> row, std::size_t n, const char* what) {
  if (row.size() != n) throw std::invalid_argument(std::string(what) + ": wrong row length");
  double sum = 0.0;
  for (double x : row) {
    if (!std::isfinite(x) || x < 0.0) throw std::invalid_argument(std::string(what) + ": negative or non-finite entry");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument(std::string(what) + ": row does not sum to 1");
}

int sample_index(std::span<const double> p, double u) {
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(p.size()) - 1;
}

// p(a | s) = sum_o O(o | s) pi(a | o)
Matrix state_policy(const FinitePomdp& m, const ReactivePolicy& pi, ObsKernel kernel) {
  const Matrix& O = kernel == ObsKernel::a ? m.obs_a : m.obs_b;
  Matrix p(m.n_states, std::vector<double>(m.n_actions, 0.0));
  for (int s = 0; s < m.n_states; ++s)
    for (int o = 0; o < m.n_obs; ++o)
      for (int a = 0; a < m.n_actions; ++a) p[s][a] += O[s][o] * pi[o][a];
  return p;
}

void check_policy(const FinitePomdp& m, const ReactivePolicy& pi) {
  if (static_cast<int>(pi.size()) != m.n_obs) throw std::invalid_argument("policy needs one row per observation");
  for (const auto& row : pi) check_row(row, m.n_actions, "policy");
}

std::string fmt(double x) { return format_number(x, 6); }

Point2 advance_along_route(World& w, double fraction_max, std::uint64_t h) {
  const double s = unit_double(h) * fraction_max * polyline_length(w.route);
  const Point2 p = point_at(w.route, s);
  w.ego.x = p.x;
  w.ego.y = p.y;
  w.ego.psi = heading_at(w.route, s);
  return p;
}

}  // namespace

BoundReport make_bound_report(std::string check, std::string instance, double measured, double bound,
                              double tolerance) {
  BoundReport r;
  r.check = std::move(check);
  r.instance = std::move(instance);
  r.measured = measured;
  r.bound = bound;
  r.slack = bound - measured;
  r.violated = r.slack < -tolerance;
  return r;
}

std::vector<BoundSummary> summarize_reports(std::span<const BoundReport> rows) {
  std::vector<BoundSummary> out;
  std::vector<std::vector<double>> slacks;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const BoundSummary& s) { return s.check == r.check; });
    if (it == out.end()) {
      out.push_back({r.check, 0, 0, 0.0});
      slacks.emplace_back();
      it = out.end() - 1;
    }
    ++it->rows;
    it->violations += r.violated;
    slacks[static_cast<std::size_t>(it - out.begin())].push_back(r.slack);
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i].median_slack = median(slacks[i]);
  return out;
}

void write_bound_reports(std::ostream& os, std::span<const BoundReport> rows) {
  os << "check,instance,measured,bound,slack,violated\n";
  for (const auto& r : rows)
    write_csv_row(os, {r.check, r.instance, format_exact(r.measured), format_exact(r.bound), format_exact(r.slack),
                       r.violated ? "1" : "0"});
}

void write_bound_summary(std::ostream& os, std::span<const BoundSummary> rows) {
  for (const auto& s : rows)
    os << s.check << ": " << s.rows << " rows, " << s.violations << " violations, median slack "
       << format_number(s.median_slack, 6) << "\n";
}

// --- Lipschitz -------------------------------------------------------------

LipschitzEstimate estimate_lipschitz(const Policy& policy, const ObservationSampler& sampler, int n_samples,
                                     std::uint64_t seed, int max_bits) {
  if (n_samples < 1) throw std::invalid_argument("estimate_lipschitz needs at least one sample");
  if (max_bits < 2) throw std::invalid_argument("max_bits must be at least 2");
  struct Best {
    double ratio = 0.0;
    int bits = 0;
  };
  std::vector<Best> best(n_samples);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n_samples; ++i) {
    const auto idx = static_cast<std::uint64_t>(i);
    const Observation base = sampler(idx);
    const PolicyOutput y0 = policy.act(base);
    std::mt19937_64 rng(hash_combine(seed, idx));
    std::uniform_int_distribution<int> cell(0, kBevCells - 1), ch(0, kBevChannels - 1);
    std::uniform_int_distribution<int> count(2, max_bits);
    for (int bits : {1, count(rng)}) {
      Observation q = base;
      std::vector<std::size_t> flipped;
      while (static_cast<int>(flipped.size()) < bits) {
        const int r = cell(rng), c = cell(rng), h = ch(rng);
        const std::size_t key = BevTensor::index(r, c, h);
        if (std::find(flipped.begin(), flipped.end(), key) != flipped.end()) continue;
        flipped.push_back(key);
        q.bev.set(r, c, h, !q.bev.at(r, c, h));
      }
      const double ratio = l2(policy.act(q), y0) / bits;
      if (ratio > best[i].ratio) best[i] = {ratio, bits};
    }
  }
  LipschitzEstimate est;
  est.samples = static_cast<std::size_t>(n_samples) * 2;
  for (int i = 0; i < n_samples; ++i)
    if (best[i].ratio > est.l_hat) {
      est.l_hat = best[i].ratio;
      est.argmax_base = static_cast<std::uint64_t>(i);
      est.argmax_cells = best[i].bits;
    }
  return est;
}

ObservationSampler random_bev_sampler(std::uint64_t seed, double density) {
  if (!(density >= 0.0 && density <= 1.0)) throw std::invalid_argument("density must be in [0, 1]");
  return [seed, density](std::uint64_t index) {
    Observation o;
    const std::uint64_t h = hash_combine(seed, index);
    for (int r = 0; r < kBevCells; ++r)
      for (int c = 0; c < kBevCells; ++c)
        for (int ch = 0; ch < kBevChannels; ++ch) {
          const std::size_t i = BevTensor::index(r, c, ch);
          if (unit_double(hash_combine(h, i)) < density) o.bev.set(r, c, ch, true);
        }
    for (int k = 0; k < kNumWaypoints; ++k) o.waypoints[k] = {2.0 * (k + 1), 0.0};
    return o;
  };
}

CellSumPolicy::CellSumPolicy(double coefficient, int channel, double offset, Squash squash)
    : c_(coefficient), channel_(channel), offset_(offset), squash_(squash) {
  if (!std::isfinite(coefficient) || !std::isfinite(offset)) throw std::invalid_argument("cell_sum: non-finite");
  if (channel < 0 || channel >= kBevChannels) throw std::invalid_argument("cell_sum: channel out of range");
}

PolicyOutput CellSumPolicy::act(const Observation& obs) const {
  long n = 0;
  for (int r = 0; r < kBevCells; ++r)
    for (int c = 0; c < kBevCells; ++c) n += obs.bev.at(r, c, channel_);
  const double z = c_ * (static_cast<double>(n) - offset_);
  return {squash_ == Squash::linear ? std::clamp(z, -1.0, 1.0) : std::tanh(z), 0.0};
}

double CellSumPolicy::analytic_lipschitz() const { return std::abs(c_); }

double CellSumPolicy::slope_at(double count) const {
  const double z = c_ * (count - offset_);
  if (squash_ == Squash::linear) return std::abs(z) < 1.0 ? std::abs(c_) : 0.0;
  const double t = std::tanh(z);
  return std::abs(c_) * (1.0 - t * t);
}

// --- GOB bound -------------------------------------------------------------

ObservationPairGenerator gob_pair_generator(ScenarioSpec scenario, SegNoiseModel noise, std::uint64_t seed) {
  scenario.validate();
  CyclePipelineMode clean;
  clean.source = ObservationSource::gob_bev;
  clean.noise = SegNoiseModel{0.0, 0, 0};
  CyclePipelineMode noisy = clean;
  noisy.noise = noise;
  auto b_clean = std::make_shared<const ObservationBuilder>(clean);
  auto b_noisy = std::make_shared<const ObservationBuilder>(noisy);
  return [=](std::uint64_t i) {
    const std::uint64_t h = hash_combine(seed, i);
    World w = build_scenario(scenario, h);
    advance_along_route(w, 0.5, hash_combine(h, 1));
    return std::pair{b_clean->observe(w, 0, 0), b_noisy->observe(w, 0, hash_combine(h, 2))};
  };
}

GobBoundResult check_gob_bound(const Policy& policy, double l_pi, const ObservationPairGenerator& pairs, int n_pairs,
                               std::string instance) {
  if (n_pairs < 1) throw std::invalid_argument("check_gob_bound needs at least one pair");
  if (!(l_pi >= 0.0)) throw std::invalid_argument("l_pi must be >= 0");
  std::vector<double> dev(n_pairs), eps(n_pairs);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n_pairs; ++i) {
    const auto [a, b] = pairs(static_cast<std::uint64_t>(i));
    dev[i] = l2(policy.act(a), policy.act(b));
    eps[i] = l1_bev_distance(a.bev, b.bev);
  }
  GobBoundResult res;
  const double mean_dev = std::accumulate(dev.begin(), dev.end(), 0.0) / n_pairs;
  res.epsilon_hat = std::accumulate(eps.begin(), eps.end(), 0.0) / n_pairs;
  res.l_pi = l_pi;
  res.report = make_bound_report("gob", std::move(instance), mean_dev, l_pi * res.epsilon_hat);
  return res;
}

// --- PAM bound -------------------------------------------------------------

double simulate_tracking_error(const PamTrial& t, double dt) {
  if (!(dt > 0.0) || !(t.horizon >= 0.0) || !(t.eps_pid >= 0.0) || !(t.v >= 0.0))
    throw std::invalid_argument("simulate_tracking_error: invalid trial");
  const auto n = static_cast<long>(std::floor(t.horizon / dt + 1e-9));
  double x1 = 0, y1 = 0, p1 = 0, x2 = 0, y2 = 0, p2 = 0, worst = 0;
  for (long k = 0; k < n; ++k) {
    const double d = t.constant_sign
                         ? t.eps_pid
                         : (hash_combine(t.seed, static_cast<std::uint64_t>(k)) & 1 ? t.eps_pid : -t.eps_pid);
    x1 += t.v * std::cos(p1) * dt;
    y1 += t.v * std::sin(p1) * dt;
    p1 += t.v * t.kappa * dt;
    x2 += t.v * std::cos(p2) * dt;
    y2 += t.v * std::sin(p2) * dt;
    p2 += t.v * (t.kappa + d) * dt;
    worst = std::max(worst, std::hypot(x2 - x1, y2 - y1));
  }
  return worst;
}

double pam_bound(double v_max, double horizon, double eps_pid) { return v_max * v_max * horizon * horizon / 2.0 * eps_pid; }

namespace {

std::vector<BoundReport> pam_trials(const PlatformParams& theta, double v_max, int n_trials, std::uint64_t seed,
                                    double tolerance, const std::function<std::pair<double, double>(std::mt19937_64&)>& te) {
  if (!(v_max > 0.0)) throw std::invalid_argument("v_max must be > 0");
  if (n_trials < 1) throw std::invalid_argument("n_trials must be >= 1");
  std::vector<BoundReport> out(n_trials);
  const double kappa_max = std::tan(theta.delta_max) / theta.L;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n_trials; ++i) {
    std::mt19937_64 rng(hash_combine(seed, static_cast<std::uint64_t>(i)));
    const auto [horizon, eps] = te(rng);
    PamTrial t;
    t.horizon = horizon;
    t.eps_pid = eps;
    t.v = std::uniform_real_distribution<double>(0.0, v_max)(rng);
    // heading change of the intended path stays under 0.1 rad
    const double k_small = std::min(kappa_max, 0.1 / (v_max * std::max(horizon, 1e-9)));
    t.kappa = std::uniform_real_distribution<double>(-k_small, k_small)(rng);
    t.constant_sign = i % 2 == 0;
    t.seed = rng();
    const double measured = simulate_tracking_error(t);
    std::ostringstream inst;
    inst << "v=" << fmt(t.v) << " T=" << fmt(t.horizon) << " eps=" << fmt(t.eps_pid)
         << (t.constant_sign ? " constant" : " random");
    out[i] = make_bound_report("pam", inst.str(), measured, pam_bound(v_max, horizon, eps), tolerance);
  }
  return out;
}

}  // namespace

std::vector<BoundReport> check_pam_bound(const PlatformParams& theta, double v_max, double horizon, double eps_pid,
                                         int n_trials, std::uint64_t seed, double tolerance) {
  if (!(eps_pid >= 0.0) || !(horizon > 0.0)) throw std::invalid_argument("check_pam_bound: invalid T or eps_pid");
  return pam_trials(theta, v_max, n_trials, seed, tolerance,
                    [&](std::mt19937_64&) { return std::pair{horizon, eps_pid}; });
}

std::vector<BoundReport> pam_bound_sweep(const PlatformParams& theta, double v_max, double t_max, double eps_max,
                                         int n_trials, std::uint64_t seed, double tolerance) {
  if (!(t_max > 0.0) || !(eps_max >= 0.0)) throw std::invalid_argument("pam_bound_sweep: invalid ranges");
  return pam_trials(theta, v_max, n_trials, seed, tolerance, [&](std::mt19937_64& rng) {
    const double T = t_max * (1.0 - std::uniform_real_distribution<double>(0.0, 1.0)(rng));
    const double e = std::uniform_real_distribution<double>(0.0, eps_max)(rng);
    return std::pair{T, e};
  });
}

// --- POMDPs ----------------------------------------------------------------

void FinitePomdp::validate() const {
  if (n_states < 1 || n_actions < 1 || n_obs < 1) throw std::invalid_argument("pomdp: empty space");
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("pomdp: gamma must be in (0, 1)");
  if (!(r_max >= 0.0)) throw std::invalid_argument("pomdp: r_max must be >= 0");
  if (static_cast<int>(transition.size()) != n_states || static_cast<int>(obs_a.size()) != n_states ||
      static_cast<int>(obs_b.size()) != n_states || static_cast<int>(reward.size()) != n_states)
    throw std::invalid_argument("pomdp: tables need one entry per state");
  for (int s = 0; s < n_states; ++s) {
    if (static_cast<int>(transition[s].size()) != n_actions || static_cast<int>(reward[s].size()) != n_actions)
      throw std::invalid_argument("pomdp: tables need one entry per action");
    for (const auto& row : transition[s]) check_row(row, n_states, "transition");
    check_row(obs_a[s], n_obs, "obs_a");
    check_row(obs_b[s], n_obs, "obs_b");
    for (double r : reward[s])
      if (!std::isfinite(r) || std::abs(r) > r_max) throw std::invalid_argument("pomdp: |reward| exceeds r_max");
  }
  check_row(initial, n_states, "initial");
}

FinitePomdp random_pomdp(std::uint64_t seed, const RandomPomdpLimits& limits) {
  std::mt19937_64 rng(seed);
  auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  FinitePomdp m;
  m.n_states = uniform_int(1, limits.max_states);
  m.n_actions = uniform_int(1, limits.max_actions);
  m.n_obs = uniform_int(1, limits.max_obs);
  m.gamma = uniform(0.5, 0.95);
  m.r_max = uniform(0.5, 2.0);
  m.transition.assign(m.n_states, Matrix(m.n_actions));
  for (auto& per_action : m.transition)
    for (auto& row : per_action) row = random_distribution(m.n_states, rng);
  const double mix = uniform(0.0, 1.0);
  for (int s = 0; s < m.n_states; ++s) {
    m.obs_a.push_back(random_distribution(m.n_obs, rng));
    const auto q = random_distribution(m.n_obs, rng);
    std::vector<double> b(m.n_obs);
    double sum = 0.0;
    for (int o = 0; o < m.n_obs; ++o) sum += (b[o] = (1.0 - mix) * m.obs_a[s][o] + mix * q[o]);
    for (double& x : b) x /= sum;
    m.obs_b.push_back(std::move(b));
    std::vector<double> r(m.n_actions);
    for (double& x : r) x = uniform(-m.r_max, m.r_max);
    m.reward.push_back(std::move(r));
  }
  m.initial = random_distribution(m.n_states, rng);
  m.validate();
  return m;
}

ReactivePolicy random_reactive_policy(int n_obs, int n_actions, std::uint64_t seed) {
  if (n_obs < 1 || n_actions < 1) throw std::invalid_argument("random_reactive_policy: empty space");
  std::mt19937_64 rng(seed);
  ReactivePolicy pi;
  for (int o = 0; o < n_obs; ++o) pi.push_back(random_distribution(n_actions, rng));
  return pi;
}

ValueResult value_iteration(const FinitePomdp& m, const ReactivePolicy& pi, ObsKernel kernel) {
  m.validate();
  check_policy(m, pi);
  const Matrix p = state_policy(m, pi, kernel);
  const int n = m.n_states;
  Matrix P(n, std::vector<double>(n, 0.0));
  std::vector<double> r(n, 0.0);
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < m.n_actions; ++a) {
      r[s] += p[s][a] * m.reward[s][a];
      for (int t = 0; t < n; ++t) P[s][t] += p[s][a] * m.transition[s][a][t];
    }
  ValueResult res;
  res.v.assign(n, 0.0);
  std::vector<double> next(n);
  constexpr int kMaxIterations = 1000000;
  for (res.iterations = 0; res.iterations < kMaxIterations; ++res.iterations) {
    double residual = 0.0;
    for (int s = 0; s < n; ++s) {
      double acc = r[s];
      for (int t = 0; t < n; ++t) acc += m.gamma * P[s][t] * res.v[t];
      next[s] = acc;
      residual = std::max(residual, std::abs(acc - res.v[s]));
    }
    res.v.swap(next);
    res.residual = residual;
    if (residual <= 1e-12) break;
  }
  if (res.residual > 1e-12) throw std::runtime_error("value_iteration did not reach the residual target");
  res.j = 0.0;
  for (int s = 0; s < n; ++s) res.j += m.initial[s] * res.v[s];
  return res;
}

MonteCarloEstimate monte_carlo_return(const FinitePomdp& m, const ReactivePolicy& pi, ObsKernel kernel,
                                      std::size_t episodes, std::uint64_t seed) {
  m.validate();
  check_policy(m, pi);
  if (episodes < 2) throw std::invalid_argument("monte_carlo_return needs at least two episodes");
  const Matrix& O = kernel == ObsKernel::a ? m.obs_a : m.obs_b;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t e = 0; e < episodes; ++e) {
    int s = sample_index(m.initial, u(rng));
    double g = 0.0;
    while (true) {
      const int o = sample_index(O[s], u(rng));
      const int a = sample_index(pi[o], u(rng));
      g += m.reward[s][a];
      if (u(rng) >= m.gamma) break;
      s = sample_index(m.transition[s][a], u(rng));
    }
    sum += g;
    sum_sq += g * g;
  }
  const double n = static_cast<double>(episodes);
  MonteCarloEstimate est;
  est.episodes = episodes;
  est.mean = sum / n;
  const double var = std::max(0.0, (sum_sq - n * est.mean * est.mean) / (n - 1.0));
  est.std_error = std::sqrt(var / n);
  return est;
}

double tv_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size() || p.empty()) throw std::invalid_argument("tv_distance: size mismatch");
  double sp = 0.0, sq = 0.0, d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] >= 0.0) || !(q[i] >= 0.0)) throw std::invalid_argument("tv_distance: negative probability");
    sp += p[i];
    sq += q[i];
    d += std::abs(p[i] - q[i]);
  }
  if (std::abs(sp - 1.0) > 1e-9 || std::abs(sq - 1.0) > 1e-9)
    throw std::invalid_argument("tv_distance: inputs must sum to 1");
  return std::min(1.0, 0.5 * d);
}

double kernel_tv(const FinitePomdp& m) {
  double d = 0.0;
  for (int s = 0; s < m.n_states; ++s) d = std::max(d, tv_distance(m.obs_a[s], m.obs_b[s]));
  return d;
}

TvBoundResult check_tv_bound(const FinitePomdp& m, const ReactivePolicy& pi, std::string instance) {
  TvBoundResult res;
  res.j_a = value_iteration(m, pi, ObsKernel::a).j;
  res.j_b = value_iteration(m, pi, ObsKernel::b).j;
  res.d_tv = kernel_tv(m);
  const double bound = 2.0 * m.r_max * res.d_tv / ((1.0 - m.gamma) * (1.0 - m.gamma));
  res.report = make_bound_report("tv", std::move(instance), res.j_a - res.j_b, bound);
  res.tightness = bound > 0.0 ? std::abs(res.j_a - res.j_b) / bound : 0.0;
  return res;
}

void write_pomdp(std::ostream& os, const FinitePomdp& m) {
  m.validate();
  auto row = [&](std::span<const double> r) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? " " : "") << format_exact(r[i]);
    os << "\n";
  };
  os << "bevbridge-pomdp\n";
  os << "sizes " << m.n_states << " " << m.n_actions << " " << m.n_obs << "\n";
  os << "gamma " << format_exact(m.gamma) << "\n";
  os << "r_max " << format_exact(m.r_max) << "\n";
  os << "initial\n";
  row(m.initial);
  os << "transition\n";
  for (const auto& per_action : m.transition)
    for (const auto& r : per_action) row(r);
  os << "obs_a\n";
  for (const auto& r : m.obs_a) row(r);
  os << "obs_b\n";
  for (const auto& r : m.obs_b) row(r);
  os << "reward\n";
  for (const auto& r : m.reward) row(r);
}

FinitePomdp read_pomdp(std::istream& is) {
  auto expect = [&](const std::string& word) {
    std::string w;
    if (!(is >> w) || w != word) throw std::invalid_argument("pomdp file: expected '" + word + "'");
  };
  auto number = [&]() {
    std::string w;
    if (!(is >> w)) throw std::invalid_argument("pomdp file: truncated");
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(w, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != w.size()) throw std::invalid_argument("pomdp file: bad number '" + w + "'");
    return x;
  };
  auto read_row = [&](int n) {
    std::vector<double> r(n);
    for (double& x : r) x = number();
    return r;
  };
  FinitePomdp m;
  expect("bevbridge-pomdp");
  expect("sizes");
  m.n_states = static_cast<int>(number());
  m.n_actions = static_cast<int>(number());
  m.n_obs = static_cast<int>(number());
  if (m.n_states < 1 || m.n_actions < 1 || m.n_obs < 1 || m.n_states > 1000 || m.n_actions > 1000 || m.n_obs > 1000)
    throw std::invalid_argument("pomdp file: bad sizes");
  expect("gamma");
  m.gamma = number();
  expect("r_max");
  m.r_max = number();
  expect("initial");
  m.initial = read_row(m.n_states);
  expect("transition");
  m.transition.assign(m.n_states, Matrix(m.n_actions));
  for (auto& per_action : m.transition)
    for (auto& r : per_action) r = read_row(m.n_states);
  expect("obs_a");
  for (int s = 0; s < m.n_states; ++s) m.obs_a.push_back(read_row(m.n_obs));
  expect("obs_b");
  for (int s = 0; s < m.n_states; ++s) m.obs_b.push_back(read_row(m.n_obs));
  expect("reward");
  for (int s = 0; s < m.n_states; ++s) m.reward.push_back(read_row(m.n_actions));
  m.validate();
  return m;
}

// --- Curriculum ordering ---------------------------------------------------

namespace {

std::pair<std::vector<double>, std::vector<double>> triple_distances(std::span<const BevTensor> p1,
                                                                     std::span<const BevTensor> p2,
                                                                     std::span<const BevTensor> dep) {
  if (p1.empty()) throw std::invalid_argument("curriculum check needs samples");
  if (p1.size() != p2.size() || p1.size() != dep.size())
    throw std::invalid_argument("curriculum check needs scene-matched triples");
  std::vector<double> d1(p1.size()), d2(p1.size());
  for (std::size_t i = 0; i < p1.size(); ++i) {
    d1[i] = l1_bev_distance(p1[i], dep[i]);
    d2[i] = l1_bev_distance(p2[i], dep[i]);
  }
  return {d1, d2};
}

}  // namespace

BoundReport check_curriculum_ordering(std::span<const BevTensor> phase1, std::span<const BevTensor> phase2,
                                      std::span<const BevTensor> deploy, std::string instance) {
  const auto [d1, d2] = triple_distances(phase1, phase2, deploy);
  const double n = static_cast<double>(d1.size());
  return make_bound_report("curriculum", std::move(instance), std::accumulate(d2.begin(), d2.end(), 0.0) / n,
                           std::accumulate(d1.begin(), d1.end(), 0.0) / n, 0.0);
}

double curriculum_bootstrap(std::span<const BevTensor> phase1, std::span<const BevTensor> phase2,
                            std::span<const BevTensor> deploy, int resamples, std::uint64_t seed) {
  if (resamples < 1) throw std::invalid_argument("resamples must be >= 1");
  const auto [d1, d2] = triple_distances(phase1, phase2, deploy);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, d1.size() - 1);
  int holds = 0;
  for (int b = 0; b < resamples; ++b) {
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t k = 0; k < d1.size(); ++k) {
      const std::size_t j = pick(rng);
      s1 += d1[j];
      s2 += d2[j];
    }
    holds += s1 >= s2;
  }
  return static_cast<double>(holds) / resamples;
}

// --- Composed bound --------------------------------------------------------

std::vector<ComposedResult> composed_sweep(const ScenarioSpec& scenario, const Policy& policy, double l_pi,
                                           std::span<const ComposedKnobs> knobs, std::uint64_t seed,
                                           const ComposedSettings& settings) {
  scenario.validate();
  settings.reward.validate();
  if (!(l_pi >= 0.0) || !(settings.gamma > 0.0 && settings.gamma < 1.0) || settings.epsilon_stride < 1)
    throw std::invalid_argument("composed check: invalid settings");
  for (const auto& k : knobs)
    if (!(k.eps_pid >= 0.0)) throw std::invalid_argument("composed check: eps_pid must be >= 0");

  CyclePipelineMode ideal_mode;
  ideal_mode.source = ObservationSource::gob_bev;
  ideal_mode.noise = SegNoiseModel{0.0, 0, 0};
  ideal_mode.platform = ideal_mode.training_platform = settings.platform;
  const ObservationBuilder ideal(ideal_mode);
  const PlatformParams theta = platform_preset(settings.platform);
  SafetyLimits off;
  off.enabled = false;

  const World w0 = build_scenario(scenario, seed);
  EpisodeOptions opt;
  opt.seed = seed;
  opt.max_time = scenario.max_time;
  opt.gamma = settings.gamma;
  opt.reward = settings.reward;
  opt.record = false;

  // Episodes keyed by (flip_rate, jitter, eps_pid); equal keys are identical
  // runs, so single-knob and all-knob sweeps share them.
  struct Run {
    double ret = 0.0;
    double duration = 0.0;
    double eps = 0.0;
  };
  std::map<std::tuple<double, int, double>, Run> runs;
  auto run = [&](double flip, int jitter, double eps_pid) -> const Run& {
    const auto key = std::tuple{flip, jitter, eps_pid};
    if (auto it = runs.find(key); it != runs.end()) return it->second;
    CyclePipelineMode mode = ideal_mode;
    mode.noise = SegNoiseModel{flip, jitter, 0x5e9};
    const ObservationBuilder noisy(mode);
    const bool clean = flip == 0.0 && jitter == 0;
    double eps_sum = 0.0;
    int eps_n = 0;
    EpisodeOptions o = opt;
    if (!clean)
      o.on_cycle = [&](const World& w, std::uint64_t cycle) {
        if (cycle % static_cast<std::uint64_t>(settings.epsilon_stride) != 0) return;
        const std::uint64_t ns = hash_combine(seed, cycle);
        eps_sum += l1_bev_distance(ideal.bev(w, ns), noisy.bev(w, ns));
        ++eps_n;
      };
    World w = w0;
    w.actuator.kappa_disturbance = eps_pid;
    w.actuator.disturbance_constant_sign = true;
    const EpisodeResult r = run_episode(w, policy, clean ? ideal : noisy, theta, off, o);
    return runs[key] = Run{r.metrics.ret, r.metrics.duration, eps_n > 0 ? eps_sum / eps_n : 0.0};
  };

  std::vector<ComposedResult> out;
  for (const auto& k : knobs) {
    const Run r0 = run(0.0, 0, 0.0);
    const Run r1 = run(k.flip_rate, k.boundary_jitter, 0.0);
    const Run r2 = run(k.flip_rate, k.boundary_jitter, k.eps_pid);
    ComposedResult res;
    res.j_ideal = r0.ret;
    res.j_perceived = r1.ret;
    res.j_degraded = r2.ret;
    res.eps_seg = r2.eps;
    res.d_tv = res.eps_seg / static_cast<double>(kBevCells * kBevCells * kBevChannels);
    res.l_pi = l_pi;
    res.l_r = settings.reward.lipschitz();
    res.r_max = settings.reward.r_max();
    res.v_max = ideal.limits().v_max;
    res.horizon = std::max({r0.duration, r1.duration, r2.duration});
    res.gamma = settings.gamma;
    const double g1 = 1.0 - settings.gamma;
    res.gob_term = res.l_r * res.l_pi * res.eps_seg / g1;
    res.pam_term = res.l_r * pam_bound(res.v_max, res.horizon, k.eps_pid) / g1;
    res.tpt_term = 2.0 * res.r_max * res.d_tv / (g1 * g1);
    std::ostringstream inst;
    inst << scenario_name(scenario.id) << " seed=" << seed << " flip=" << fmt(k.flip_rate)
         << " jitter=" << k.boundary_jitter << " eps_pid=" << fmt(k.eps_pid);
    const double gap = res.j_ideal - res.j_degraded;
    res.report = make_bound_report("composed", inst.str(), gap, res.gob_term + res.pam_term + res.tpt_term);
    res.looseness = gap > 0.0 ? res.report.bound / gap : 0.0;
    out.push_back(std::move(res));
  }
  return out;
}

ComposedResult check_composed_bound(const ScenarioSpec& scenario, const Policy& policy, double l_pi,
                                    const ComposedKnobs& knobs, std::uint64_t seed, const ComposedSettings& settings) {
  return composed_sweep(scenario, policy, l_pi, std::span<const ComposedKnobs>(&knobs, 1), seed, settings).front();
}

LearnablePolicy composed_reference_policy() {
  using namespace features;
  const PlatformParams p = carla_default_platform();
  const double kappa_max = std::tan(p.delta_max) / p.L;
  std::vector<double> w(LearnablePolicy::kParams, 0.0);
  auto W = [&](int out, int feature) -> double& { return w[static_cast<std::size_t>(out) * kCount + feature]; };
  // steering: pure pursuit toward the 8 m waypoint, kappa ~ bearing / 4
  W(0, kBevFeatures + 1) = 0.25 / kappa_max;
  // speed: about 3.4 m/s on a clear road, slower with objects straight ahead
  W(1, kCount - 1) = -0.3;
  for (int s : {2, 3}) W(1, kSectors + s) = -3.0;
  for (int s : {8, 9}) W(1, kSectors + s) = -1.5;
  return LearnablePolicy(w);
}

}  // namespace bevbridge
