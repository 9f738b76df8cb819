#include "bevbridge/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

#include "bevbridge/csv.hpp"
#include "bevbridge/hashing.hpp"
#include "bevbridge/polyline.hpp"
#include "bevbridge/scenario.hpp"

namespace bevbridge {

namespace {

constexpr std::uint64_t kTagMember = 0x6d656d;
constexpr std::uint64_t kTagEpisode = 0x657069;
constexpr std::uint64_t kTagScene = 0x736365;

struct Generation {
  std::vector<std::vector<double>> members;
  std::vector<double> fitness;
};

std::vector<double> sample_member(const std::vector<double>& mean, const std::vector<double>& sigma,
                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> x(mean.size());
  for (std::size_t j = 0; j < mean.size(); ++j) x[j] = mean[j] + sigma[j] * n(rng);
  return x;
}

double member_fitness(const std::vector<double>& params, std::span<const ScenarioSpec> scenarios,
                      const CyclePipelineMode& mode, const CurriculumConfig& cfg, std::uint64_t gen_seed) {
  const LearnablePolicy policy(params);
  SafetyLimits off;
  off.enabled = false;
  double total = 0.0;
  for (int e = 0; e < cfg.trainer.episodes_per_member; ++e) {
    ScenarioSpec spec = scenarios[static_cast<std::size_t>(e) % scenarios.size()];
    spec.max_time = cfg.trainer.episode_time;
    EpisodeOptions opt;
    opt.seed = hash_combine(gen_seed, kTagEpisode, static_cast<std::uint64_t>(e));
    opt.reward = cfg.reward;
    opt.record = false;
    total += run_episode(spec, policy, mode, off, opt).metrics.ret;
  }
  return total / cfg.trainer.episodes_per_member;
}

// Runs CEM generations in place on (mean, sigma).
void run_phase(int phase, int generations, double obs_epsilon, std::vector<double>& mean,
               std::vector<double>& sigma, std::span<const ScenarioSpec> scenarios,
               const CyclePipelineMode& mode, const CurriculumConfig& cfg, std::vector<TrainingRow>& report) {
  const TrainerSettings& t = cfg.trainer;
  const int n_elite = std::max(1, static_cast<int>(std::ceil(t.elite_fraction * t.population)));
  double extra = t.extra_noise * (phase == 1 ? 1.0 : t.phase2_sigma_scale);
  for (int g = 0; g < generations; ++g) {
    const std::uint64_t gen_seed =
        hash_combine(hash_combine(t.seed, static_cast<std::uint64_t>(phase)), static_cast<std::uint64_t>(g));
    Generation gen;
    gen.members.resize(t.population);
    gen.fitness.resize(t.population);
    for (int i = 0; i < t.population; ++i)
      gen.members[i] = sample_member(mean, sigma, hash_combine(gen_seed, kTagMember, static_cast<std::uint64_t>(i)));
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < t.population; ++i)
      gen.fitness[i] = member_fitness(gen.members[i], scenarios, mode, cfg, gen_seed);

    std::vector<int> order(t.population);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return gen.fitness[a] > gen.fitness[b]; });

    TrainingRow row;
    row.phase = phase;
    row.generation = g;
    row.mean_return = std::accumulate(gen.fitness.begin(), gen.fitness.end(), 0.0) / t.population;
    row.best_return = gen.fitness[order[0]];
    row.obs_epsilon = obs_epsilon;
    report.push_back(row);

    for (std::size_t j = 0; j < mean.size(); ++j) {
      double m = 0.0;
      for (int k = 0; k < n_elite; ++k) m += gen.members[order[k]][j];
      m /= n_elite;
      double v = 0.0;
      for (int k = 0; k < n_elite; ++k) v += std::pow(gen.members[order[k]][j] - m, 2);
      mean[j] = m;
      sigma[j] = std::sqrt(v / n_elite) + extra;
    }
    extra *= t.noise_decay;
  }
}

}  // namespace

void TrainerSettings::validate() const {
  if (population < 2) throw std::invalid_argument("population must be at least 2");
  if (!(elite_fraction > 0.0 && elite_fraction <= 1.0)) throw std::invalid_argument("elite_fraction must be in (0, 1]");
  if (!(sigma0 > 0.0) || !(extra_noise >= 0.0) || !(noise_decay > 0.0 && noise_decay <= 1.0))
    throw std::invalid_argument("invalid sampling noise settings");
  if (!(phase2_sigma_scale > 0.0 && phase2_sigma_scale <= 1.0))
    throw std::invalid_argument("phase2_sigma_scale must be in (0, 1]");
  if (episodes_per_member < 1) throw std::invalid_argument("episodes_per_member must be positive");
  if (!(episode_time > 0.0)) throw std::invalid_argument("episode_time must be positive");
}

void CurriculumConfig::validate() const {
  if (phase1_episodes <= 0) throw std::invalid_argument("phase1_episodes must be positive");
  if (phase2_episodes < 0) throw std::invalid_argument("phase2_episodes must be non-negative");
  if (curriculum_samples < 1) throw std::invalid_argument("curriculum_samples must be positive");
  phase2_noise.validate();
  deploy_noise.validate();
  platform_preset(training_platform);
  trainer.validate();
  reward.validate();
}

int CurriculumConfig::generations(int episodes) const {
  const int per_gen = trainer.population * trainer.episodes_per_member;
  return (episodes + per_gen - 1) / per_gen;
}

CurriculumSamples sample_curriculum(const CurriculumConfig& config, std::span<const ScenarioSpec> scenarios) {
  if (scenarios.empty()) throw std::invalid_argument("no training scenarios");
  CyclePipelineMode gt;
  gt.training_platform = gt.platform = config.training_platform;
  CyclePipelineMode phase2 = gt;
  phase2.source = ObservationSource::gob_bev;
  phase2.noise = config.phase2_noise;
  CyclePipelineMode deploy = phase2;
  deploy.noise = config.deploy_noise;
  const ObservationBuilder b_gt(gt), b_phase2(phase2), b_deploy(deploy);

  const int n = config.curriculum_samples;
  CurriculumSamples out;
  out.phase1.resize(n);
  out.phase2.resize(n);
  out.deploy.resize(n);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    const std::uint64_t h = hash_combine(config.trainer.seed, kTagScene, static_cast<std::uint64_t>(i));
    const ScenarioSpec& spec = scenarios[static_cast<std::size_t>(i) % scenarios.size()];
    World w = build_scenario(spec, h);
    // spread samples over the first half of the route
    const double s = unit_double(hash_combine(h, 1)) * 0.5 * polyline_length(w.route);
    const Point2 p = point_at(w.route, s);
    w.ego.x = p.x;
    w.ego.y = p.y;
    w.ego.psi = heading_at(w.route, s);
    out.deploy[i] = b_deploy.bev(w, hash_combine(h, 2));
    out.phase1[i] = b_gt.bev(w, 0);
    out.phase2[i] = b_phase2.bev(w, hash_combine(h, 3));
  }
  return out;
}

CurriculumCheck measure_curriculum_samples(const CurriculumSamples& samples) {
  const std::size_t n = samples.deploy.size();
  if (n == 0 || samples.phase1.size() != n || samples.phase2.size() != n)
    throw std::invalid_argument("curriculum samples must be non-empty and matched");
  CurriculumCheck c;
  for (std::size_t i = 0; i < n; ++i) {
    c.phase1_epsilon += l1_bev_distance(samples.phase1[i], samples.deploy[i]);
    c.phase2_epsilon += l1_bev_distance(samples.phase2[i], samples.deploy[i]);
  }
  c.phase1_epsilon /= static_cast<double>(n);
  c.phase2_epsilon /= static_cast<double>(n);
  c.samples = n;
  return c;
}

CurriculumCheck measure_curriculum(const CurriculumConfig& config, std::span<const ScenarioSpec> scenarios) {
  return measure_curriculum_samples(sample_curriculum(config, scenarios));
}

TrainingResult train_tpt(const CurriculumConfig& config, std::span<const ScenarioSpec> scenarios) {
  config.validate();
  if (scenarios.empty()) throw std::invalid_argument("no training scenarios");
  for (const auto& s : scenarios) s.validate();

  TrainingResult out;
  out.r_max = config.reward.r_max();
  out.curriculum = measure_curriculum(config, scenarios);
  if (!out.curriculum.holds())
    throw std::logic_error("curriculum ordering violated: phase 2 observations are further from deployment");

  CyclePipelineMode gt;
  gt.platform = gt.training_platform = config.training_platform;
  CyclePipelineMode gob = gt;
  gob.source = ObservationSource::gob_bev;
  gob.noise = config.phase2_noise;

  std::vector<double> mean(LearnablePolicy::kParams, 0.0);
  std::vector<double> sigma(LearnablePolicy::kParams, config.trainer.sigma0);
  run_phase(1, config.generations(config.phase1_episodes), out.curriculum.phase1_epsilon, mean, sigma, scenarios, gt,
            config, out.report);
  out.phase1_policy = LearnablePolicy(mean);
  if (config.phase2_episodes > 0) {
    // warm start from the Phase 1 mean with reduced exploration
    std::fill(sigma.begin(), sigma.end(), config.trainer.sigma0 * config.trainer.phase2_sigma_scale);
    run_phase(2, config.generations(config.phase2_episodes), out.curriculum.phase2_epsilon, mean, sigma, scenarios,
              gob, config, out.report);
  }
  out.policy = LearnablePolicy(mean);
  return out;
}

void write_training_csv(std::ostream& os, std::span<const TrainingRow> rows) {
  os << "phase,generation,mean_return,best_return,obs_epsilon\n";
  for (const auto& r : rows)
    write_csv_row(os, {std::to_string(r.phase), std::to_string(r.generation), format_exact(r.mean_return),
                       format_exact(r.best_return), format_exact(r.obs_epsilon)});
}

}  // namespace bevbridge
