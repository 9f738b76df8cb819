#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "bevbridge/pipeline.hpp"

namespace bevbridge {

// Cross-entropy method over the learnable policy's parameters.
struct TrainerSettings {
  int population = 32;
  double elite_fraction = 0.25;
  double sigma0 = 0.5;          // initial sampling standard deviation
  double extra_noise = 0.2;     // added to the elite spread, decays per generation
  double noise_decay = 0.8;
  double phase2_sigma_scale = 0.3;  // Phase 2 starts from sigma0 * scale
  int episodes_per_member = 1;
  double episode_time = 15.0;   // s
  std::uint64_t seed = 1;

  void validate() const;
};

// Phase 1 trains on ground-truth BEV, Phase 2 on the deployment pipeline
// (render, corrupt, back-project, encode). Episode counts are budgets; each
// generation spends population * episodes_per_member episodes.
struct CurriculumConfig {
  int phase1_episodes = 320;
  int phase2_episodes = 64;     // 0 returns the Phase 1 policy
  SegNoiseModel phase2_noise{0.02, 1, 0x7032};
  SegNoiseModel deploy_noise{0.02, 1, 0xde91};
  std::string training_platform = "carla-default";
  TrainerSettings trainer;
  RewardWeights reward;
  int curriculum_samples = 16;  // scene-matched triples for the ordering check

  void validate() const;
  int generations(int episodes) const;
};

struct TrainingRow {
  int phase = 1;
  int generation = 0;
  double mean_return = 0.0;
  double best_return = 0.0;
  double obs_epsilon = 0.0;  // mean L1 of this phase's observations vs deployment
};

struct CurriculumCheck {
  double phase1_epsilon = 0.0;
  double phase2_epsilon = 0.0;
  std::size_t samples = 0;
  bool holds() const { return phase1_epsilon >= phase2_epsilon; }
};

struct TrainingResult {
  LearnablePolicy policy;
  LearnablePolicy phase1_policy;
  std::vector<TrainingRow> report;
  CurriculumCheck curriculum;
  double r_max = 0.0;
};

// Mean L1 between GT-BEV / Phase 2 GOB-BEV and deployment GOB-BEV on
// scene-matched samples. Deployment noise uses independent draws.
CurriculumCheck measure_curriculum(const CurriculumConfig& config, std::span<const ScenarioSpec> scenarios);

// The scene-matched observations behind measure_curriculum.
struct CurriculumSamples {
  std::vector<BevTensor> phase1;
  std::vector<BevTensor> phase2;
  std::vector<BevTensor> deploy;
};
CurriculumSamples sample_curriculum(const CurriculumConfig& config, std::span<const ScenarioSpec> scenarios);
CurriculumCheck measure_curriculum_samples(const CurriculumSamples& samples);

// Two-phase training. Throws std::invalid_argument for an invalid config or an
// empty scenario list, std::logic_error when the curriculum ordering fails.
// Bit-identical for a fixed seed regardless of thread count.
TrainingResult train_tpt(const CurriculumConfig& config, std::span<const ScenarioSpec> scenarios);

void write_training_csv(std::ostream& os, std::span<const TrainingRow> rows);

}  // namespace bevbridge
