#include <benchmark/benchmark.h>

#include "bevbridge/geometry.hpp"
#include "bevbridge/perception.hpp"
#include "bevbridge/pipeline.hpp"
#include "bevbridge/scenario.hpp"
#include "bevbridge/worldsim.hpp"

using namespace bevbridge;

namespace {

const World& scene() {
  static const World w = build_scenario(default_scenario(ScenarioId::obstacle_avoidance), 3);
  return w;
}

const CameraCalibration& camera() {
  static const CameraCalibration c = ObservationBuilder::default_camera();
  return c;
}

const SemanticImage& front_view() {
  static const SemanticImage img = render_front_view(scene(), camera());
  return img;
}

SegNoiseModel noise() { return SegNoiseModel{0.05, 1, 7}; }

void BM_ipm_project(benchmark::State& state) {
  const BevGridSpec grid;
  for (auto _ : state) benchmark::DoNotOptimize(ipm_project(front_view(), camera(), grid));
}
void BM_ipm_project_serial(benchmark::State& state) {
  const BevGridSpec grid;
  for (auto _ : state) benchmark::DoNotOptimize(reference::ipm_project(front_view(), camera(), grid));
}

void BM_corrupt(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(corrupt(front_view(), noise()));
}
void BM_corrupt_serial(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(reference::corrupt(front_view(), noise()));
}

void BM_l1_bev_distance(benchmark::State& state) {
  const BevTensor a = render_gt_bev(scene(), BevGridSpec{});
  const BevTensor b = encode(ipm_project(corrupt(front_view(), noise()), camera(), BevGridSpec{}));
  for (auto _ : state) benchmark::DoNotOptimize(l1_bev_distance(a, b));
}
void BM_l1_bev_distance_serial(benchmark::State& state) {
  const BevTensor a = render_gt_bev(scene(), BevGridSpec{});
  const BevTensor b = encode(ipm_project(corrupt(front_view(), noise()), camera(), BevGridSpec{}));
  for (auto _ : state) benchmark::DoNotOptimize(reference::l1_bev_distance(a, b));
}

void BM_render_gt_labels(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(render_gt_labels(scene(), BevGridSpec{}));
}
void BM_render_gt_labels_serial(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(reference::render_gt_labels(scene(), BevGridSpec{}));
}

void BM_render_front_view(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(render_front_view(scene(), camera()));
}
void BM_render_front_view_serial(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(reference::render_front_view(scene(), camera()));
}

}  // namespace

BENCHMARK(BM_ipm_project)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ipm_project_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_corrupt)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_corrupt_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_l1_bev_distance)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_l1_bev_distance_serial)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_render_gt_labels)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_render_gt_labels_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_render_front_view)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_render_front_view_serial)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
