#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <utility>

#include "bevbridge/geometry.hpp"

using namespace bevbridge;

namespace {

double deg(double d) { return d * std::numbers::pi / 180.0; }

// Zero pitch and roll reduce the pinhole model to two closed-form ratios.
PixelCoord direct_pinhole(const CameraCalibration& c, double x, double y) {
  return {c.cx - c.fx * y / x, c.cy + c.fy * c.h / x};
}

}  // namespace

TEST(Geometry, StraightAheadProjectsOntoPrincipalColumn) {
  CameraCalibration c;
  for (double d : {5.0, 17.5, 40.0}) {
    auto px = ground_to_pixel({d, 0.0}, c);
    ASSERT_TRUE(px);
    EXPECT_NEAR(px->u, c.cx, 1e-12);
  }
}

TEST(Geometry, BehindCameraIsOutOfView) {
  CameraCalibration c;
  EXPECT_FALSE(ground_to_pixel({0.0, 0.0}, c));
  EXPECT_FALSE(ground_to_pixel({-3.0, 1.0}, c));
}

TEST(Geometry, WorkedForwardExample) {
  CameraCalibration c;  // fx=fy=500, cx=320, cy=240, h=1.7
  auto px = ground_to_pixel({10.0, 0.0}, c);
  ASSERT_TRUE(px);
  EXPECT_NEAR(px->v, 240.0 + 500.0 * 1.7 / 10.0, 1e-12);
  EXPECT_NEAR(px->v, 325.0, 1e-12);
}

TEST(Geometry, WorkedInverseExample) {
  CameraCalibration c;
  auto g = pixel_to_ground({320.0, 325.0}, c);
  ASSERT_TRUE(g);
  EXPECT_NEAR(g->x, 10.0, 1e-12);
  EXPECT_NEAR(g->y, 0.0, 1e-12);
}

TEST(Geometry, HorizonRowHasNoIntersection) {
  CameraCalibration c;
  EXPECT_FALSE(pixel_to_ground({100.0, c.cy}, c));
  EXPECT_FALSE(pixel_to_ground({320.0, c.cy - 50.0}, c));
}

TEST(Geometry, MatchesClosedFormAtZeroPitch) {
  CameraCalibration c;
  const PinholeCamera cam(c);
  for (double x = 1.0; x < 30.0; x += 0.7)
    for (double y = -8.0; y <= 8.0; y += 0.9) {
      auto px = cam.project_unbounded({x, y});
      ASSERT_TRUE(px);
      const PixelCoord ref = direct_pinhole(c, x, y);
      EXPECT_NEAR(px->u, ref.u, 1e-9);
      EXPECT_NEAR(px->v, ref.v, 1e-9);
    }
}

TEST(Geometry, RowDecreasesWithDistanceAtZeroPitch) {
  CameraCalibration c;
  const PinholeCamera cam(c);
  double prev = std::numeric_limits<double>::infinity();
  for (double x = 1.0; x < 200.0; x *= 1.1) {
    auto px = cam.project_unbounded({x, 0.0});
    ASSERT_TRUE(px);
    EXPECT_LT(px->v, prev);
    EXPECT_GT(px->v, c.cy);
    prev = px->v;
  }
}

TEST(Geometry, RoundTripWithPitchAndRoll) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ux(0.5, 40.0), uy(-15.0, 15.0);
  for (const auto& [a, b] : {std::pair{0.0, 0.0}, {deg(8.0), 0.0}, {deg(12.0), deg(3.0)},
                            {deg(-2.0), deg(-4.0)}}) {
    CameraCalibration c = CameraCalibration::from_horizontal_fov(640, 360, deg(110), 1.5, a, b);
    const PinholeCamera cam(c);
    int checked = 0;
    for (int i = 0; i < 5000; ++i) {
      const GroundPoint p{ux(rng), uy(rng)};
      auto px = cam.project(p);
      if (!px) continue;
      auto g = cam.back_project(*px);
      ASSERT_TRUE(g);
      EXPECT_NEAR(g->x, p.x, 1e-9);
      EXPECT_NEAR(g->y, p.y, 1e-9);
      ++checked;
    }
    EXPECT_GT(checked, 500);
  }
}

TEST(Geometry, CalibrationValidation) {
  CameraCalibration c;
  c.fx = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.cx = 640;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.h = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.alpha = std::numbers::pi / 2;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_NO_THROW(CameraCalibration{}.validate());
}

TEST(Grid, CellCentersAndLattice) {
  BevGridSpec g{20.0, 192};
  const double s = 20.0 / 192;
  auto c = g.cell_center(0, 0);
  EXPECT_NEAR(c.x, 10.0 - s / 2, 1e-12);
  EXPECT_NEAR(c.y, 10.0 - s / 2, 1e-12);
  for (int r : {0, 5, 95, 96, 191})
    for (int k : {0, 17, 100, 191}) {
      const CellIndex idx = g.lattice_index(g.cell_center(r, k));
      EXPECT_EQ(idx, (CellIndex{r, k}));
    }
  EXPECT_FALSE(g.cell_of({10.5, 0.0}));
  EXPECT_FALSE(g.cell_of({0.0, -10.01}));
  // the ego sits on the corner shared by the four central cells
  EXPECT_EQ(*g.cell_of({0.01, 0.01}), (CellIndex{95, 95}));
  EXPECT_EQ(*g.cell_of({-0.01, -0.01}), (CellIndex{96, 96}));
}

TEST(Ipm, UniformRoadImage) {
  CameraCalibration c;
  SemanticImage seg(c.width, c.height, label_of(SemanticClass::road));
  BevGridSpec g;
  auto bev = ipm_project(seg, c, g);
  const PinholeCamera cam(c);
  for (int r = 0; r < g.cells; ++r)
    for (int k = 0; k < g.cells; ++k) {
      const bool in_view = cam.project(g.cell_center(r, k)).has_value();
      EXPECT_EQ(bev.at(r, k), in_view ? label_of(SemanticClass::road) : kUnknownLabel);
    }
}

TEST(Ipm, EmptyImageGivesUnknownMap) {
  CameraCalibration c;
  SemanticImage seg(c.width, c.height);
  auto bev = ipm_project(seg, c, BevGridSpec{});
  for (Label l : bev.labels) EXPECT_EQ(l, kUnknownLabel);
}

TEST(Ipm, SinglePixelLandsInItsCell) {
  CameraCalibration c;
  SemanticImage seg(c.width, c.height);
  seg.at(320, 325) = label_of(SemanticClass::road);  // image of (10, 0)
  // one-metre cells centered on integer coordinates, so (10, 0) is a center
  BevGridSpec g{25.0, 25};
  auto bev = ipm_project(seg, c, g);
  const CellIndex target = *g.cell_of({10.0, 0.0});
  int road_cells = 0;
  for (int r = 0; r < g.cells; ++r)
    for (int k = 0; k < g.cells; ++k)
      if (bev.at(r, k) == label_of(SemanticClass::road)) {
        ++road_cells;
        EXPECT_EQ((CellIndex{r, k}), target);
      }
  EXPECT_EQ(road_cells, 1);
}

TEST(Ipm, SinglePixelMatchesBruteForceOnDefaultGrid) {
  // (10, 0) is a cell corner on the 192-cell grid, so light the pixel under the
  // center of the cell that contains it
  CameraCalibration c;
  BevGridSpec g;
  const CellIndex target = *g.cell_of({10.0, 0.0});
  const GroundPoint tc = g.cell_center(target.row, target.col);
  const PixelCoord tp = direct_pinhole(c, tc.x, tc.y);
  const int pu = static_cast<int>(std::floor(tp.u + 0.5)), pv = static_cast<int>(std::floor(tp.v + 0.5));
  SemanticImage seg(c.width, c.height);
  seg.at(pu, pv) = label_of(SemanticClass::road);
  auto bev = ipm_project(seg, c, g);
  std::set<std::pair<int, int>> expected, got;
  for (int r = 0; r < g.cells; ++r)
    for (int k = 0; k < g.cells; ++k) {
      const GroundPoint p = g.cell_center(r, k);
      if (p.x > 0) {
        const PixelCoord px = direct_pinhole(c, p.x, p.y);
        if (std::floor(px.u + 0.5) == pu && std::floor(px.v + 0.5) == pv) expected.insert({r, k});
      }
      if (bev.at(r, k) == label_of(SemanticClass::road)) got.insert({r, k});
    }
  EXPECT_EQ(got, expected);
  EXPECT_TRUE(got.count({target.row, target.col}));
}

TEST(Ipm, RejectsSizeMismatch) {
  CameraCalibration c;
  SemanticImage seg(100, 100);
  EXPECT_THROW(ipm_project(seg, c, BevGridSpec{}), std::invalid_argument);
}

TEST(Ipm, CoverageIsForwardFan) {
  CameraCalibration c = CameraCalibration::from_horizontal_fov(480, 270, deg(110), 1.7, deg(5));
  SemanticImage seg(c.width, c.height, label_of(SemanticClass::road));
  BevGridSpec g;
  auto bev = ipm_project(seg, c, g);
  // every in-view cell lies ahead of the camera, and each row's in-view cells are contiguous
  for (int r = 0; r < g.cells; ++r) {
    int first = -1, last = -1, count = 0;
    for (int k = 0; k < g.cells; ++k)
      if (bev.at(r, k) != kUnknownLabel) {
        EXPECT_GT(g.cell_center(r, k).x, 0.0);
        if (first < 0) first = k;
        last = k;
        ++count;
      }
    if (count) EXPECT_EQ(count, last - first + 1);
  }
}

TEST(Ipm, ParallelMatchesReference) {
  CameraCalibration c = CameraCalibration::from_horizontal_fov(480, 270, deg(110), 1.7, deg(4), deg(1));
  SemanticImage seg(c.width, c.height);
  std::mt19937_64 rng(3);
  for (auto& l : seg.labels) l = static_cast<Label>(rng() % kNumClasses);
  BevGridSpec g;
  EXPECT_EQ(ipm_project(seg, c, g), reference::ipm_project(seg, c, g));
  EXPECT_EQ(ipm_project(seg, c, g), ipm_project(seg, c, g));
}
