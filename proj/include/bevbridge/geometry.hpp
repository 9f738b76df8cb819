#pragma once

#include <array>
#include <optional>
#include <string>

#include "bevbridge/semantics.hpp"

namespace bevbridge {

// Intrinsics plus mounting of a forward-facing monocular camera. Angles in
// radians: alpha is pitch (positive tilts the optical axis toward the ground),
// beta is roll about the optical axis.
struct CameraCalibration {
  double fx = 500.0;
  double fy = 500.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;
  double h = 1.7;
  double alpha = 0.0;
  double beta = 0.0;

  // Throws std::invalid_argument naming the first violated constraint.
  void validate() const;

  // Square pixels, principal point at the image center.
  static CameraCalibration from_horizontal_fov(int width, int height, double fov_rad, double h,
                                               double alpha = 0.0, double beta = 0.0);
};

// Ego frame: x forward, y left, z up; origin on the ground below the camera.
struct GroundPoint {
  double x = 0.0;
  double y = 0.0;
};

struct PixelCoord {
  double u = 0.0;
  double v = 0.0;

  int col() const;
  int row() const;
};

struct CellIndex {
  int row = 0;
  int col = 0;
  friend bool operator==(const CellIndex&, const CellIndex&) = default;
};

// Square metric crop centered on the ego. Row 0 is the far-forward edge and
// column 0 the far-left edge, so the image of the grid reads like a map with
// forward pointing up.
//
// The same cell pattern is continued past the crop as an unbounded lattice;
// lattice indices inside [0, cells) coincide with grid cells.
struct BevGridSpec {
  double extent = 20.0;
  int cells = 192;

  double cell_size() const { return extent / cells; }
  void validate() const;

  GroundPoint cell_center(int row, int col) const;
  CellIndex lattice_index(GroundPoint p) const;
  std::optional<CellIndex> cell_of(GroundPoint p) const;
  bool contains(CellIndex c) const { return c.row >= 0 && c.col >= 0 && c.row < cells && c.col < cells; }

  friend bool operator==(const BevGridSpec&, const BevGridSpec&) = default;
};

// Row-major cells x cells label map in the ego frame.
struct BevSemanticMap {
  BevGridSpec grid;
  std::vector<Label> labels;

  BevSemanticMap() = default;
  explicit BevSemanticMap(BevGridSpec g, Label fill = kUnknownLabel);

  Label at(int row, int col) const { return labels[static_cast<std::size_t>(row) * grid.cells + col]; }
  Label& at(int row, int col) { return labels[static_cast<std::size_t>(row) * grid.cells + col]; }

  friend bool operator==(const BevSemanticMap&, const BevSemanticMap&) = default;
};

// Pinhole camera at (0, 0, h) in the ego frame, yaw fixed at zero. The
// rotation is built once so repeated projections stay cheap.
class PinholeCamera {
 public:
  explicit PinholeCamera(const CameraCalibration& calib);

  const CameraCalibration& calibration() const { return calib_; }

  // nullopt when the point is behind the image plane or its nearest pixel
  // falls outside the image.
  std::optional<PixelCoord> project(GroundPoint p) const;

  // Same projection without the image-bounds test (still rejects points
  // behind the camera).
  std::optional<PixelCoord> project_unbounded(GroundPoint p) const;

  // nullopt for rays at or above the horizon.
  std::optional<GroundPoint> back_project(PixelCoord px) const;

  bool in_image(PixelCoord px) const;

 private:
  CameraCalibration calib_;
  // ego -> camera rotation, row-major
  std::array<double, 9> r_{};
};

std::optional<PixelCoord> ground_to_pixel(GroundPoint p, const CameraCalibration& calib);
std::optional<GroundPoint> pixel_to_ground(PixelCoord px, const CameraCalibration& calib);

// Inverse perspective mapping: every BEV cell takes the label of the pixel
// nearest to the projection of its center, or unknown when out of view.
// Throws std::invalid_argument when seg does not match the calibration size.
BevSemanticMap ipm_project(const SemanticImage& seg, const CameraCalibration& calib,
                           const BevGridSpec& grid);

namespace reference {
// Single-threaded version of ipm_project kept for cross-checking and benchmarks.
BevSemanticMap ipm_project(const SemanticImage& seg, const CameraCalibration& calib,
                           const BevGridSpec& grid);
}  // namespace reference

}  // namespace bevbridge
