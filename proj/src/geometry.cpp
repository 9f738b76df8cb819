#include "bevbridge/geometry.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bevbridge {

namespace {

constexpr double kMinDepth = 1e-9;

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

void CameraCalibration::validate() const {
  require(std::isfinite(fx) && fx > 0.0, "camera: fx must be > 0");
  require(std::isfinite(fy) && fy > 0.0, "camera: fy must be > 0");
  require(width > 0 && height > 0, "camera: image size must be positive");
  require(cx >= 0.0 && cx < width, "camera: cx must lie in [0, width)");
  require(cy >= 0.0 && cy < height, "camera: cy must lie in [0, height)");
  require(std::isfinite(h) && h > 0.0, "camera: mounting height must be > 0");
  require(std::abs(alpha) < std::numbers::pi / 2, "camera: |alpha| must be < pi/2");
  require(std::abs(beta) < std::numbers::pi / 2, "camera: |beta| must be < pi/2");
}

CameraCalibration CameraCalibration::from_horizontal_fov(int width, int height, double fov_rad,
                                                         double h, double alpha, double beta) {
  CameraCalibration c;
  c.width = width;
  c.height = height;
  c.fx = (width / 2.0) / std::tan(fov_rad / 2.0);
  c.fy = c.fx;
  c.cx = width / 2.0;
  c.cy = height / 2.0;
  c.h = h;
  c.alpha = alpha;
  c.beta = beta;
  return c;
}

int PixelCoord::col() const { return static_cast<int>(std::floor(u + 0.5)); }
int PixelCoord::row() const { return static_cast<int>(std::floor(v + 0.5)); }

void BevGridSpec::validate() const {
  require(std::isfinite(extent) && extent > 0.0, "grid: extent must be > 0");
  require(cells > 0, "grid: cells must be > 0");
}

GroundPoint BevGridSpec::cell_center(int row, int col) const {
  const double s = cell_size();
  const double half = extent / 2.0;
  return {half - (row + 0.5) * s, half - (col + 0.5) * s};
}

CellIndex BevGridSpec::lattice_index(GroundPoint p) const {
  const double s = cell_size();
  const double half = extent / 2.0;
  return {static_cast<int>(std::floor((half - p.x) / s)),
          static_cast<int>(std::floor((half - p.y) / s))};
}

std::optional<CellIndex> BevGridSpec::cell_of(GroundPoint p) const {
  const CellIndex c = lattice_index(p);
  if (!contains(c)) return std::nullopt;
  return c;
}

BevSemanticMap::BevSemanticMap(BevGridSpec g, Label fill)
    : grid(g), labels(static_cast<std::size_t>(g.cells) * g.cells, fill) {}

PinholeCamera::PinholeCamera(const CameraCalibration& calib) : calib_(calib) {
  calib_.validate();
  const double ca = std::cos(calib.alpha), sa = std::sin(calib.alpha);
  const double cb = std::cos(calib.beta), sb = std::sin(calib.beta);
  // base: x_c = -y, y_c = -z, z_c = x; then pitch about x_c; then roll about z_c
  const std::array<double, 9> base = {0, -1, 0, 0, 0, -1, 1, 0, 0};
  const std::array<double, 9> pitch = {1, 0, 0, 0, ca, -sa, 0, sa, ca};
  const std::array<double, 9> roll = {cb, -sb, 0, sb, cb, 0, 0, 0, 1};
  auto mul = [](const std::array<double, 9>& a, const std::array<double, 9>& b) {
    std::array<double, 9> m{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) m[i * 3 + j] += a[i * 3 + k] * b[k * 3 + j];
    return m;
  };
  r_ = mul(roll, mul(pitch, base));
}

std::optional<PixelCoord> PinholeCamera::project_unbounded(GroundPoint p) const {
  const double ex = p.x, ey = p.y, ez = -calib_.h;
  const double xc = r_[0] * ex + r_[1] * ey + r_[2] * ez;
  const double yc = r_[3] * ex + r_[4] * ey + r_[5] * ez;
  const double zc = r_[6] * ex + r_[7] * ey + r_[8] * ez;
  if (!(zc > kMinDepth)) return std::nullopt;
  return PixelCoord{calib_.cx + calib_.fx * xc / zc, calib_.cy + calib_.fy * yc / zc};
}

bool PinholeCamera::in_image(PixelCoord px) const {
  const int c = px.col(), r = px.row();
  return c >= 0 && r >= 0 && c < calib_.width && r < calib_.height;
}

std::optional<PixelCoord> PinholeCamera::project(GroundPoint p) const {
  auto px = project_unbounded(p);
  if (!px || !in_image(*px)) return std::nullopt;
  return px;
}

std::optional<GroundPoint> PinholeCamera::back_project(PixelCoord px) const {
  const double dxc = (px.u - calib_.cx) / calib_.fx;
  const double dyc = (px.v - calib_.cy) / calib_.fy;
  // ego direction = R^T * (dxc, dyc, 1)
  const double dx = r_[0] * dxc + r_[3] * dyc + r_[6];
  const double dy = r_[1] * dxc + r_[4] * dyc + r_[7];
  const double dz = r_[2] * dxc + r_[5] * dyc + r_[8];
  if (!(dz < 0.0)) return std::nullopt;
  const double t = calib_.h / -dz;
  return GroundPoint{t * dx, t * dy};
}

std::optional<PixelCoord> ground_to_pixel(GroundPoint p, const CameraCalibration& calib) {
  return PinholeCamera(calib).project(p);
}

std::optional<GroundPoint> pixel_to_ground(PixelCoord px, const CameraCalibration& calib) {
  return PinholeCamera(calib).back_project(px);
}

namespace {

void check_ipm_inputs(const SemanticImage& seg, const CameraCalibration& calib,
                      const BevGridSpec& grid) {
  calib.validate();
  grid.validate();
  if (seg.width != calib.width || seg.height != calib.height)
    throw std::invalid_argument("ipm_project: image size does not match calibration");
}

inline void ipm_row(const SemanticImage& seg, const PinholeCamera& cam, BevSemanticMap& out,
                    int row) {
  const int n = out.grid.cells;
  for (int col = 0; col < n; ++col) {
    const auto px = cam.project(out.grid.cell_center(row, col));
    out.at(row, col) = px ? seg.at(px->col(), px->row()) : kUnknownLabel;
  }
}

}  // namespace

BevSemanticMap ipm_project(const SemanticImage& seg, const CameraCalibration& calib,
                           const BevGridSpec& grid) {
  check_ipm_inputs(seg, calib, grid);
  const PinholeCamera cam(calib);
  BevSemanticMap out(grid);
#pragma omp parallel for schedule(static)
  for (int row = 0; row < grid.cells; ++row) ipm_row(seg, cam, out, row);
  return out;
}

namespace reference {

BevSemanticMap ipm_project(const SemanticImage& seg, const CameraCalibration& calib,
                           const BevGridSpec& grid) {
  check_ipm_inputs(seg, calib, grid);
  const PinholeCamera cam(calib);
  BevSemanticMap out(grid);
  for (int row = 0; row < grid.cells; ++row) ipm_row(seg, cam, out, row);
  return out;
}

}  // namespace reference

}  // namespace bevbridge
