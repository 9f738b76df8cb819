#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bevbridge/geometry.hpp"
#include "bevbridge/polyline.hpp"
#include "bevbridge/semantics.hpp"

namespace bevbridge {

inline constexpr int kBevCells = 192;
inline constexpr int kBevChannels = kNumClasses;

// 192 x 192 x 14 binary occupancy, laid out row, then column, then channel.
class BevTensor {
 public:
  BevTensor() : data_(kSize, 0) {}

  static constexpr int cells() { return kBevCells; }
  static constexpr int channels() { return kBevChannels; }
  static constexpr std::size_t size() { return kSize; }

  static constexpr std::size_t index(int row, int col, int ch) {
    return (static_cast<std::size_t>(row) * kBevCells + col) * kBevChannels + ch;
  }

  std::uint8_t at(int row, int col, int ch) const { return data_[index(row, col, ch)]; }
  void set(int row, int col, int ch, bool on) { data_[index(row, col, ch)] = on ? 1 : 0; }

  std::span<const std::uint8_t> data() const { return data_; }
  std::span<std::uint8_t> data() { return data_; }

  friend bool operator==(const BevTensor&, const BevTensor&) = default;

 private:
  static constexpr std::size_t kSize =
      static_cast<std::size_t>(kBevCells) * kBevCells * kBevChannels;
  std::vector<std::uint8_t> data_;
};

// Binary cells x cells masks for the route and ego channels. An empty vector
// leaves the channel zero.
struct BevSideInputs {
  std::vector<std::uint8_t> route;
  std::vector<std::uint8_t> ego;
};

// Channel c is set exactly where the map label equals c; unknown cells stay
// zero. Throws std::invalid_argument unless the grid has 192 cells per side.
BevTensor encode(const BevSemanticMap& map);
BevTensor encode(const BevSemanticMap& map, const BevSideInputs& side);

// Marks every cell within half_width of the ego-frame polyline.
std::vector<std::uint8_t> paint_route(std::span<const Point2> ego_frame_route,
                                      const BevGridSpec& grid, double half_width = 0.5);
// Marks every cell whose center lies in the ego-frame rectangle
// [x_min, x_max] x [-half_width, half_width].
std::vector<std::uint8_t> paint_ego(const BevGridSpec& grid, double x_min, double x_max,
                                    double half_width);

struct SegNoiseModel {
  double flip_rate = 0.0;
  int boundary_jitter = 0;  // pixels
  std::uint64_t seed = 0;

  void validate() const;
};

// Independent label flips to a uniformly random other class, then boundary
// jitter: pixels on a class boundary of the input take the input label found
// at a seeded offset within the jitter radius. Deterministic per seed.
SemanticImage corrupt(const SemanticImage& seg, const SegNoiseModel& noise);

// Same flip rule applied to a BEV label map (deployment-side label noise).
BevSemanticMap corrupt_labels(const BevSemanticMap& map, double flip_rate, std::uint64_t seed);

double l1_bev_distance(const BevTensor& a, const BevTensor& b);

struct DomainInvarianceEstimate {
  double epsilon = 0.0;  // mean L1
  double stddev = 0.0;   // sample standard deviation, 0 for a single pair
  std::size_t pairs = 0;
};

DomainInvarianceEstimate estimate_domain_invariance(
    std::span<const std::pair<BevTensor, BevTensor>> pairs);
DomainInvarianceEstimate estimate_domain_invariance(std::span<const double> distances);

// nullopt when both masks are empty.
std::optional<double> channel_iou(const BevTensor& a, const BevTensor& b, int channel);
double activation_fraction(const BevTensor& t, int channel);

struct TemporalConsistency {
  double mean_iou = 0.0;
  double fraction_above = 0.0;  // over the pairs used
  std::size_t used_pairs = 0;
  std::size_t skipped_empty = 0;
};

// Throws std::invalid_argument for fewer than two frames.
TemporalConsistency temporal_consistency(std::span<const BevTensor> seq, int channel,
                                         double threshold = 0.5);

void write_bev(std::ostream& os, const BevTensor& t);
BevTensor read_bev(std::istream& is);

struct FrameChannelMetrics {
  int frame = 0;
  int channel = 0;
  std::optional<double> iou;
  double activation_a = 0.0;
  double activation_b = 0.0;
};

std::vector<FrameChannelMetrics> frame_metrics(int frame, const BevTensor& a, const BevTensor& b);
void write_metrics_csv(std::ostream& os, std::span<const FrameChannelMetrics> rows);

namespace reference {
SemanticImage corrupt(const SemanticImage& seg, const SegNoiseModel& noise);
double l1_bev_distance(const BevTensor& a, const BevTensor& b);
}  // namespace reference

}  // namespace bevbridge
