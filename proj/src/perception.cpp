#include "bevbridge/perception.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "bevbridge/csv.hpp"
#include "bevbridge/hashing.hpp"

namespace bevbridge {

namespace {

// stream tags keep the flip and jitter draws independent
constexpr std::uint64_t kFlipTag = 0x666c6970;
constexpr std::uint64_t kClassTag = 0x636c6173;
constexpr std::uint64_t kJitterTag = 0x6a697474;

void check_grid(const BevGridSpec& grid) {
  if (grid.cells != kBevCells)
    throw std::invalid_argument("encode: grid must have " + std::to_string(kBevCells) +
                                " cells per side, got " + std::to_string(grid.cells));
}

void check_channel(int channel) {
  if (channel < 0 || channel >= kBevChannels)
    throw std::invalid_argument("channel out of range: " + std::to_string(channel));
}

Label flip_label(Label original, std::uint64_t h) {
  if (original >= kNumClasses) return static_cast<Label>(h % kNumClasses);
  const auto k = static_cast<Label>(h % (kNumClasses - 1));
  return k < original ? k : static_cast<Label>(k + 1);
}

// Per-stream keys: hash_combine(seed, tag, idx) == hash_combine(key(seed, tag), idx).
struct NoiseKeys {
  std::uint64_t flip, cls, jitter;
  explicit NoiseKeys(std::uint64_t seed)
      : flip(hash_combine(seed, kFlipTag)), cls(hash_combine(seed, kClassTag)), jitter(hash_combine(seed, kJitterTag)) {}
};

Label flipped_or_same(Label original, std::size_t idx, double rate, const NoiseKeys& keys) {
  if (rate <= 0.0) return original;
  const double u = unit_double(hash_combine(keys.flip, idx));
  if (u >= rate) return original;
  return flip_label(original, hash_combine(keys.cls, idx));
}

bool on_boundary(const SemanticImage& img, int col, int row) {
  const Label l = img.at(col, row);
  if (col > 0 && img.at(col - 1, row) != l) return true;
  if (col + 1 < img.width && img.at(col + 1, row) != l) return true;
  if (row > 0 && img.at(col, row - 1) != l) return true;
  if (row + 1 < img.height && img.at(col, row + 1) != l) return true;
  return false;
}

void corrupt_row(const SemanticImage& seg, const SegNoiseModel& noise, const NoiseKeys& keys,
                 SemanticImage& out, int row) {
  const int w = seg.width;
  const int r = noise.boundary_jitter;
  for (int col = 0; col < w; ++col) {
    const std::size_t idx = static_cast<std::size_t>(row) * w + col;
    Label l = flipped_or_same(seg.labels[idx], idx, noise.flip_rate, keys);
    if (r > 0 && on_boundary(seg, col, row)) {
      const std::uint64_t h = hash_combine(keys.jitter, idx);
      const int span = 2 * r + 1;
      const int dx = static_cast<int>(h % span) - r;
      const int dy = static_cast<int>((h / span) % span) - r;
      const int sc = std::clamp(col + dx, 0, w - 1);
      const int sr = std::clamp(row + dy, 0, seg.height - 1);
      l = seg.at(sc, sr);
    }
    out.labels[idx] = l;
  }
}

void check_image(const SemanticImage& seg) {
  if (seg.width < 0 || seg.height < 0 ||
      seg.labels.size() != static_cast<std::size_t>(seg.width) * seg.height)
    throw std::invalid_argument("corrupt: label buffer does not match image size");
}

}  // namespace

BevTensor encode(const BevSemanticMap& map) { return encode(map, BevSideInputs{}); }

BevTensor encode(const BevSemanticMap& map, const BevSideInputs& side) {
  check_grid(map.grid);
  const std::size_t n = static_cast<std::size_t>(kBevCells) * kBevCells;
  if (map.labels.size() != n) throw std::invalid_argument("encode: label buffer size mismatch");
  if (!side.route.empty() && side.route.size() != n)
    throw std::invalid_argument("encode: route mask size mismatch");
  if (!side.ego.empty() && side.ego.size() != n)
    throw std::invalid_argument("encode: ego mask size mismatch");
  BevTensor t;
  auto data = t.data();
  for (std::size_t i = 0; i < n; ++i) {
    const Label l = map.labels[i];
    if (l < kNumClasses) data[i * kBevChannels + l] = 1;
    if (!side.route.empty() && side.route[i])
      data[i * kBevChannels + label_of(SemanticClass::route)] = 1;
    if (!side.ego.empty() && side.ego[i]) data[i * kBevChannels + label_of(SemanticClass::ego)] = 1;
  }
  return t;
}

std::vector<std::uint8_t> paint_route(std::span<const Point2> ego_frame_route,
                                      const BevGridSpec& grid, double half_width) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(grid.cells) * grid.cells, 0);
  const double s = grid.cell_size();
  const double half = grid.extent / 2.0;
  auto mark_segment = [&](Point2 a, Point2 b) {
    // rows grow with decreasing x, columns with decreasing y
    const int r0 = std::max(0, static_cast<int>(std::floor((half - std::max(a.x, b.x) - half_width) / s)));
    const int r1 = std::min(grid.cells - 1, static_cast<int>(std::floor((half - std::min(a.x, b.x) + half_width) / s)));
    const int c0 = std::max(0, static_cast<int>(std::floor((half - std::max(a.y, b.y) - half_width) / s)));
    const int c1 = std::min(grid.cells - 1, static_cast<int>(std::floor((half - std::min(a.y, b.y) + half_width) / s)));
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    for (int row = r0; row <= r1; ++row)
      for (int col = c0; col <= c1; ++col) {
        const GroundPoint c = grid.cell_center(row, col);
        double t = len2 > 0.0 ? ((c.x - a.x) * dx + (c.y - a.y) * dy) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        if (std::hypot(c.x - (a.x + t * dx), c.y - (a.y + t * dy)) <= half_width)
          mask[static_cast<std::size_t>(row) * grid.cells + col] = 1;
      }
  };
  if (ego_frame_route.size() == 1) mark_segment(ego_frame_route[0], ego_frame_route[0]);
  for (std::size_t i = 1; i < ego_frame_route.size(); ++i)
    mark_segment(ego_frame_route[i - 1], ego_frame_route[i]);
  return mask;
}

std::vector<std::uint8_t> paint_ego(const BevGridSpec& grid, double x_min, double x_max,
                                    double half_width) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(grid.cells) * grid.cells, 0);
  for (int row = 0; row < grid.cells; ++row)
    for (int col = 0; col < grid.cells; ++col) {
      const GroundPoint c = grid.cell_center(row, col);
      if (c.x >= x_min && c.x <= x_max && std::abs(c.y) <= half_width)
        mask[static_cast<std::size_t>(row) * grid.cells + col] = 1;
    }
  return mask;
}

void SegNoiseModel::validate() const {
  if (!(flip_rate >= 0.0 && flip_rate <= 1.0))
    throw std::invalid_argument("noise: flip_rate must lie in [0, 1]");
  if (boundary_jitter < 0) throw std::invalid_argument("noise: boundary_jitter must be >= 0");
}

SemanticImage corrupt(const SemanticImage& seg, const SegNoiseModel& noise) {
  noise.validate();
  check_image(seg);
  SemanticImage out(seg.width, seg.height);
  const NoiseKeys keys(noise.seed);
#pragma omp parallel for schedule(static)
  for (int row = 0; row < seg.height; ++row) corrupt_row(seg, noise, keys, out, row);
  return out;
}

BevSemanticMap corrupt_labels(const BevSemanticMap& map, double flip_rate, std::uint64_t seed) {
  if (!(flip_rate >= 0.0 && flip_rate <= 1.0))
    throw std::invalid_argument("corrupt_labels: flip_rate must lie in [0, 1]");
  BevSemanticMap out = map;
  const NoiseKeys keys(seed);
  for (std::size_t i = 0; i < out.labels.size(); ++i)
    out.labels[i] = flipped_or_same(map.labels[i], i, flip_rate, keys);
  return out;
}

double l1_bev_distance(const BevTensor& a, const BevTensor& b) {
  const auto da = a.data();
  const auto db = b.data();
  const auto n = static_cast<std::int64_t>(da.size());
  std::int64_t sum = 0;
#pragma omp parallel for reduction(+ : sum) schedule(static)
  for (std::int64_t i = 0; i < n; ++i) sum += da[i] != db[i];
  return static_cast<double>(sum);
}

DomainInvarianceEstimate estimate_domain_invariance(
    std::span<const std::pair<BevTensor, BevTensor>> pairs) {
  std::vector<double> d;
  d.reserve(pairs.size());
  for (const auto& [a, b] : pairs) d.push_back(l1_bev_distance(a, b));
  return estimate_domain_invariance(d);
}

DomainInvarianceEstimate estimate_domain_invariance(std::span<const double> distances) {
  if (distances.empty()) throw std::invalid_argument("estimate_domain_invariance: no pairs");
  DomainInvarianceEstimate e;
  e.pairs = distances.size();
  double sum = 0.0;
  for (double x : distances) sum += x;
  e.epsilon = sum / static_cast<double>(e.pairs);
  if (e.pairs > 1) {
    double ss = 0.0;
    for (double x : distances) ss += (x - e.epsilon) * (x - e.epsilon);
    e.stddev = std::sqrt(ss / static_cast<double>(e.pairs - 1));
  }
  return e;
}

std::optional<double> channel_iou(const BevTensor& a, const BevTensor& b, int channel) {
  check_channel(channel);
  const auto da = a.data();
  const auto db = b.data();
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = static_cast<std::size_t>(channel); i < da.size(); i += kBevChannels) {
    inter += da[i] & db[i];
    uni += da[i] | db[i];
  }
  if (uni == 0) return std::nullopt;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double activation_fraction(const BevTensor& t, int channel) {
  check_channel(channel);
  const auto d = t.data();
  std::size_t count = 0;
  for (std::size_t i = static_cast<std::size_t>(channel); i < d.size(); i += kBevChannels)
    count += d[i];
  return static_cast<double>(count) / (static_cast<double>(kBevCells) * kBevCells);
}

TemporalConsistency temporal_consistency(std::span<const BevTensor> seq, int channel,
                                         double threshold) {
  if (seq.size() < 2) throw std::invalid_argument("temporal_consistency: need at least 2 frames");
  check_channel(channel);
  TemporalConsistency tc;
  double sum = 0.0;
  std::size_t above = 0;
  for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
    const auto iou = channel_iou(seq[t], seq[t + 1], channel);
    if (!iou) {
      ++tc.skipped_empty;
      continue;
    }
    sum += *iou;
    if (*iou >= threshold) ++above;
    ++tc.used_pairs;
  }
  if (tc.used_pairs > 0) {
    tc.mean_iou = sum / static_cast<double>(tc.used_pairs);
    tc.fraction_above = static_cast<double>(above) / static_cast<double>(tc.used_pairs);
  }
  return tc;
}

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("bev: truncated header");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_bev(std::ostream& os, const BevTensor& t) {
  os.write("BEV1", 4);
  put_u32(os, kBevCells);
  put_u32(os, kBevCells);
  put_u32(os, kBevChannels);
  const auto d = t.data();
  os.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(d.size()));
}

BevTensor read_bev(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "BEV1", 4) != 0)
    throw std::runtime_error("bev: bad magic");
  const std::uint32_t h = get_u32(is), w = get_u32(is), c = get_u32(is);
  if (h != kBevCells || w != kBevCells || c != kBevChannels)
    throw std::runtime_error("bev: unsupported shape");
  BevTensor t;
  auto d = t.data();
  if (!is.read(reinterpret_cast<char*>(d.data()), static_cast<std::streamsize>(d.size())))
    throw std::runtime_error("bev: truncated payload");
  for (auto v : d)
    if (v > 1) throw std::runtime_error("bev: payload byte is not 0 or 1");
  return t;
}

std::vector<FrameChannelMetrics> frame_metrics(int frame, const BevTensor& a, const BevTensor& b) {
  std::vector<FrameChannelMetrics> rows;
  for (int ch = 0; ch < kBevChannels; ++ch)
    rows.push_back({frame, ch, channel_iou(a, b, ch), activation_fraction(a, ch),
                    activation_fraction(b, ch)});
  return rows;
}

void write_metrics_csv(std::ostream& os, std::span<const FrameChannelMetrics> rows) {
  os << "frame,channel,iou,activation_a,activation_b\n";
  for (const auto& r : rows)
    os << r.frame << ',' << r.channel << ',' << (r.iou ? format_number(*r.iou) : "empty") << ','
       << format_number(r.activation_a) << ',' << format_number(r.activation_b) << '\n';
}

namespace reference {

SemanticImage corrupt(const SemanticImage& seg, const SegNoiseModel& noise) {
  noise.validate();
  check_image(seg);
  SemanticImage out = seg;
  for (std::size_t i = 0; i < seg.labels.size(); ++i)
    if (noise.flip_rate > 0.0 && unit_double(hash_combine(noise.seed, kFlipTag, i)) < noise.flip_rate)
      out.labels[i] = flip_label(seg.labels[i], hash_combine(noise.seed, kClassTag, i));
  if (noise.boundary_jitter == 0) return out;
  const int r = noise.boundary_jitter, span = 2 * r + 1;
  for (int row = 0; row < seg.height; ++row)
    for (int col = 0; col < seg.width; ++col) {
      if (!on_boundary(seg, col, row)) continue;
      const std::size_t i = static_cast<std::size_t>(row) * seg.width + col;
      const std::uint64_t h = hash_combine(noise.seed, kJitterTag, i);
      const int dx = static_cast<int>(h % span) - r;
      const int dy = static_cast<int>((h / span) % span) - r;
      out.at(col, row) = seg.at(std::clamp(col + dx, 0, seg.width - 1), std::clamp(row + dy, 0, seg.height - 1));
    }
  return out;
}

double l1_bev_distance(const BevTensor& a, const BevTensor& b) {
  const auto da = a.data();
  const auto db = b.data();
  double sum = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i)
    sum += std::abs(static_cast<double>(da[i]) - static_cast<double>(db[i]));
  return sum;
}

}  // namespace reference

}  // namespace bevbridge
