#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "bevbridge/perception.hpp"

using namespace bevbridge;

namespace {

BevTensor random_tensor(std::mt19937_64& rng, double density) {
  BevTensor t;
  std::bernoulli_distribution on(density);
  for (auto& v : t.data()) v = on(rng) ? 1 : 0;
  return t;
}

void set_cells(BevTensor& t, int ch, int first, int count) {
  for (int i = first; i < first + count; ++i) t.set(i / kBevCells, i % kBevCells, ch, true);
}

SemanticImage random_image(std::mt19937_64& rng, int w, int h) {
  SemanticImage img(w, h);
  for (auto& l : img.labels) {
    const auto k = rng() % (kNumClasses + 1);
    l = k == kNumClasses ? kUnknownLabel : static_cast<Label>(k);
  }
  return img;
}

// Blocky image with long class boundaries.
SemanticImage striped_image(int w, int h) {
  SemanticImage img(w, h);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) img.at(c, r) = static_cast<Label>(((c / 7) + (r / 5)) % 4);
  return img;
}

}  // namespace

TEST(Encode, AllUnknownIsZero) {
  BevSemanticMap m(BevGridSpec{});
  const BevTensor t = encode(m);
  for (auto v : t.data()) EXPECT_EQ(v, 0);
}

TEST(Encode, SingleVehicleCell) {
  BevSemanticMap m(BevGridSpec{});
  m.at(40, 77) = label_of(SemanticClass::vehicle);
  const BevTensor t = encode(m);
  std::size_t ones = 0;
  for (auto v : t.data()) ones += v;
  EXPECT_EQ(ones, 1u);
  EXPECT_EQ(t.at(40, 77, 2), 1);
}

TEST(Encode, PreservesClassCounts) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    BevSemanticMap m(BevGridSpec{});
    std::array<int, kNumClasses> counts{};
    for (auto& l : m.labels) {
      const auto k = rng() % 13;  // 12 ground/entity classes + unknown
      l = k == 12 ? kUnknownLabel : static_cast<Label>(k);
      if (l != kUnknownLabel) ++counts[l];
    }
    const BevTensor t = encode(m);
    for (int c = 0; c < kNumClasses; ++c)
      EXPECT_DOUBLE_EQ(activation_fraction(t, c) * kBevCells * kBevCells, counts[c]);
  }
}

TEST(Encode, SideInputsFillRouteAndEgo) {
  BevGridSpec g;
  BevSemanticMap m(g, label_of(SemanticClass::road));
  const std::vector<Point2> route = {{0, 0}, {10, 0}};
  BevSideInputs side{paint_route(route, g, 0.5), paint_ego(g, -1.0, 3.875, 1.0)};
  const BevTensor t = encode(m, side);
  const auto c = *g.cell_of({5.0, 0.2});
  EXPECT_EQ(t.at(c.row, c.col, 12), 1);
  EXPECT_EQ(t.at(c.row, c.col, 0), 1);
  const auto e = *g.cell_of({0.1, 0.1});
  EXPECT_EQ(t.at(e.row, e.col, 13), 1);
  const auto off = *g.cell_of({5.0, 3.0});
  EXPECT_EQ(t.at(off.row, off.col, 12), 0);
  EXPECT_EQ(t.at(off.row, off.col, 13), 0);
}

TEST(Encode, RejectsWrongGrid) {
  BevSemanticMap m(BevGridSpec{20.0, 100});
  EXPECT_THROW(encode(m), std::invalid_argument);
}

TEST(Corrupt, ZeroNoiseIsIdentity) {
  std::mt19937_64 rng(5);
  const SemanticImage img = random_image(rng, 64, 48);
  EXPECT_EQ(corrupt(img, {0.0, 0, 99}), img);
}

TEST(Corrupt, FullFlipChangesEveryPixel) {
  std::mt19937_64 rng(6);
  const SemanticImage img = random_image(rng, 64, 48);
  const SemanticImage out = corrupt(img, {1.0, 0, 4});
  for (std::size_t i = 0; i < img.labels.size(); ++i) {
    EXPECT_NE(out.labels[i], img.labels[i]);
    EXPECT_TRUE(out.labels[i] < kNumClasses);
  }
}

TEST(Corrupt, FlipFractionWithinBinomialBand) {
  // n = 10^4, p = 0.1: sd = 0.003, so [0.07, 0.13] is a 10-sigma band
  SemanticImage img(100, 100, label_of(SemanticClass::road));
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const SemanticImage out = corrupt(img, {0.1, 0, seed});
    std::size_t changed = 0;
    for (std::size_t i = 0; i < img.labels.size(); ++i) changed += out.labels[i] != img.labels[i];
    const double frac = changed / 1e4;
    EXPECT_GE(frac, 0.07);
    EXPECT_LE(frac, 0.13);
  }
}

TEST(Corrupt, FlipTargetsAreUniformOverOtherClasses) {
  SemanticImage img(200, 200, label_of(SemanticClass::sidewalk));
  const SemanticImage out = corrupt(img, {1.0, 0, 17});
  std::array<int, kNumClasses> hist{};
  for (Label l : out.labels) ++hist[l];
  EXPECT_EQ(hist[label_of(SemanticClass::sidewalk)], 0);
  const double expected = 40000.0 / 13.0;
  for (int c = 0; c < kNumClasses; ++c)
    if (c != label_of(SemanticClass::sidewalk)) EXPECT_NEAR(hist[c], expected, 6 * std::sqrt(expected));
}

TEST(Corrupt, DeterministicPerSeedAndSeedSensitive) {
  const SemanticImage img = striped_image(90, 60);
  const SegNoiseModel a{0.05, 2, 123};
  EXPECT_EQ(corrupt(img, a), corrupt(img, a));
  EXPECT_NE(corrupt(img, a), corrupt(img, {0.05, 2, 124}));
}

TEST(Corrupt, JitterOnlyTouchesBoundaries) {
  const SemanticImage img = striped_image(90, 60);
  const SemanticImage out = corrupt(img, {0.0, 2, 8});
  int moved = 0;
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) {
      if (out.at(c, r) == img.at(c, r)) continue;
      ++moved;
      // the new label occurs in the input within the jitter radius
      bool found = false;
      for (int dr = -2; dr <= 2 && !found; ++dr)
        for (int dc = -2; dc <= 2 && !found; ++dc) {
          const int rr = std::clamp(r + dr, 0, img.height - 1), cc = std::clamp(c + dc, 0, img.width - 1);
          found = img.at(cc, rr) == out.at(c, r);
        }
      EXPECT_TRUE(found);
      // interior pixels (4-neighbours all equal) never change
      const Label l = img.at(c, r);
      const bool interior = c > 0 && r > 0 && c + 1 < img.width && r + 1 < img.height &&
                            img.at(c - 1, r) == l && img.at(c + 1, r) == l &&
                            img.at(c, r - 1) == l && img.at(c, r + 1) == l;
      EXPECT_FALSE(interior);
    }
  EXPECT_GT(moved, 0);
}

TEST(Corrupt, ParallelMatchesReference) {
  std::mt19937_64 rng(9);
  const SemanticImage img = random_image(rng, 120, 80);
  for (const SegNoiseModel& n : {SegNoiseModel{0.0, 0, 1}, SegNoiseModel{0.2, 0, 2},
                                 SegNoiseModel{0.05, 3, 3}})
    EXPECT_EQ(corrupt(img, n), reference::corrupt(img, n));
}

TEST(Corrupt, RejectsInvalidModel) {
  SemanticImage img(4, 4);
  EXPECT_THROW(corrupt(img, {1.5, 0, 0}), std::invalid_argument);
  EXPECT_THROW(corrupt(img, {0.1, -1, 0}), std::invalid_argument);
}

TEST(L1, IdenticalIsZeroAndCountsDifferences) {
  BevTensor a, b;
  EXPECT_EQ(l1_bev_distance(a, b), 0.0);
  b.set(0, 0, 0, true);
  b.set(100, 3, 13, true);
  b.set(191, 191, 5, true);
  EXPECT_EQ(l1_bev_distance(a, b), 3.0);
}

TEST(L1, MatchesBruteForce) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 5; ++i) {
    const BevTensor a = random_tensor(rng, 0.3), b = random_tensor(rng, 0.1);
    double brute = 0.0;
    for (int r = 0; r < kBevCells; ++r)
      for (int c = 0; c < kBevCells; ++c)
        for (int ch = 0; ch < kBevChannels; ++ch) brute += std::abs(a.at(r, c, ch) - b.at(r, c, ch));
    EXPECT_EQ(l1_bev_distance(a, b), brute);
    EXPECT_EQ(reference::l1_bev_distance(a, b), brute);
  }
}

TEST(DomainInvariance, Examples) {
  BevTensor a;
  std::vector<std::pair<BevTensor, BevTensor>> same = {{a, a}, {a, a}};
  EXPECT_EQ(estimate_domain_invariance(same).epsilon, 0.0);
  BevTensor b;
  set_cells(b, 3, 10, 5);
  std::vector<std::pair<BevTensor, BevTensor>> one = {{a, b}};
  const auto e1 = estimate_domain_invariance(one);
  EXPECT_EQ(e1.epsilon, 5.0);
  EXPECT_EQ(e1.stddev, 0.0);
  const std::vector<double> d = {2, 4, 6};
  const auto e = estimate_domain_invariance(d);
  EXPECT_DOUBLE_EQ(e.epsilon, 4.0);
  EXPECT_DOUBLE_EQ(e.stddev, 2.0);
  EXPECT_THROW(estimate_domain_invariance(std::span<const double>{}), std::invalid_argument);
}

TEST(Iou, Examples) {
  BevTensor a, b;
  EXPECT_FALSE(channel_iou(a, b, 0));
  set_cells(a, 0, 0, 100);
  EXPECT_DOUBLE_EQ(*channel_iou(a, a, 0), 1.0);
  set_cells(b, 0, 200, 100);
  EXPECT_DOUBLE_EQ(*channel_iou(a, b, 0), 0.0);
  BevTensor c;
  set_cells(c, 0, 50, 100);
  EXPECT_DOUBLE_EQ(*channel_iou(a, c, 0), 1.0 / 3.0);
  EXPECT_THROW(channel_iou(a, b, 14), std::invalid_argument);
}

TEST(Iou, Axioms) {
  std::mt19937_64 rng(33);
  for (int i = 0; i < 20; ++i) {
    const BevTensor a = random_tensor(rng, 0.02), b = random_tensor(rng, 0.05);
    for (int ch = 0; ch < kBevChannels; ++ch) {
      const auto ab = channel_iou(a, b, ch), ba = channel_iou(b, a, ch);
      ASSERT_EQ(ab.has_value(), ba.has_value());
      if (!ab) continue;
      EXPECT_EQ(*ab, *ba);
      EXPECT_GE(*ab, 0.0);
      EXPECT_LE(*ab, 1.0);
      // growing the intersection never lowers IoU
      BevTensor grown = b;
      for (int r = 0; r < kBevCells; ++r)
        for (int c = 0; c < kBevCells; ++c)
          if (a.at(r, c, ch) && (rng() % 2)) grown.set(r, c, ch, true);
      EXPECT_GE(*channel_iou(a, grown, ch), *ab);
    }
  }
}

TEST(Activation, Examples) {
  BevTensor t;
  EXPECT_EQ(activation_fraction(t, 4), 0.0);
  set_cells(t, 4, 0, kBevCells * kBevCells);
  EXPECT_EQ(activation_fraction(t, 4), 1.0);
  BevTensor h;
  set_cells(h, 6, 0, kBevCells * kBevCells / 2);
  EXPECT_EQ(activation_fraction(h, 6), 0.5);
}

TEST(Temporal, Examples) {
  BevTensor a;
  set_cells(a, 0, 0, 30);
  const std::vector<BevTensor> constant = {a, a, a, a};
  const auto tc = temporal_consistency(constant, 0, 1.0);
  EXPECT_EQ(tc.mean_iou, 1.0);
  EXPECT_EQ(tc.fraction_above, 1.0);

  BevTensor b;
  set_cells(b, 0, 100, 30);
  const std::vector<BevTensor> alternating = {a, b, a, b};
  EXPECT_EQ(temporal_consistency(alternating, 0).mean_iou, 0.0);

  BevTensor f0, f1, f2;
  set_cells(f0, 1, 0, 10);   // {0..9}
  set_cells(f1, 1, 0, 9);    // {0..8}: IoU 9/10
  set_cells(f2, 1, 0, 7);    // {0..6, 100}: IoU 7/10 against f1
  set_cells(f2, 1, 100, 1);
  const std::vector<BevTensor> three = {f0, f1, f2};
  const auto t3 = temporal_consistency(three, 1, 0.8);
  EXPECT_NEAR(t3.mean_iou, 0.8, 1e-15);
  EXPECT_EQ(t3.fraction_above, 0.5);

  const std::vector<BevTensor> empties = {BevTensor{}, BevTensor{}, a};
  const auto te = temporal_consistency(empties, 0);
  EXPECT_EQ(te.skipped_empty, 1u);
  EXPECT_EQ(te.used_pairs, 1u);

  EXPECT_THROW(temporal_consistency(std::span<const BevTensor>(constant.data(), 1), 0),
               std::invalid_argument);
}

TEST(BevDump, RoundTripAndHeader) {
  std::mt19937_64 rng(1);
  const BevTensor t = random_tensor(rng, 0.2);
  std::stringstream ss;
  write_bev(ss, t);
  const std::string bytes = ss.str();
  ASSERT_EQ(bytes.size(), 16u + BevTensor::size());
  EXPECT_EQ(bytes.substr(0, 4), "BEV1");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 192);
  EXPECT_EQ(bytes[5], 0);
  EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 14);
  EXPECT_EQ(static_cast<unsigned char>(bytes[16 + BevTensor::index(0, 1, 0)]), t.at(0, 1, 0));
  std::stringstream in(bytes);
  EXPECT_EQ(read_bev(in), t);
  std::stringstream bad("BEV2");
  EXPECT_THROW(read_bev(bad), std::runtime_error);
}

TEST(MetricsCsv, EmptyMarkerAndHeader) {
  BevTensor a, b;
  set_cells(a, 0, 0, 10);
  set_cells(b, 0, 5, 10);
  const auto rows = frame_metrics(3, a, b);
  std::ostringstream os;
  write_metrics_csv(os, rows);
  const std::string s = os.str();
  EXPECT_EQ(s.rfind("frame,channel,iou,activation_a,activation_b\n", 0), 0u);
  EXPECT_NE(s.find("3,0,0.3333333333,"), std::string::npos);
  EXPECT_NE(s.find("3,1,empty,0,0"), std::string::npos);
}

TEST(CorruptLabels, FlipRule) {
  BevSemanticMap m(BevGridSpec{}, label_of(SemanticClass::road));
  EXPECT_EQ(corrupt_labels(m, 0.0, 3), m);
  const auto all = corrupt_labels(m, 1.0, 3);
  for (Label l : all.labels) EXPECT_NE(l, label_of(SemanticClass::road));
}
