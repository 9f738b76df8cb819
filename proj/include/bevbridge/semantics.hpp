#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

namespace bevbridge {

// Fixed channel table of the BEV observation. The numeric value of each
// enumerator is both the label id in semantic images and the tensor channel.
enum class SemanticClass : std::uint8_t {
  road = 0,
  lane_marking = 1,
  vehicle = 2,
  pedestrian = 3,
  cyclist = 4,
  motorcycle = 5,
  sidewalk = 6,
  traffic_light_red = 7,
  traffic_light_yellow = 8,
  traffic_light_green = 9,
  stop_sign = 10,
  obstacle = 11,
  route = 12,
  ego = 13,
};

using Label = std::uint8_t;

inline constexpr int kNumClasses = 14;
inline constexpr Label kUnknownLabel = 255;

constexpr Label label_of(SemanticClass c) { return static_cast<Label>(c); }

constexpr bool is_valid_label(Label l) { return l < kNumClasses || l == kUnknownLabel; }

// Classes that a solid object occupies (used for corridor and emergency checks).
constexpr bool is_obstacle_class(Label l) {
  return l == label_of(SemanticClass::vehicle) || l == label_of(SemanticClass::pedestrian) ||
         l == label_of(SemanticClass::cyclist) || l == label_of(SemanticClass::motorcycle) ||
         l == label_of(SemanticClass::obstacle);
}

std::string_view class_name(Label l);

struct BevGridSpec;

// Row-major label image; pixel (col, row) has its center at continuous
// image coordinates (u, v) = (col, row).
struct SemanticImage {
  int width = 0;
  int height = 0;
  std::vector<Label> labels;

  SemanticImage() = default;
  SemanticImage(int w, int h, Label fill = kUnknownLabel);

  Label at(int col, int row) const { return labels[static_cast<std::size_t>(row) * width + col]; }
  Label& at(int col, int row) { return labels[static_cast<std::size_t>(row) * width + col]; }

  friend bool operator==(const SemanticImage&, const SemanticImage&) = default;
};

}  // namespace bevbridge
