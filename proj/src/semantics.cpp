#include "bevbridge/semantics.hpp"

namespace bevbridge {

std::string_view class_name(Label l) {
  static constexpr std::array<std::string_view, kNumClasses> kNames = {
      "road",       "lane_marking",      "vehicle",           "pedestrian",
      "cyclist",    "motorcycle",        "sidewalk",          "traffic_light_red",
      "traffic_light_yellow", "traffic_light_green", "stop_sign", "obstacle",
      "route",      "ego"};
  if (l < kNumClasses) return kNames[l];
  return "unknown";
}

SemanticImage::SemanticImage(int w, int h, Label fill)
    : width(w), height(h), labels(static_cast<std::size_t>(w) * h, fill) {}

}  // namespace bevbridge
