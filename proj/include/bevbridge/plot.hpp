#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "bevbridge/csv.hpp"

namespace bevbridge {

enum class PlotKind : std::uint8_t { trajectory, speed_profile, steering_profile, latency, bound_slack, iou_timeline };

std::string_view plot_kind_name(PlotKind k);
PlotKind parse_plot_kind(std::string_view name);  // throws std::invalid_argument

// Deterministic SVG text for a CSV of the matching schema (see FORMATS.md).
// Throws std::invalid_argument for tables without rows or missing columns.
std::string render_plot(const CsvTable& table, PlotKind kind);

inline constexpr double kLatencyBudgetMs = 50.0;

}  // namespace bevbridge
