#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "lrd/planner.hpp"

namespace lrd {

nlohmann::ordered_json layer_to_json(const LayerSpec& spec);
LayerSpec layer_from_json(const nlohmann::json& j);

/// Keys in a fixed order: model, alpha, policy, transform, entries, totals.
nlohmann::ordered_json plan_to_json(const CompressionPlan& plan);
/// Inverse of plan_to_json. Totals are read back, not recomputed, and must
/// agree with the entries.
CompressionPlan plan_from_json(const nlohmann::json& j);

std::string render_plan(const CompressionPlan& plan);
CompressionPlan parse_plan(const std::string& text);
CompressionPlan load_plan(const std::filesystem::path& path);

}  // namespace lrd
