#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lrd/planner.hpp"

namespace lrd {

/// One table row. Percentages are kept in hundredths, rounded half-up.
struct ReportRow {
  std::string model;
  std::string variant;
  std::size_t layers = 0;
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
  std::int64_t delta_params = 0;  // 1/100 %
  std::int64_t delta_flops = 0;   // 1/100 %
};

/// floor(100 * 100 * (after - before) / before + 1/2), exact; 0 when before is 0.
std::int64_t percent_change_centi(std::uint64_t before, std::uint64_t after);
/// value / scale rounded half-up to 2 decimals, as text ("25.51").
std::string scaled_2dp(std::uint64_t value, std::uint64_t scale);
std::string format_centi(std::int64_t centi);

ReportRow report_row(const CompressionPlan& plan, const std::string& variant);
ReportRow stats_row(const std::string& model, const PlanTotals& totals);

std::string render_table(const std::vector<ReportRow>& rows);
nlohmann::ordered_json rows_to_json(const std::vector<ReportRow>& rows);

}  // namespace lrd
