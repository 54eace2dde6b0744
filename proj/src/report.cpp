#include "lrd/report.hpp"

#include <algorithm>
#include <array>
#include <sstream>

namespace lrd {

namespace {

// floor(num / den) for den > 0.
__int128 floor_div(__int128 num, __int128 den) {
  __int128 q = num / den;
  if (num % den != 0 && num < 0) --q;
  return q;
}

}  // namespace

std::int64_t percent_change_centi(std::uint64_t before, std::uint64_t after) {
  if (before == 0) return 0;
  const __int128 delta = static_cast<__int128>(after) - static_cast<__int128>(before);
  const __int128 b = before;
  return static_cast<std::int64_t>(floor_div(2 * 10000 * delta + b, 2 * b));
}

std::string scaled_2dp(std::uint64_t value, std::uint64_t scale) {
  const __int128 centi = floor_div(static_cast<__int128>(value) * 200 + scale, 2 * static_cast<__int128>(scale));
  return format_centi(static_cast<std::int64_t>(centi));
}

std::string format_centi(std::int64_t centi) {
  const bool negative = centi < 0;
  const std::uint64_t mag = negative ? static_cast<std::uint64_t>(-centi) : static_cast<std::uint64_t>(centi);
  std::string frac = std::to_string(mag % 100);
  if (frac.size() < 2) frac.insert(0, "0");
  return (negative ? "-" : "") + std::to_string(mag / 100) + "." + frac;
}

ReportRow report_row(const CompressionPlan& plan, const std::string& variant) {
  const PlanTotals& t = plan.totals;
  return ReportRow{plan.model,
                   variant,
                   t.layers_after,
                   t.params_after,
                   t.flops_after,
                   percent_change_centi(t.params_before, t.params_after),
                   percent_change_centi(t.flops_before, t.flops_after)};
}

ReportRow stats_row(const std::string& model, const PlanTotals& totals) {
  return ReportRow{model, "original", totals.layers_before, totals.params_before, totals.flops_before, 0, 0};
}

std::string render_table(const std::vector<ReportRow>& rows) {
  const std::array<std::string, 7> header{"model", "variant", "layers", "params(M)", "flops(B)", "dparams%", "dflops%"};
  std::vector<std::array<std::string, 7>> cells{header};
  for (const auto& r : rows) {
    cells.push_back({r.model, r.variant, std::to_string(r.layers), scaled_2dp(r.params, 1000000),
                     scaled_2dp(r.flops, 1000000000), format_centi(r.delta_params), format_centi(r.delta_flops)});
  }
  std::array<std::size_t, 7> width{};
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream os;
  for (const auto& row : cells) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      const std::string pad(width[c] - row[c].size(), ' ');
      // text columns left-aligned, numbers right-aligned
      line += c < 2 ? row[c] + pad : pad + row[c];
      if (c + 1 < row.size()) line += "  ";
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    os << line << '\n';
  }
  return os.str();
}

nlohmann::ordered_json rows_to_json(const std::vector<ReportRow>& rows) {
  auto out = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["model"] = r.model;
    j["variant"] = r.variant;
    j["layers"] = r.layers;
    j["params"] = r.params;
    j["flops"] = r.flops;
    j["params_m"] = scaled_2dp(r.params, 1000000);
    j["flops_b"] = scaled_2dp(r.flops, 1000000000);
    j["delta_params_pct"] = format_centi(r.delta_params);
    j["delta_flops_pct"] = format_centi(r.delta_flops);
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace lrd
