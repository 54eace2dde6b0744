#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "lrd/layer.hpp"

namespace lrd {

/// Largest R with R * (C + S) <= C * S / alpha.
std::size_t svd_rank_for_ratio(std::size_t c, std::size_t s, double alpha);

/// Tucker-2 ranks for a k x k layer at compression alpha with r2 = round(beta * r1).
///
/// r1 is the floor of the positive root of
///   beta k^2 r^2 + (C + beta S) r - C S k^2 / alpha = 0,
/// nudged so that params(r1) <= C S k^2 / alpha < params(r1 + 1) holds with the
/// rounded r2. For k = 1 the core is an r x r matrix that folds into either
/// neighbour, so the SVD rank is returned for both.
std::pair<std::size_t, std::size_t> tucker_ranks_for_ratio(std::size_t c, std::size_t s, std::size_t k, double alpha,
                                                           double beta = 1.0);

std::uint64_t svd_params(std::size_t c, std::size_t s, std::size_t rank);
std::uint64_t tucker_params(std::size_t c, std::size_t s, std::size_t k, std::size_t r1, std::size_t r2,
                            std::size_t branches = 1);

/// Weights (+ bias) of the undecomposed layer.
std::uint64_t layer_params(const LayerSpec& spec);
/// 2 x multiply-accumulates of the undecomposed layer.
std::uint64_t layer_flops(const LayerSpec& spec);

// ---------------------------------------------------------------------------
// Plan

struct PassthroughDecision {
  friend bool operator==(const PassthroughDecision&, const PassthroughDecision&) = default;
};
struct SvdDecision {
  std::size_t rank = 0;
  friend bool operator==(const SvdDecision&, const SvdDecision&) = default;
};
struct TuckerDecision {
  std::size_t r1 = 0;
  std::size_t r2 = 0;
  friend bool operator==(const TuckerDecision&, const TuckerDecision&) = default;
};
/// The layer's weights were folded into a neighbouring Tucker factor.
struct MergedDecision {
  std::string into;
  friend bool operator==(const MergedDecision&, const MergedDecision&) = default;
};

using Decision = std::variant<PassthroughDecision, SvdDecision, TuckerDecision, MergedDecision>;

const char* decision_name(const Decision& d);

/// Annotations added by the acceleration transforms.
struct TransformTags {
  std::size_t branches = 1;              // grouped Tucker core
  std::vector<bool> frozen;              // per factor layer, empty = none
  std::optional<LayerSpec> absorbs_prev; // 1x1 merged into the first factor
  std::optional<LayerSpec> absorbs_next; // 1x1 merged into the last factor
  friend bool operator==(const TransformTags&, const TransformTags&) = default;
};

/// Timing attached by the rank search; rank 0 is the original layer.
struct ProfileSummary {
  std::size_t rank = 0;
  double median = 0.0;
  double mad = 0.0;
  std::size_t reps = 0;
  friend bool operator==(const ProfileSummary&, const ProfileSummary&) = default;
};

struct PlanEntry {
  LayerSpec spec;
  Decision decision;
  TransformTags transforms;
  std::uint64_t params = 0;  // predicted, after the decision
  std::uint64_t flops = 0;
  std::size_t layers = 0;    // counted layers after the decision
  std::vector<std::string> warnings;
  std::vector<ProfileSummary> profile;
  friend bool operator==(const PlanEntry&, const PlanEntry&) = default;
};

struct PlanTotals {
  std::size_t layers_before = 0;
  std::size_t layers_after = 0;
  std::uint64_t params_before = 0;
  std::uint64_t params_after = 0;
  std::uint64_t flops_before = 0;
  std::uint64_t flops_after = 0;
  friend bool operator==(const PlanTotals&, const PlanTotals&) = default;
};

struct PlanPolicy {
  bool keep_first_conv = true;     // the stem stays whole
  std::size_t min_rank = 1;        // smaller ranks fall back to passthrough
  double beta = 1.0;               // r2 = beta * r1
  std::set<std::string> exclude;   // layer names kept whole
  friend bool operator==(const PlanPolicy&, const PlanPolicy&) = default;
};

struct CompressionPlan {
  std::string model;
  double alpha = 2.0;
  PlanPolicy policy;
  std::string transform = "none";
  std::vector<PlanEntry> entries;
  PlanTotals totals;
  friend bool operator==(const CompressionPlan&, const CompressionPlan&) = default;
};

/// Whether a layer counts towards the "layers" figure (shortcut projections don't).
bool counts_as_layer(const LayerSpec& spec);

/// Predicted params/FLOPs/layer count of one entry under its decision and tags.
void price_entry(PlanEntry& entry);
void recompute_totals(CompressionPlan& plan);

/// Decide ranks for every layer: k > 1 convs get Tucker ranks, 1x1 convs and
/// linear layers get SVD ranks. Excluded layers and unreachable or oversized
/// ranks become passthrough with a warning.
CompressionPlan plan_model(const std::string& model_name, const std::vector<LayerSpec>& layers, double alpha,
                           const PlanPolicy& policy = {});

/// Sums over the undecomposed model.
PlanTotals model_totals(const std::vector<LayerSpec>& layers);

}  // namespace lrd
