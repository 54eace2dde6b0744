#include "lrd/planner.hpp"

#include <cmath>
#include <stdexcept>

#include "lrd/errors.hpp"

namespace lrd {

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 1.0) || !std::isfinite(alpha)) {
    throw RankError("compression ratio must be a finite number > 1");
  }
}

std::size_t rounded_r2(std::size_t r1, double beta) {
  const auto r2 = static_cast<std::size_t>(std::llround(beta * static_cast<double>(r1)));
  return r2 < 1 ? 1 : r2;
}

std::uint64_t sq(std::uint64_t x) { return x * x; }

}  // namespace

std::size_t svd_rank_for_ratio(std::size_t c, std::size_t s, double alpha) {
  check_alpha(alpha);
  const long double target = static_cast<long double>(c) * s / alpha;
  const long double per_rank = static_cast<long double>(c + s);
  auto r = static_cast<std::size_t>(std::floor(target / per_rank));
  while (static_cast<long double>(r + 1) * per_rank <= target) ++r;
  while (r > 0 && static_cast<long double>(r) * per_rank > target) --r;
  if (r < 1) {
    throw RankError("svd rank for " + std::to_string(c) + "x" + std::to_string(s) + " at ratio " +
                    std::to_string(alpha) + " is below 1");
  }
  return r;
}

std::pair<std::size_t, std::size_t> tucker_ranks_for_ratio(std::size_t c, std::size_t s, std::size_t k, double alpha,
                                                           double beta) {
  check_alpha(alpha);
  if (!(beta > 0.0) || !std::isfinite(beta)) throw RankError("beta must be a finite number > 0");
  if (k == 1) {
    const std::size_t r = svd_rank_for_ratio(c, s, alpha);
    return {r, r};
  }
  const long double k2 = static_cast<long double>(k) * k;
  const long double target = static_cast<long double>(c) * s * k2 / alpha;
  const long double qa = beta * k2;
  const long double qb = static_cast<long double>(c) + beta * static_cast<long double>(s);
  const long double root = (-qb + std::sqrt(qb * qb + 4.0L * qa * target)) / (2.0L * qa);

  auto params = [&](std::size_t r1) {
    const std::size_t r2 = rounded_r2(r1, beta);
    return static_cast<long double>(tucker_params(c, s, k, r1, r2));
  };
  auto r = root < 0 ? std::size_t{0} : static_cast<std::size_t>(std::floor(root));
  while (params(r + 1) <= target) ++r;
  while (r > 0 && params(r) > target) --r;
  if (r < 1) {
    throw RankError("tucker ranks for " + std::to_string(c) + "x" + std::to_string(s) + "x" + std::to_string(k) +
                    " at ratio " + std::to_string(alpha) + " are below 1");
  }
  return {r, rounded_r2(r, beta)};
}

std::uint64_t svd_params(std::size_t c, std::size_t s, std::size_t rank) {
  return static_cast<std::uint64_t>(rank) * (c + s);
}

std::uint64_t tucker_params(std::size_t c, std::size_t s, std::size_t k, std::size_t r1, std::size_t r2,
                            std::size_t branches) {
  return static_cast<std::uint64_t>(c) * r1 + static_cast<std::uint64_t>(r1) * r2 * k * k / branches +
         static_cast<std::uint64_t>(r2) * s;
}

std::uint64_t layer_params(const LayerSpec& spec) {
  std::uint64_t p = static_cast<std::uint64_t>(spec.in_channels) * spec.out_channels * spec.kernel * spec.kernel /
                    spec.groups;
  if (spec.has_bias) p += spec.out_channels;
  return p;
}

std::uint64_t layer_flops(const LayerSpec& spec) {
  const std::uint64_t macs = static_cast<std::uint64_t>(spec.in_channels) * spec.out_channels * spec.kernel *
                             spec.kernel / spec.groups;
  return 2 * macs * sq(spec.output_hw());
}

const char* decision_name(const Decision& d) {
  switch (d.index()) {
    case 1:
      return "svd";
    case 2:
      return "tucker";
    case 3:
      return "merged";
    default:
      return "passthrough";
  }
}

bool counts_as_layer(const LayerSpec& spec) { return !spec.shortcut; }

void price_entry(PlanEntry& e) {
  const LayerSpec& l = e.spec;
  const std::uint64_t bias = l.has_bias ? l.out_channels : 0;
  const std::size_t counted = counts_as_layer(l) ? 1 : 0;
  if (std::holds_alternative<PassthroughDecision>(e.decision)) {
    e.params = layer_params(l);
    e.flops = layer_flops(l);
    e.layers = counted;
  } else if (const auto* svd = std::get_if<SvdDecision>(&e.decision)) {
    const std::uint64_t r = svd->rank;
    e.params = svd_params(l.in_channels, l.out_channels, svd->rank) + bias;
    if (l.kind == LayerKind::linear) {
      e.flops = 2 * r * (l.in_channels + l.out_channels);
    } else {
      // First factor keeps the padding at stride 1, the second carries the stride.
      const std::uint64_t padded = l.input_hw + 2 * l.padding;
      e.flops = 2 * (l.in_channels * r * sq(padded) + r * l.out_channels * sq(l.output_hw()));
    }
    e.layers = 2 * counted;
  } else if (const auto* t = std::get_if<TuckerDecision>(&e.decision)) {
    const auto& tags = e.transforms;
    const std::uint64_t r1 = t->r1;
    const std::uint64_t r2 = t->r2;
    const std::uint64_t k2 = static_cast<std::uint64_t>(l.kernel) * l.kernel;
    const std::uint64_t ho = l.output_hw();

    std::uint64_t first_params = l.in_channels * r1;
    std::uint64_t first_flops = 2 * l.in_channels * r1 * sq(l.input_hw);
    if (tags.absorbs_prev) {
      const LayerSpec& p = *tags.absorbs_prev;
      first_params = p.in_channels * r1;
      first_flops = 2 * p.in_channels * r1 * sq(p.output_hw());
    }
    const std::uint64_t core_params = r1 * r2 * k2 / tags.branches;
    const std::uint64_t core_flops = 2 * core_params * sq(ho);
    std::uint64_t last_params = r2 * l.out_channels + bias;
    std::uint64_t last_flops = 2 * r2 * l.out_channels * sq(ho);
    if (tags.absorbs_next) {
      const LayerSpec& n = *tags.absorbs_next;
      last_params = r2 * n.out_channels + (n.has_bias ? n.out_channels : 0);
      last_flops = 2 * r2 * n.out_channels * sq(n.output_hw());
    }
    e.params = first_params + core_params + last_params;
    e.flops = first_flops + core_flops + last_flops;
    e.layers = 3 * counted;
  } else {
    e.params = 0;
    e.flops = 0;
    e.layers = 0;
  }
}

PlanTotals model_totals(const std::vector<LayerSpec>& layers) {
  PlanTotals t;
  for (const auto& l : layers) {
    const std::size_t counted = counts_as_layer(l) ? 1 : 0;
    t.layers_before += counted;
    t.layers_after += counted;
    t.params_before += layer_params(l);
    t.flops_before += layer_flops(l);
  }
  t.params_after = t.params_before;
  t.flops_after = t.flops_before;
  return t;
}

void recompute_totals(CompressionPlan& plan) {
  PlanTotals t;
  for (auto& e : plan.entries) {
    price_entry(e);
    const std::size_t counted = counts_as_layer(e.spec) ? 1 : 0;
    t.layers_before += counted;
    t.params_before += layer_params(e.spec);
    t.flops_before += layer_flops(e.spec);
    t.layers_after += e.layers;
    t.params_after += e.params;
    t.flops_after += e.flops;
  }
  plan.totals = t;
}

CompressionPlan plan_model(const std::string& model_name, const std::vector<LayerSpec>& layers, double alpha,
                           const PlanPolicy& policy) {
  if (layers.empty()) throw std::invalid_argument("plan_model: empty model");
  if (!(alpha > 1.0)) throw RankError("compression ratio must be > 1");
  CompressionPlan plan;
  plan.model = model_name;
  plan.alpha = alpha;
  plan.policy = policy;

  bool seen_conv = false;
  for (const auto& l : layers) {
    l.validate();
    PlanEntry e;
    e.spec = l;
    e.decision = PassthroughDecision{};
    const bool is_first_conv = l.kind == LayerKind::conv && !seen_conv;
    if (l.kind == LayerKind::conv) seen_conv = true;

    if (policy.exclude.count(l.name) != 0) {
      e.warnings.push_back("excluded by policy");
    } else if (policy.keep_first_conv && is_first_conv) {
      e.warnings.push_back("first conv kept whole");
    } else if (l.groups != 1) {
      e.warnings.push_back("grouped layers are kept whole");
    } else {
      try {
        if (l.is_pointwise()) {
          const std::size_t r = svd_rank_for_ratio(l.in_channels, l.out_channels, alpha);
          if (r < policy.min_rank) {
            e.warnings.push_back("rank " + std::to_string(r) + " below policy minimum");
          } else {
            e.decision = SvdDecision{r};
          }
        } else {
          const auto [r1, r2] = tucker_ranks_for_ratio(l.in_channels, l.out_channels, l.kernel, alpha, policy.beta);
          if (r1 > l.in_channels || r2 > l.out_channels) {
            e.warnings.push_back("tucker ranks (" + std::to_string(r1) + ", " + std::to_string(r2) +
                                 ") exceed channel counts");
          } else if (std::min(r1, r2) < policy.min_rank) {
            e.warnings.push_back("rank below policy minimum");
          } else {
            e.decision = TuckerDecision{r1, r2};
          }
        }
      } catch (const RankError& err) {
        e.warnings.push_back(err.what());
      }
    }
    plan.entries.push_back(std::move(e));
  }
  recompute_totals(plan);
  return plan;
}

}  // namespace lrd
