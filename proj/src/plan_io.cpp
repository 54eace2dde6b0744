#include "lrd/plan_io.hpp"

#include <fstream>
#include <sstream>

#include "lrd/errors.hpp"

namespace lrd {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

LayerKind parse_kind(const std::string& s) {
  if (s == "conv") return LayerKind::conv;
  if (s == "linear") return LayerKind::linear;
  throw FormatError("unknown layer kind '" + s + "'");
}

Link parse_link(const std::string& s) {
  if (s == "barrier") return Link::barrier;
  if (s == "direct") return Link::direct;
  if (s == "foldable") return Link::foldable;
  throw FormatError("unknown link '" + s + "'");
}

ojson decision_to_json(const Decision& d) {
  ojson j;
  j["kind"] = decision_name(d);
  if (const auto* s = std::get_if<SvdDecision>(&d)) {
    j["rank"] = s->rank;
  } else if (const auto* t = std::get_if<TuckerDecision>(&d)) {
    j["r1"] = t->r1;
    j["r2"] = t->r2;
  } else if (const auto* m = std::get_if<MergedDecision>(&d)) {
    j["into"] = m->into;
  }
  return j;
}

Decision decision_from_json(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "passthrough") return PassthroughDecision{};
  if (kind == "svd") return SvdDecision{j.at("rank").get<std::size_t>()};
  if (kind == "tucker") return TuckerDecision{j.at("r1").get<std::size_t>(), j.at("r2").get<std::size_t>()};
  if (kind == "merged") return MergedDecision{j.at("into").get<std::string>()};
  throw FormatError("unknown decision '" + kind + "'");
}

ojson totals_to_json(const PlanTotals& t) {
  ojson j;
  j["layers_before"] = t.layers_before;
  j["layers_after"] = t.layers_after;
  j["params_before"] = t.params_before;
  j["params_after"] = t.params_after;
  j["flops_before"] = t.flops_before;
  j["flops_after"] = t.flops_after;
  return j;
}

PlanTotals totals_from_json(const json& j) {
  PlanTotals t;
  t.layers_before = j.at("layers_before").get<std::size_t>();
  t.layers_after = j.at("layers_after").get<std::size_t>();
  t.params_before = j.at("params_before").get<std::uint64_t>();
  t.params_after = j.at("params_after").get<std::uint64_t>();
  t.flops_before = j.at("flops_before").get<std::uint64_t>();
  t.flops_after = j.at("flops_after").get<std::uint64_t>();
  return t;
}

}  // namespace

ojson layer_to_json(const LayerSpec& l) {
  ojson j;
  j["name"] = l.name;
  j["kind"] = to_string(l.kind);
  j["in"] = l.in_channels;
  j["out"] = l.out_channels;
  j["kernel"] = l.kernel;
  j["stride"] = l.stride;
  j["padding"] = l.padding;
  j["groups"] = l.groups;
  j["bias"] = l.has_bias;
  j["input_hw"] = l.input_hw;
  j["block"] = l.block;
  j["shortcut"] = l.shortcut;
  j["next"] = l.next;
  j["link"] = to_string(l.link);
  return j;
}

LayerSpec layer_from_json(const json& j) {
  LayerSpec l;
  l.name = j.at("name").get<std::string>();
  l.kind = parse_kind(j.at("kind").get<std::string>());
  l.in_channels = j.at("in").get<std::size_t>();
  l.out_channels = j.at("out").get<std::size_t>();
  l.kernel = j.at("kernel").get<std::size_t>();
  l.stride = j.at("stride").get<std::size_t>();
  l.padding = j.at("padding").get<std::size_t>();
  l.groups = j.at("groups").get<std::size_t>();
  l.has_bias = j.at("bias").get<bool>();
  l.input_hw = j.at("input_hw").get<std::size_t>();
  l.block = j.value("block", std::string());
  l.shortcut = j.value("shortcut", false);
  l.next = j.value("next", std::string());
  l.link = parse_link(j.value("link", std::string("barrier")));
  l.validate();
  return l;
}

ojson plan_to_json(const CompressionPlan& plan) {
  ojson j;
  j["model"] = plan.model;
  j["alpha"] = plan.alpha;
  ojson policy;
  policy["keep_first_conv"] = plan.policy.keep_first_conv;
  policy["min_rank"] = plan.policy.min_rank;
  policy["beta"] = plan.policy.beta;
  policy["exclude"] = plan.policy.exclude;
  j["policy"] = std::move(policy);
  j["transform"] = plan.transform;
  ojson entries = ojson::array();
  for (const auto& e : plan.entries) {
    ojson je;
    je["layer"] = layer_to_json(e.spec);
    je["decision"] = decision_to_json(e.decision);
    ojson tags;
    tags["branches"] = e.transforms.branches;
    tags["frozen"] = e.transforms.frozen;
    tags["absorbs_prev"] = e.transforms.absorbs_prev ? layer_to_json(*e.transforms.absorbs_prev) : ojson(nullptr);
    tags["absorbs_next"] = e.transforms.absorbs_next ? layer_to_json(*e.transforms.absorbs_next) : ojson(nullptr);
    je["transforms"] = std::move(tags);
    je["predicted_params"] = e.params;
    je["predicted_flops"] = e.flops;
    je["layers"] = e.layers;
    je["warnings"] = e.warnings;
    if (!e.profile.empty()) {
      ojson prof = ojson::array();
      for (const auto& p : e.profile) {
        prof.push_back(ojson{{"rank", p.rank}, {"median", p.median}, {"mad", p.mad}, {"reps", p.reps}});
      }
      je["profile"] = std::move(prof);
    }
    entries.push_back(std::move(je));
  }
  j["entries"] = std::move(entries);
  j["totals"] = totals_to_json(plan.totals);
  return j;
}

CompressionPlan plan_from_json(const json& j) {
  CompressionPlan plan;
  try {
    plan.model = j.at("model").get<std::string>();
    plan.alpha = j.at("alpha").get<double>();
    const json& policy = j.at("policy");
    plan.policy.keep_first_conv = policy.at("keep_first_conv").get<bool>();
    plan.policy.min_rank = policy.at("min_rank").get<std::size_t>();
    plan.policy.beta = policy.at("beta").get<double>();
    plan.policy.exclude = policy.at("exclude").get<std::set<std::string>>();
    plan.transform = j.at("transform").get<std::string>();
    for (const json& je : j.at("entries")) {
      PlanEntry e;
      e.spec = layer_from_json(je.at("layer"));
      e.decision = decision_from_json(je.at("decision"));
      const json& tags = je.at("transforms");
      e.transforms.branches = tags.at("branches").get<std::size_t>();
      e.transforms.frozen = tags.at("frozen").get<std::vector<bool>>();
      if (!tags.at("absorbs_prev").is_null()) e.transforms.absorbs_prev = layer_from_json(tags.at("absorbs_prev"));
      if (!tags.at("absorbs_next").is_null()) e.transforms.absorbs_next = layer_from_json(tags.at("absorbs_next"));
      if (e.transforms.branches < 1) throw FormatError("branch count must be >= 1");
      e.params = je.at("predicted_params").get<std::uint64_t>();
      e.flops = je.at("predicted_flops").get<std::uint64_t>();
      e.layers = je.at("layers").get<std::size_t>();
      e.warnings = je.at("warnings").get<std::vector<std::string>>();
      if (const auto it = je.find("profile"); it != je.end()) {
        for (const json& p : *it) {
          e.profile.push_back({p.at("rank").get<std::size_t>(), p.at("median").get<double>(),
                               p.at("mad").get<double>(), p.at("reps").get<std::size_t>()});
        }
      }
      plan.entries.push_back(std::move(e));
    }
    plan.totals = totals_from_json(j.at("totals"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("plan: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("plan: ") + e.what());
  }
  CompressionPlan check = plan;
  recompute_totals(check);
  if (check != plan) throw FormatError("plan: totals or predicted costs disagree with the decisions");
  return plan;
}

std::string render_plan(const CompressionPlan& plan) { return plan_to_json(plan).dump(2) + "\n"; }

CompressionPlan parse_plan(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("plan: ") + e.what());
  }
  return plan_from_json(j);
}

CompressionPlan load_plan(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_plan(ss.str());
}

}  // namespace lrd
