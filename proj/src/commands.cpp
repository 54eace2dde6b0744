#include "lrd/commands.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <set>

#include "lrd/bundle.hpp"
#include "lrd/errors.hpp"
#include "lrd/model.hpp"
#include "lrd/plan_io.hpp"
#include "lrd/planner.hpp"
#include "lrd/rank_search.hpp"
#include "lrd/report.hpp"
#include "lrd/transforms.hpp"
#include "lrd/weights.hpp"

namespace lrd::cli {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StatsArgs {
  std::string model;
  bool json = false;
};

struct PlanArgs {
  std::string model;
  double alpha = 2.0;
  double beta = 1.0;
  std::size_t min_rank = 1;
  std::vector<std::string> exclude;
  bool keep_first_conv = true;
  std::string transform = "none";
  std::size_t branches = 4;
  bool keep_activations = false;
  std::string output;
  bool json_report = false;
};

struct DecomposeArgs {
  std::string model;
  std::string plan;
  std::string weights;
  std::optional<std::uint64_t> seed;
  std::string emit;
  std::string emit_format = "bin";
  std::size_t hooi_sweeps = 0;
};

struct VerifyArgs {
  std::string bundle;
  std::string mode = "reconstruct";
};

struct OptimizeArgs {
  std::string model;
  double alpha = 2.0;
  double beta = 1.0;
  double rmin_frac = 0.5;
  std::size_t reps = 5;
  std::size_t stride = 1;
  std::vector<std::string> layers;
  bool synthetic = false;
  std::optional<std::uint64_t> seed;
  std::string output;
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot write " + path);
  os << text;
  if (!os) throw FormatError("cannot write " + path);
}

std::uint64_t effective_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("LRD_SEED"); env != nullptr && *env != '\0') {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used, 0);
      if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw UsageError(std::string("LRD_SEED is not an unsigned integer: ") + env);
    }
  }
  return kDefaultSeed;
}

void report_warnings(const CompressionPlan& plan, std::ostream& err) {
  constexpr std::size_t kShown = 5;
  std::size_t total = 0;
  for (const auto& e : plan.entries) {
    for (const auto& w : e.warnings) {
      if (++total <= kShown) err << "warning: " << e.spec.name << ": " << w << '\n';
    }
  }
  if (total > kShown) err << "warning: " << total - kShown << " more, see the plan entries\n";
}

std::string variant_name(const std::string& transform) { return transform == "none" ? "vanilla" : transform; }

int cmd_stats(const StatsArgs& a, std::ostream& out) {
  const ModelFile m = load_model(a.model);
  const std::vector<ReportRow> rows{stats_row(m.name, model_totals(m.layers()))};
  if (a.json) {
    out << rows_to_json(rows).dump(2) << '\n';
  } else {
    out << render_table(rows);
  }
  return kExitOk;
}

int cmd_plan(const PlanArgs& a, std::ostream& out, std::ostream& err) {
  if (!(a.alpha > 1.0)) throw UsageError("--alpha must be > 1");
  const ModelFile m = load_model(a.model);
  PlanPolicy policy;
  policy.keep_first_conv = a.keep_first_conv;
  policy.min_rank = a.min_rank;
  policy.beta = a.beta;
  policy.exclude = std::set<std::string>(a.exclude.begin(), a.exclude.end());
  CompressionPlan plan = plan_model(m.name, m.layers(), a.alpha, policy);
  if (a.transform == "merge") {
    plan = merge_plan(plan, MergeOptions{!a.keep_activations});
  } else if (a.transform == "branch") {
    plan = branch_plan(plan, a.branches);
  } else if (a.transform == "freeze") {
    plan = freeze_plan(plan);
  }
  report_warnings(plan, err);
  const std::vector<ReportRow> rows{stats_row(m.name, model_totals(m.layers())),
                                    report_row(plan, variant_name(plan.transform))};
  const std::string report = a.json_report ? rows_to_json(rows).dump(2) + "\n" : render_table(rows);
  if (a.output.empty()) {
    out << render_plan(plan);
    err << report;
  } else {
    write_text(a.output, render_plan(plan));
    out << report;
  }
  return kExitOk;
}

int cmd_decompose(const DecomposeArgs& a, std::ostream& out) {
  const ModelFile m = load_model(a.model);
  const CompressionPlan plan = load_plan(a.plan);
  const auto layers = m.layers();
  if (plan.entries.size() != layers.size()) {
    throw UsageError("plan has " + std::to_string(plan.entries.size()) + " layers, model has " +
                     std::to_string(layers.size()));
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (!(plan.entries[i].spec == layers[i])) {
      throw UsageError("plan does not match model at layer " + std::to_string(i) + " ('" + layers[i].name + "')");
    }
  }
  WeightSource source;
  source.seed = effective_seed(a.seed);
  if (!a.weights.empty()) source.dir = a.weights;
  EmitOptions options;
  options.format = a.emit_format;
  options.tucker.hooi_sweeps = a.hooi_sweeps;
  const BundleManifest manifest = write_bundle(plan, source, options, a.emit);

  for (const auto& e : manifest.entries) {
    if (e.scheme != "svd" && e.scheme != "tucker") continue;
    std::string ranks;
    for (auto r : e.ranks) ranks += (ranks.empty() ? "" : ",") + std::to_string(r);
    char err_text[32];
    std::snprintf(err_text, sizeof err_text, "%.6e", e.relative_error);
    out << e.spec.name << "  " << e.scheme << "(" << ranks << ")  relative_error " << err_text << '\n';
  }
  out << "wrote " << manifest.entries.size() << " layers to " << a.emit << '\n';
  return kExitOk;
}

int cmd_verify(const VerifyArgs& a, std::ostream& out) {
  const auto mode = parse_verify_mode(a.mode);
  if (!mode) throw UsageError("unknown verify mode '" + a.mode + "'");
  const VerifyReport report = verify_bundle(a.bundle, *mode);
  print_report(out, report);
  return report.ok() ? kExitOk : kExitVerifyFailed;
}

int cmd_optimize(const OptimizeArgs& a, std::ostream& out, std::ostream& err) {
  if (!(a.alpha > 1.0)) throw UsageError("--alpha must be > 1");
  if (a.reps < kMinProfileReps) {
    throw UsageError("--reps must be at least " + std::to_string(kMinProfileReps));
  }
  if (!(a.rmin_frac > 0.0 && a.rmin_frac <= 1.0)) throw UsageError("--rmin-frac must be in (0, 1]");
  if (a.stride < 1) throw UsageError("--stride must be >= 1");
  const ModelFile m = load_model(a.model);
  PlanPolicy policy;
  policy.beta = a.beta;
  CompressionPlan plan = plan_model(m.name, m.layers(), a.alpha, policy);
  plan.transform = a.synthetic ? "optimize:synthetic" : "optimize";
  const std::set<std::string> only(a.layers.begin(), a.layers.end());
  for (const auto& name : only) {
    bool found = false;
    for (const auto& e : plan.entries) found = found || e.spec.name == name;
    if (!found) throw UsageError("no layer named '" + name + "'");
  }
  const std::uint64_t seed = effective_seed(a.seed);

  for (auto& e : plan.entries) {
    if (!only.empty() && only.count(e.spec.name) == 0) continue;
    std::size_t r_init = 0;
    if (const auto* s = std::get_if<SvdDecision>(&e.decision)) r_init = s->rank;
    if (const auto* t = std::get_if<TuckerDecision>(&e.decision)) r_init = t->r1;
    if (r_init == 0) continue;
    const auto r_min = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(a.rmin_frac * static_cast<double>(r_init))));
    try {
      std::unique_ptr<TimingProvider> provider;
      if (a.synthetic) {
        provider = std::make_unique<SyntheticTimingProvider>(e.spec, SyntheticCostModel{}, a.beta);
      } else {
        provider = std::make_unique<NnTimingProvider>(e.spec, seeded_weights(e.spec, seed), r_init, a.beta, a.reps, seed);
      }
      const RankSearchResult res = optimize_rank(r_init, r_min, *provider, a.stride);
      e.profile.push_back({0, res.original.time.median, res.original.time.mad, res.original.time.reps});
      for (const auto& rec : res.scanned) e.profile.push_back({rec.rank, rec.time.median, rec.time.mad, rec.time.reps});
      if (!res.rank) {
        e.decision = PassthroughDecision{};
        e.warnings.push_back("original layer is faster than every scanned rank");
      } else if (std::holds_alternative<SvdDecision>(e.decision)) {
        e.decision = SvdDecision{*res.rank};
      } else {
        const auto r2 = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(a.beta * static_cast<double>(*res.rank))));
        e.decision = TuckerDecision{*res.rank, r2};
      }
    } catch (const std::exception& ex) {
      e.decision = PassthroughDecision{};
      e.warnings.push_back(std::string("profiling failed: ") + ex.what());
    }
  }
  recompute_totals(plan);
  report_warnings(plan, err);
  if (a.output.empty()) {
    out << render_plan(plan);
  } else {
    write_text(a.output, render_plan(plan));
    out << render_table({report_row(plan, variant_name(plan.transform))});
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Low-rank decomposition planner and verifier", "lrd"};
  app.require_subcommand(1);

  StatsArgs stats;
  auto* stats_cmd = app.add_subcommand("stats", "Layer count, parameters and FLOPs of a model");
  stats_cmd->add_option("model", stats.model, "Model file")->required();
  stats_cmd->add_flag("--json", stats.json, "Print JSON instead of a table");

  PlanArgs plan;
  auto* plan_cmd = app.add_subcommand("plan", "Choose ranks for a compression ratio");
  plan_cmd->add_option("model", plan.model, "Model file")->required();
  plan_cmd->add_option("--alpha", plan.alpha, "Compression ratio (> 1)")->required();
  plan_cmd->add_option("--beta", plan.beta, "Tucker r2 / r1")->check(CLI::PositiveNumber);
  plan_cmd->add_option("--min-rank", plan.min_rank, "Smaller ranks keep the layer whole");
  plan_cmd->add_option("--exclude", plan.exclude, "Layer kept whole (repeatable)");
  plan_cmd->add_option("--keep-first-conv", plan.keep_first_conv, "Keep the stem conv whole (default true)");
  plan_cmd->add_option("--transform", plan.transform, "none, merge, branch or freeze")
      ->check(CLI::IsMember({"none", "merge", "branch", "freeze"}));
  plan_cmd->add_option("--branches", plan.branches, "Branch count for --transform branch")
      ->check(CLI::PositiveNumber);
  plan_cmd->add_flag("--keep-activations", plan.keep_activations,
                     "With merge: only merge pairs with no activation between them");
  plan_cmd->add_option("-o,--output", plan.output, "Plan file (default: stdout)");
  plan_cmd->add_flag("--json-report", plan.json_report, "Report as JSON");

  DecomposeArgs dec;
  auto* dec_cmd = app.add_subcommand("decompose", "Decompose weights according to a plan");
  dec_cmd->add_option("model", dec.model, "Model file")->required();
  dec_cmd->add_option("plan", dec.plan, "Plan file")->required();
  dec_cmd->add_option("--weights", dec.weights, "Directory of <layer>.bin weight files (default: seeded)");
  dec_cmd->add_option("--seed", dec.seed, "Weight seed (default: LRD_SEED or built-in)");
  dec_cmd->add_option("--emit", dec.emit, "Output bundle directory")->required();
  dec_cmd->add_option("--emit-format", dec.emit_format, "bin or json")->check(CLI::IsMember({"bin", "json"}));
  dec_cmd->add_option("--hooi-sweeps", dec.hooi_sweeps, "HOOI refinement sweeps (0 to 10)")
      ->check(CLI::Range(0, 10));

  VerifyArgs ver;
  auto* ver_cmd = app.add_subcommand("verify", "Check a bundle numerically");
  ver_cmd->add_option("bundle", ver.bundle, "Bundle directory")->required();
  ver_cmd->add_option("--mode", ver.mode, "reconstruct, forward, branch-equiv or merge-equiv")
      ->check(CLI::IsMember({"reconstruct", "forward", "branch-equiv", "merge-equiv"}));

  OptimizeArgs opt;
  auto* opt_cmd = app.add_subcommand("optimize-ranks", "Search ranks by profiling decomposed layers");
  opt_cmd->add_option("model", opt.model, "Model file")->required();
  opt_cmd->add_option("--alpha", opt.alpha, "Compression ratio (> 1)")->required();
  opt_cmd->add_option("--beta", opt.beta, "Tucker r2 / r1")->check(CLI::PositiveNumber);
  opt_cmd->add_option("--rmin-frac", opt.rmin_frac, "Lowest scanned rank as a fraction of the initial rank");
  opt_cmd->add_option("--reps", opt.reps, "Timed repetitions per rank (>= 3)");
  opt_cmd->add_option("--stride", opt.stride, "Rank scan step");
  opt_cmd->add_option("--layer", opt.layers, "Only search this layer (repeatable)");
  opt_cmd->add_flag("--synthetic-cost", opt.synthetic, "Use the deterministic cost model instead of timing");
  opt_cmd->add_option("--seed", opt.seed, "Weight seed (default: LRD_SEED or built-in)");
  opt_cmd->add_option("-o,--output", opt.output, "Plan file (default: stdout)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*stats_cmd) return cmd_stats(stats, out);
    if (*plan_cmd) return cmd_plan(plan, out, err);
    if (*dec_cmd) return cmd_decompose(dec, out);
    if (*ver_cmd) return cmd_verify(ver, out);
    if (*opt_cmd) return cmd_optimize(opt, out, err);
  } catch (const std::exception& e) {
    // usage, I/O, format and rank errors alike
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace lrd::cli
