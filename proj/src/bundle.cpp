#include "lrd/bundle.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "lrd/errors.hpp"
#include "lrd/plan_io.hpp"
#include "lrd/stacks.hpp"
#include "lrd/tensor_io.hpp"
#include "lrd/weights.hpp"

namespace lrd {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr double kForwardTol = 1e-6;
constexpr double kMergeTol = 1e-8;
constexpr double kFullRankTol = 1e-10;
constexpr double kManifestTol = 1e-9;

std::string file_stem(const std::string& layer) {
  std::string s = layer;
  for (char& c : s) {
    if (c == '/' || c == '\\') c = '_';
  }
  return s;
}

std::string read_bytes(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.filename().string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Tensor4 read_any(const fs::path& path) {
  if (path.extension() == ".json") {
    try {
      return tensor_from_json(nlohmann::json::parse(read_bytes(path)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("invalid tensor json: ") + e.what());
    }
  }
  return load_tensor(path);
}

Tensor4 bias_tensor(const Vector& b) {
  Tensor4 t(Dims4{1, static_cast<std::size_t>(b.size()), 1, 1});
  for (Eigen::Index i = 0; i < b.size(); ++i) t.data()[static_cast<std::size_t>(i)] = b(i);
  return t;
}

Vector bias_vector(const Tensor4& t) {
  Vector b(static_cast<Eigen::Index>(t.dims().size()));
  for (std::size_t i = 0; i < t.dims().size(); ++i) b(static_cast<Eigen::Index>(i)) = t.data()[i];
  return b;
}

Dims4 weight_dims(const LayerSpec& spec) {
  return Dims4{spec.in_channels / spec.groups, spec.out_channels, spec.kernel, spec.kernel};
}

std::string dims_text(const Dims4& d) {
  return std::to_string(d.in) + "x" + std::to_string(d.out) + "x" + std::to_string(d.kh) + "x" + std::to_string(d.kw);
}

class Writer {
 public:
  Writer(fs::path dir, std::string format) : dir_(std::move(dir)), format_(std::move(format)) {}

  void put(BundleEntry& entry, const std::string& role, const Tensor4& t) const {
    const std::string name = file_stem(entry.spec.name) + "." + role + (format_ == "json" ? ".json" : ".bin");
    const fs::path path = dir_ / name;
    if (format_ == "json") {
      std::ofstream os(path);
      if (!os) throw FormatError("cannot write " + name);
      os << tensor_to_json(t).dump() << '\n';
    } else {
      save_tensor(path, t);
    }
    entry.files.push_back(BundleFile{role, name, fnv1a(read_bytes(path))});
  }

 private:
  fs::path dir_;
  std::string format_;
};

std::vector<std::string> rank_problems(const CompressionPlan& plan) {
  std::vector<std::string> problems;
  for (const auto& e : plan.entries) {
    const LayerSpec& l = e.spec;
    const std::string where = "layer '" + l.name + "': ";
    if (const auto* s = std::get_if<SvdDecision>(&e.decision)) {
      if (s->rank < 1 || s->rank > std::min(l.in_channels, l.out_channels) || l.kernel != 1 || l.groups != 1) {
        problems.push_back(where + "svd rank " + std::to_string(s->rank) + " does not fit " +
                           std::to_string(l.in_channels) + "x" + std::to_string(l.out_channels));
      }
    } else if (const auto* t = std::get_if<TuckerDecision>(&e.decision)) {
      if (t->r1 < 1 || t->r2 < 1 || t->r1 > l.in_channels || t->r2 > l.out_channels || l.groups != 1) {
        problems.push_back(where + "tucker ranks (" + std::to_string(t->r1) + ", " + std::to_string(t->r2) +
                           ") do not fit " + std::to_string(l.in_channels) + "x" + std::to_string(l.out_channels));
      } else if (e.transforms.branches > 1 &&
                 (t->r1 % e.transforms.branches != 0 || t->r2 % e.transforms.branches != 0)) {
        problems.push_back(where + std::to_string(e.transforms.branches) + " branches do not divide the ranks");
      }
    }
  }
  return problems;
}

nn::FeatureMap probe(std::uint64_t seed, const std::string& tag, std::size_t c, std::size_t hw, bool flat) {
  auto rng = layer_rng(seed, tag);
  nn::FeatureMap x(1, c, flat ? 1 : hw, flat ? 1 : hw);
  for (double& v : x.data) v = uniform(rng, -1.0, 1.0);
  return x;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

}  // namespace

Tensor4 WeightSource::weights(const LayerSpec& spec) const {
  if (!dir) return seeded_weights(spec, seed);
  const std::string name = file_stem(spec.name) + ".bin";
  const fs::path path = *dir / name;
  const std::string where = "layer '" + spec.name + "': " + name + ": ";
  if (!fs::exists(path)) throw FormatError(where + "missing weight file");
  Tensor4 t;
  try {
    t = load_tensor(path);
  } catch (const FormatError& e) {
    throw FormatError(where + e.what());
  }
  if (t.dims() != weight_dims(spec)) {
    throw FormatError(where + "expected dims " + dims_text(weight_dims(spec)) + ", got " + dims_text(t.dims()));
  }
  return t;
}

std::optional<Vector> WeightSource::bias(const LayerSpec& spec) const {
  if (!spec.has_bias) return std::nullopt;
  if (!dir) return seeded_bias(spec, seed);
  const std::string name = file_stem(spec.name) + ".bias.bin";
  const fs::path path = *dir / name;
  if (!fs::exists(path)) return seeded_bias(spec, seed);
  Tensor4 t;
  try {
    t = load_tensor(path);
  } catch (const FormatError& e) {
    throw FormatError("layer '" + spec.name + "': " + name + ": " + e.what());
  }
  if (t.dims().size() != spec.out_channels) {
    throw FormatError("layer '" + spec.name + "': " + name + ": expected " + std::to_string(spec.out_channels) +
                      " bias values");
  }
  return bias_vector(t);
}

const BundleFile* BundleEntry::find(const std::string& role) const {
  for (const auto& f : files) {
    if (f.role == role) return &f;
  }
  return nullptr;
}

BundleManifest write_bundle(const CompressionPlan& plan, const WeightSource& source, const EmitOptions& options,
                            const fs::path& dir) {
  if (options.format != "bin" && options.format != "json") {
    throw std::invalid_argument("emit format must be bin or json");
  }
  if (const auto problems = rank_problems(plan); !problems.empty()) {
    std::string msg;
    for (const auto& p : problems) msg += (msg.empty() ? "" : "\n") + p;
    throw RankError(msg);
  }
  std::map<std::string, const PlanEntry*> by_name;
  for (const auto& e : plan.entries) by_name[e.spec.name] = &e;

  fs::create_directories(dir);
  const Writer writer(dir, options.format);
  BundleManifest m;
  m.model = plan.model;
  m.transform = plan.transform;
  m.seed = source.seed;
  m.weights = source.dir ? source.dir->filename().string() : "seeded";

  for (const auto& e : plan.entries) {
    BundleEntry b;
    b.spec = e.spec;
    b.scheme = decision_name(e.decision);
    b.branches = e.transforms.branches;
    b.frozen = e.transforms.frozen;
    const Tensor4 w = source.weights(e.spec);
    const auto bias = source.bias(e.spec);
    writer.put(b, "original", w);
    if (bias) writer.put(b, "bias", bias_tensor(*bias));

    if (const auto* merged = std::get_if<MergedDecision>(&e.decision)) {
      b.merged_into = merged->into;
    } else if (const auto* s = std::get_if<SvdDecision>(&e.decision)) {
      const Matrix wm = w.as_matrix();
      SvdFactors f = decompose_svd(wm, s->rank);
      if (!b.frozen.empty() && b.frozen.front()) f = freeze_and_refit(wm, f);
      b.ranks = {s->rank};
      b.relative_error = relative_error(wm, reconstruct(f));
      writer.put(b, "w0", Tensor4::from_matrix(f.w0));
      writer.put(b, "w1", Tensor4::from_matrix(f.w1));
    } else if (const auto* t = std::get_if<TuckerDecision>(&e.decision)) {
      TuckerFactors f = decompose_tucker2(w, t->r1, t->r2, options.tucker);
      if (!b.frozen.empty()) f = freeze_and_refit(w, f);
      b.ranks = {t->r1, t->r2};
      b.relative_error = relative_error(w, reconstruct(f));
      writer.put(b, "first", Tensor4::from_matrix(f.first));
      writer.put(b, "core", f.core);
      writer.put(b, "last", Tensor4::from_matrix(f.last));
      if (b.branches > 1) {
        const BranchedTucker br = branch_tucker(f, b.branches);
        const GroupedConvStack g = branched_to_grouped(br);
        b.branched_relative_error = relative_error(w, reconstruct(br));
        writer.put(b, "grouped_first", Tensor4::from_matrix(g.first));
        writer.put(b, "grouped_core", g.core);
        writer.put(b, "grouped_last", Tensor4::from_matrix(g.last));
      }
      if (const auto& p = e.transforms.absorbs_prev) {
        b.absorbs_prev = p->name;
        writer.put(b, "merged_first", Tensor4::from_matrix(merge_1x1(source.weights(*p).as_matrix(), f.first)));
      }
      if (const auto& n = e.transforms.absorbs_next) {
        b.absorbs_next = n->name;
        const Matrix nm = source.weights(*n).as_matrix();
        writer.put(b, "merged_last", Tensor4::from_matrix(merge_1x1(f.last, nm)));
        if (bias) writer.put(b, "merged_bias", bias_tensor(nm.transpose() * *bias));
      }
    }
    m.entries.push_back(std::move(b));
  }

  std::ofstream os(dir / "manifest.json");
  if (!os) throw FormatError("cannot write manifest.json");
  os << manifest_to_json(m).dump(2) << '\n';
  return m;
}

ojson manifest_to_json(const BundleManifest& m) {
  ojson j;
  j["format"] = m.format;
  j["model"] = m.model;
  j["transform"] = m.transform;
  j["seed"] = m.seed;
  j["weights"] = m.weights;
  ojson layers = ojson::array();
  for (const auto& e : m.entries) {
    ojson je;
    je["name"] = e.spec.name;
    je["scheme"] = e.scheme;
    je["ranks"] = e.ranks;
    je["branches"] = e.branches;
    je["frozen"] = e.frozen;
    je["merged_into"] = e.merged_into;
    je["absorbs_prev"] = e.absorbs_prev;
    je["absorbs_next"] = e.absorbs_next;
    je["relative_error"] = e.relative_error;
    je["branched_relative_error"] = e.branched_relative_error ? ojson(*e.branched_relative_error) : ojson(nullptr);
    je["spec"] = layer_to_json(e.spec);
    ojson files = ojson::array();
    for (const auto& f : e.files) {
      char digest[17];
      std::snprintf(digest, sizeof digest, "%016llx", static_cast<unsigned long long>(f.digest));
      files.push_back(ojson{{"role", f.role}, {"file", f.file}, {"fnv1a", digest}});
    }
    je["files"] = std::move(files);
    layers.push_back(std::move(je));
  }
  j["layers"] = std::move(layers);
  return j;
}

BundleManifest manifest_from_json(const nlohmann::json& j) {
  BundleManifest m;
  try {
    m.format = j.at("format").get<std::string>();
    if (m.format != kBundleFormat) throw FormatError("manifest: unsupported format '" + m.format + "'");
    m.model = j.at("model").get<std::string>();
    m.transform = j.at("transform").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.weights = j.at("weights").get<std::string>();
    for (const auto& je : j.at("layers")) {
      BundleEntry e;
      e.spec = layer_from_json(je.at("spec"));
      e.scheme = je.at("scheme").get<std::string>();
      e.ranks = je.at("ranks").get<std::vector<std::size_t>>();
      e.branches = je.at("branches").get<std::size_t>();
      e.frozen = je.at("frozen").get<std::vector<bool>>();
      e.merged_into = je.at("merged_into").get<std::string>();
      e.absorbs_prev = je.at("absorbs_prev").get<std::string>();
      e.absorbs_next = je.at("absorbs_next").get<std::string>();
      e.relative_error = je.at("relative_error").get<double>();
      if (!je.at("branched_relative_error").is_null()) {
        e.branched_relative_error = je.at("branched_relative_error").get<double>();
      }
      for (const auto& jf : je.at("files")) {
        e.files.push_back(BundleFile{jf.at("role").get<std::string>(), jf.at("file").get<std::string>(),
                                     std::stoull(jf.at("fnv1a").get<std::string>(), nullptr, 16)});
      }
      const bool ranks_ok = (e.scheme == "svd" && e.ranks.size() == 1) ||
                            (e.scheme == "tucker" && e.ranks.size() == 2) ||
                            ((e.scheme == "passthrough" || e.scheme == "merged") && e.ranks.empty());
      if (!ranks_ok) throw FormatError("manifest: layer '" + e.spec.name + "': bad scheme or ranks");
      m.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  return m;
}

BundleManifest read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  if (!fs::exists(path)) throw FormatError("bundle: missing manifest.json in " + dir.string());
  try {
    return manifest_from_json(nlohmann::json::parse(read_bytes(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
}

Tensor4 load_role(const fs::path& dir, const BundleEntry& entry, const std::string& role) {
  const BundleFile* f = entry.find(role);
  const std::string where = "layer '" + entry.spec.name + "': ";
  if (f == nullptr) throw FormatError(where + "missing " + role + " factor in manifest");
  const fs::path path = dir / f->file;
  if (!fs::exists(path)) throw FormatError(where + "missing " + role + " factor file " + f->file);
  try {
    return read_any(path);
  } catch (const FormatError& e) {
    throw FormatError(where + f->file + ": " + e.what());
  }
}

DecomposedLayer load_decomposed(const fs::path& dir, const BundleEntry& entry) {
  DecomposedLayer d;
  d.original = entry.spec;
  d.frozen = entry.frozen;
  if (entry.find("bias") != nullptr) d.bias = bias_vector(load_role(dir, entry, "bias"));
  if (entry.scheme == "svd") {
    d.factors = SvdFactors{load_role(dir, entry, "w0").as_matrix(), load_role(dir, entry, "w1").as_matrix()};
  } else if (entry.scheme == "tucker") {
    d.factors = TuckerFactors{load_role(dir, entry, "first").as_matrix(), load_role(dir, entry, "core"),
                              load_role(dir, entry, "last").as_matrix()};
  } else {
    d.factors = Passthrough{load_role(dir, entry, "original")};
  }
  return d;
}

std::optional<VerifyMode> parse_verify_mode(const std::string& s) {
  if (s == "reconstruct") return VerifyMode::reconstruct;
  if (s == "forward") return VerifyMode::forward;
  if (s == "branch-equiv") return VerifyMode::branch_equiv;
  if (s == "merge-equiv") return VerifyMode::merge_equiv;
  return std::nullopt;
}

bool VerifyReport::ok() const {
  if (!failures.empty()) return false;
  for (const auto& l : lines) {
    if (!l.pass && !l.informational) return false;
  }
  return true;
}

VerifyReport verify_bundle(const fs::path& dir, VerifyMode mode) {
  const BundleManifest m = read_manifest(dir);
  VerifyReport report;
  std::map<std::string, const BundleEntry*> by_name;
  for (const auto& e : m.entries) by_name[e.spec.name] = &e;

  auto add = [&](const std::string& layer, const std::string& check, double value, double tol) {
    report.lines.push_back(VerifyLine{layer, check, value, tol, std::isfinite(value) && value <= tol, false});
  };
  auto info = [&](const std::string& layer, const std::string& check, double value) {
    report.lines.push_back(VerifyLine{layer, check, value, 0.0, true, true});
  };

  // Integrity first: every file must match its digest and every recorded
  // error must match the stored factors.
  std::vector<const BundleEntry*> intact;
  for (const auto& e : m.entries) {
    bool ok = true;
    for (const auto& f : e.files) {
      const fs::path path = dir / f.file;
      if (!fs::exists(path)) throw FormatError("layer '" + e.spec.name + "': missing " + f.role + " factor file " + f.file);
      if (fnv1a(read_bytes(path)) != f.digest) {
        report.failures.push_back("layer '" + e.spec.name + "': " + f.file + " does not match its manifest digest");
        ok = false;
      }
    }
    if (e.scheme == "svd" || e.scheme == "tucker") {
      const DecomposedLayer d = load_decomposed(dir, e);
      const Tensor4 w = load_role(dir, e, "original");
      const double err = e.scheme == "svd" ? relative_error(w.as_matrix(), reconstruct(std::get<SvdFactors>(d.factors)))
                                           : relative_error(w, reconstruct(std::get<TuckerFactors>(d.factors)));
      if (!(std::abs(err - e.relative_error) <= kManifestTol * std::max(1.0, e.relative_error))) {
        report.failures.push_back("layer '" + e.spec.name + "': relative error " + fmt(err) +
                                  " does not match manifest " + fmt(e.relative_error));
        ok = false;
      }
    }
    if (ok) intact.push_back(&e);
  }

  std::size_t checked = 0;
  for (const BundleEntry* ep : intact) {
    const BundleEntry& e = *ep;
    const LayerSpec& l = e.spec;
    if (e.scheme != "svd" && e.scheme != "tucker") continue;
    const DecomposedLayer d = load_decomposed(dir, e);
    const Tensor4 w = load_role(dir, e, "original");

    if (mode == VerifyMode::reconstruct) {
      ++checked;
      const bool full = e.scheme == "svd" ? e.ranks[0] == std::min(l.in_channels, l.out_channels)
                                          : e.ranks[0] == l.in_channels && e.ranks[1] == l.out_channels;
      if (full) {
        add(l.name, "full-rank reconstruction", e.relative_error, kFullRankTol);
      } else {
        info(l.name, "relative error", e.relative_error);
      }
    } else if (mode == VerifyMode::forward) {
      ++checked;
      const nn::FeatureMap x = random_input(l, 1, m.seed);
      const Tensor4 rec = reconstruct(d);
      const nn::FeatureMap want = nn::run_stack(original_stack(l, rec, d.bias), x);
      const nn::FeatureMap got = nn::run_stack(factor_stack(d), x);
      add(l.name, "factor stack vs reconstructed layer", nn::relative_difference(got, want), kForwardTol);
    } else if (mode == VerifyMode::branch_equiv) {
      if (e.branches <= 1) continue;
      ++checked;
      const auto& f = std::get<TuckerFactors>(d.factors);
      const BranchedTucker br = branch_tucker(f, e.branches);
      const GroupedConvStack g{load_role(dir, e, "grouped_first").as_matrix(), load_role(dir, e, "grouped_core"),
                               load_role(dir, e, "grouped_last").as_matrix(), e.branches};
      const nn::FeatureMap x = random_input(l, 1, m.seed);
      const nn::FeatureMap grouped = nn::run_stack(grouped_stack(l, g, d.bias), x);
      const nn::FeatureMap summed = branch_sum_forward(l, br, x, d.bias);
      const nn::FeatureMap direct = nn::run_stack(original_stack(l, reconstruct(br), d.bias), x);
      add(l.name, "grouped stack vs branch sum", nn::relative_difference(grouped, summed), kForwardTol);
      add(l.name, "grouped stack vs branched reconstruction", nn::relative_difference(grouped, direct), kForwardTol);
      const nn::FeatureMap vanilla = nn::run_stack(tucker_stack(l, f, d.bias), x);
      info(l.name, "deviation from unbranched stack", nn::relative_difference(grouped, vanilla));
      const double core = f.core.norm();
      info(l.name, "off-diagonal core energy", core > 0 ? offdiagonal_core_norm(f, e.branches) / core : 0.0);
    } else if (e.scheme == "tucker") {
      const auto& f = std::get<TuckerFactors>(d.factors);
      if (!e.absorbs_prev.empty()) {
        ++checked;
        const auto it = by_name.find(e.absorbs_prev);
        if (it == by_name.end()) throw FormatError("layer '" + l.name + "': absorbed layer '" + e.absorbs_prev + "' missing");
        const BundleEntry& p = *it->second;
        const nn::FeatureMap x = probe(m.seed, p.spec.name + ".probe", p.spec.in_channels, p.spec.input_hw, false);
        const nn::Stack pair{nn::ConvOp{load_role(dir, p, "original"), {p.spec.stride, 0, 1}, std::nullopt},
                             nn::ConvOp{Tensor4::from_matrix(f.first), {}, std::nullopt}};
        const nn::Stack merged{nn::ConvOp{load_role(dir, e, "merged_first"), {p.spec.stride, 0, 1}, std::nullopt}};
        add(l.name, "merged first vs " + p.spec.name + " then first",
            nn::relative_difference(nn::run_stack(merged, x), nn::run_stack(pair, x)), kMergeTol);
      }
      if (!e.absorbs_next.empty()) {
        ++checked;
        const auto it = by_name.find(e.absorbs_next);
        if (it == by_name.end()) throw FormatError("layer '" + l.name + "': absorbed layer '" + e.absorbs_next + "' missing");
        const BundleEntry& n = *it->second;
        const nn::FeatureMap x = probe(m.seed, l.name + ".probe", e.ranks[1], l.output_hw(), false);
        nn::Stack pair{nn::ConvOp{Tensor4::from_matrix(f.last), {}, d.bias},
                       nn::ConvOp{load_role(dir, n, "original"), {n.spec.stride, 0, 1}, std::nullopt}};
        std::optional<Vector> merged_bias;
        if (e.find("merged_bias") != nullptr) merged_bias = bias_vector(load_role(dir, e, "merged_bias"));
        const nn::Stack merged{nn::ConvOp{load_role(dir, e, "merged_last"), {n.spec.stride, 0, 1}, merged_bias}};
        add(l.name, "merged last vs last then " + n.spec.name,
            nn::relative_difference(nn::run_stack(merged, x), nn::run_stack(pair, x)), kMergeTol);
      }
    }
  }
  if (checked == 0 && report.failures.empty()) {
    if (mode == VerifyMode::branch_equiv) report.failures.push_back("no branched layers in bundle");
    if (mode == VerifyMode::merge_equiv) report.failures.push_back("no merged layers in bundle");
  }
  return report;
}

void print_report(std::ostream& os, const VerifyReport& report) {
  for (const auto& l : report.lines) {
    const char* tag = l.informational ? "INFO" : (l.pass ? "PASS" : "FAIL");
    os << tag << "  " << l.layer << "  " << l.check << "  " << fmt(l.value);
    if (!l.informational) os << " <= " << fmt(l.tolerance);
    os << '\n';
  }
  for (const auto& f : report.failures) os << "FAIL  " << f << '\n';
  os << (report.ok() ? "verify: ok" : "verify: FAILED") << '\n';
}

}  // namespace lrd
