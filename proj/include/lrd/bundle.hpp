#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lrd/decompose.hpp"
#include "lrd/planner.hpp"
#include "lrd/transforms.hpp"

namespace lrd {

inline constexpr const char* kBundleFormat = "lrd-bundle/1";

/// Where layer weights come from: `<dir>/<layer>.bin` (and optionally
/// `<layer>.bias.bin`) when dir is set, the seeded generator otherwise.
struct WeightSource {
  std::optional<std::filesystem::path> dir;
  std::uint64_t seed = 0;

  [[nodiscard]] Tensor4 weights(const LayerSpec& spec) const;
  [[nodiscard]] std::optional<Vector> bias(const LayerSpec& spec) const;
};

struct BundleFile {
  std::string role;  // original, bias, w0, w1, first, core, last, merged_first, ...
  std::string file;
  std::uint64_t digest = 0;  // FNV-1a of the file bytes
};

struct BundleEntry {
  LayerSpec spec;
  std::string scheme;  // passthrough | svd | tucker | merged
  std::vector<std::size_t> ranks;
  std::size_t branches = 1;
  std::vector<bool> frozen;
  std::string merged_into;
  std::string absorbs_prev;
  std::string absorbs_next;
  double relative_error = 0.0;
  std::optional<double> branched_relative_error;
  std::vector<BundleFile> files;

  [[nodiscard]] const BundleFile* find(const std::string& role) const;
};

struct BundleManifest {
  std::string format = kBundleFormat;
  std::string model;
  std::string transform = "none";
  std::uint64_t seed = 0;
  std::string weights = "seeded";  // or the weights directory
  std::vector<BundleEntry> entries;
};

struct EmitOptions {
  std::string format = "bin";  // bin | json
  TuckerOptions tucker;
};

/// Decomposes every plan entry and writes factors plus manifest.json into dir.
/// Ranks that do not fit their layer are collected and reported together
/// before anything is written.
BundleManifest write_bundle(const CompressionPlan& plan, const WeightSource& source, const EmitOptions& options,
                            const std::filesystem::path& dir);

nlohmann::ordered_json manifest_to_json(const BundleManifest& m);
BundleManifest manifest_from_json(const nlohmann::json& j);
BundleManifest read_manifest(const std::filesystem::path& dir);

/// Loads one file of an entry. Throws FormatError naming the layer when the
/// file is missing or unreadable.
Tensor4 load_role(const std::filesystem::path& dir, const BundleEntry& entry, const std::string& role);
DecomposedLayer load_decomposed(const std::filesystem::path& dir, const BundleEntry& entry);

enum class VerifyMode { reconstruct, forward, branch_equiv, merge_equiv };
std::optional<VerifyMode> parse_verify_mode(const std::string& s);

struct VerifyLine {
  std::string layer;
  std::string check;
  double value = 0.0;
  double tolerance = 0.0;
  bool pass = true;
  bool informational = false;  // reported, never fails
};

struct VerifyReport {
  std::vector<VerifyLine> lines;
  std::vector<std::string> failures;  // structural problems (tampered files, empty suites)

  [[nodiscard]] bool ok() const;
};

VerifyReport verify_bundle(const std::filesystem::path& dir, VerifyMode mode);
void print_report(std::ostream& os, const VerifyReport& report);

}  // namespace lrd
