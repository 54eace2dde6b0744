#pragma once

#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "lrd/layer.hpp"

namespace lrd {

struct ActivationNode {
  std::string name;
  std::string block;
  bool foldable = false;  // removable by the layer-merging variant
};

struct AddNode {
  std::string name;
  std::string block;
};

struct PoolNode {
  std::string name;
  std::size_t output_hw = 1;
};

using ModelNode = std::variant<LayerSpec, ActivationNode, AddNode, PoolNode>;

/// Ordered node list of a network; weight layers carry the structure flags
/// (block, shortcut, next, link) derived on load.
struct ModelFile {
  std::string name;
  std::size_t input_channels = 3;
  std::size_t input_hw = 224;
  std::vector<ModelNode> nodes;

  [[nodiscard]] std::vector<LayerSpec> layers() const;
};

/// Validates field types and the channel/spatial chain, then derives links.
/// Errors name the node index and field: `layers[5] ('layer1.0.conv2'): field 'in': ...`.
ModelFile parse_model(const nlohmann::json& j);
ModelFile parse_model_text(const std::string& text);
ModelFile load_model(const std::filesystem::path& path);

nlohmann::ordered_json model_to_json(const ModelFile& model);

}  // namespace lrd
