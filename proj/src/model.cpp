#include "lrd/model.hpp"

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>

#include "lrd/errors.hpp"

namespace lrd {

namespace {

using json = nlohmann::json;

struct NodeContext {
  std::size_t index;
  std::string name;

  [[noreturn]] void fail(const std::string& field, const std::string& what) const {
    throw FormatError("layers[" + std::to_string(index) + "] ('" + name + "'): field '" + field + "': " + what);
  }
};

template <typename T>
T field(const json& node, const NodeContext& ctx, const char* key, std::optional<T> fallback = std::nullopt) {
  const auto it = node.find(key);
  if (it == node.end()) {
    if (fallback) return *fallback;
    ctx.fail(key, "missing");
  }
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    ctx.fail(key, "wrong type");
  }
}

std::size_t count_field(const json& node, const NodeContext& ctx, const char* key,
                        std::optional<std::size_t> fallback = std::nullopt) {
  const auto it = node.find(key);
  if (it != node.end() && !(it->is_number_unsigned() || (it->is_number_integer() && it->get<long long>() >= 0))) {
    ctx.fail(key, "must be a nonnegative integer");
  }
  return field<std::size_t>(node, ctx, key, fallback);
}

void expect_eq(const NodeContext& ctx, const char* key, std::size_t expected, std::size_t got) {
  if (expected != got) ctx.fail(key, "expected " + std::to_string(expected) + ", got " + std::to_string(got));
}

const std::string& node_name(const ModelNode& n) {
  return std::visit([](const auto& v) -> const std::string& { return v.name; }, n);
}

void derive_links(std::vector<ModelNode>& nodes) {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    auto* layer = std::get_if<LayerSpec>(&nodes[i]);
    if (layer == nullptr || layer->shortcut) continue;
    layer->next.clear();
    layer->link = Link::barrier;
    if (layer->block.empty()) continue;
    bool all_foldable = true;
    bool any_activation = false;
    for (std::size_t j = i + 1; j < nodes.size(); ++j) {
      if (const auto* act = std::get_if<ActivationNode>(&nodes[j])) {
        any_activation = true;
        all_foldable = all_foldable && act->foldable;
        continue;
      }
      const auto* next = std::get_if<LayerSpec>(&nodes[j]);
      if (next != nullptr && !next->shortcut && next->block == layer->block) {
        layer->next = next->name;
        layer->link = !any_activation ? Link::direct : (all_foldable ? Link::foldable : Link::barrier);
      }
      break;
    }
  }
}

}  // namespace

std::vector<LayerSpec> ModelFile::layers() const {
  std::vector<LayerSpec> out;
  for (const auto& n : nodes) {
    if (const auto* l = std::get_if<LayerSpec>(&n)) out.push_back(*l);
  }
  return out;
}

ModelFile parse_model(const json& j) {
  ModelFile m;
  if (!j.is_object()) throw FormatError("model: top level must be an object");
  try {
    m.name = j.value("name", std::string("model"));
    m.input_channels = j.value("input_channels", std::size_t{3});
    m.input_hw = j.value("input_hw", std::size_t{224});
  } catch (const json::exception& e) {
    throw FormatError(std::string("model: ") + e.what());
  }
  const auto layers_it = j.find("layers");
  if (layers_it == j.end() || !layers_it->is_array()) throw FormatError("model: field 'layers' must be an array");

  std::size_t cur_c = m.input_channels;
  std::size_t cur_hw = m.input_hw;
  bool flattened = false;
  std::string cur_block;
  std::size_t block_c = cur_c;
  std::size_t block_hw = cur_hw;
  std::optional<std::pair<std::size_t, std::size_t>> shortcut_out;

  const json& arr = *layers_it;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const json& node = arr[i];
    NodeContext ctx{i, node.is_object() ? node.value("name", std::string("?")) : std::string("?")};
    if (!node.is_object()) ctx.fail("name", "entry must be an object");
    const auto name = field<std::string>(node, ctx, "name");
    const auto type = field<std::string>(node, ctx, "type");
    const auto block = field<std::string>(node, ctx, "block", std::string());
    for (const auto& prev : m.nodes) {
      if (node_name(prev) == name) ctx.fail("name", "duplicate layer name");
    }
    if (!block.empty() && block != cur_block) {
      block_c = cur_c;
      block_hw = cur_hw;
      shortcut_out.reset();
    }
    cur_block = block;

    if (type == "conv" || type == "linear") {
      LayerSpec l;
      l.name = name;
      l.kind = type == "conv" ? LayerKind::conv : LayerKind::linear;
      l.in_channels = count_field(node, ctx, "in");
      l.out_channels = count_field(node, ctx, "out");
      l.kernel = count_field(node, ctx, "kernel", 1);
      l.stride = count_field(node, ctx, "stride", 1);
      l.padding = count_field(node, ctx, "padding", 0);
      l.groups = count_field(node, ctx, "groups", 1);
      l.has_bias = field<bool>(node, ctx, "bias", false);
      l.input_hw = l.kind == LayerKind::linear ? 1 : count_field(node, ctx, "input_hw");
      l.block = block;
      l.shortcut = field<bool>(node, ctx, "shortcut", false);
      try {
        l.validate();
      } catch (const std::invalid_argument& e) {
        ctx.fail("type", e.what());
      }
      if (l.shortcut) {
        if (block.empty()) ctx.fail("shortcut", "shortcut layers must belong to a block");
        expect_eq(ctx, "in", block_c, l.in_channels);
        expect_eq(ctx, "input_hw", block_hw, l.input_hw);
        shortcut_out = std::pair{l.out_channels, l.output_hw()};
      } else if (l.kind == LayerKind::linear) {
        expect_eq(ctx, "in", flattened ? cur_c : cur_c * cur_hw * cur_hw, l.in_channels);
        cur_c = l.out_channels;
        cur_hw = 1;
        flattened = true;
      } else {
        if (flattened) ctx.fail("type", "conv after a linear layer");
        expect_eq(ctx, "in", cur_c, l.in_channels);
        expect_eq(ctx, "input_hw", cur_hw, l.input_hw);
        cur_c = l.out_channels;
        cur_hw = l.output_hw();
      }
      m.nodes.emplace_back(std::move(l));
    } else if (type == "relu") {
      m.nodes.emplace_back(ActivationNode{name, block, field<bool>(node, ctx, "foldable", false)});
    } else if (type == "add") {
      const std::size_t res_c = shortcut_out ? shortcut_out->first : block_c;
      const std::size_t res_hw = shortcut_out ? shortcut_out->second : block_hw;
      if (res_c != cur_c || res_hw != cur_hw) {
        ctx.fail("type", "residual " + std::to_string(res_c) + "x" + std::to_string(res_hw) + " does not match main path " +
                             std::to_string(cur_c) + "x" + std::to_string(cur_hw));
      }
      m.nodes.emplace_back(AddNode{name, block});
    } else if (type == "pool") {
      const std::size_t out_hw = count_field(node, ctx, "output_hw");
      if (out_hw < 1 || out_hw > cur_hw) ctx.fail("output_hw", "must be in [1, " + std::to_string(cur_hw) + "]");
      cur_hw = out_hw;
      m.nodes.emplace_back(PoolNode{name, out_hw});
    } else {
      ctx.fail("type", "unknown type '" + type + "'");
    }
  }
  derive_links(m.nodes);
  return m;
}

ModelFile parse_model_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw FormatError("line " + std::to_string(line) + ": invalid JSON");
  }
  return parse_model(j);
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  try {
    return parse_model_text(ss.str());
  } catch (const FormatError& e) {
    throw FormatError(path.filename().string() + ": " + e.what());
  }
}

nlohmann::ordered_json model_to_json(const ModelFile& model) {
  nlohmann::ordered_json j;
  j["name"] = model.name;
  j["input_channels"] = model.input_channels;
  j["input_hw"] = model.input_hw;
  auto& arr = j["layers"] = nlohmann::ordered_json::array();
  for (const auto& n : model.nodes) {
    nlohmann::ordered_json e;
    if (const auto* l = std::get_if<LayerSpec>(&n)) {
      e["name"] = l->name;
      e["type"] = to_string(l->kind);
      if (!l->block.empty()) e["block"] = l->block;
      e["in"] = l->in_channels;
      e["out"] = l->out_channels;
      if (l->kind == LayerKind::conv) {
        e["kernel"] = l->kernel;
        e["stride"] = l->stride;
        e["padding"] = l->padding;
        e["groups"] = l->groups;
        e["input_hw"] = l->input_hw;
      }
      e["bias"] = l->has_bias;
      if (l->shortcut) e["shortcut"] = true;
    } else if (const auto* a = std::get_if<ActivationNode>(&n)) {
      e["name"] = a->name;
      e["type"] = "relu";
      if (!a->block.empty()) e["block"] = a->block;
      if (a->foldable) e["foldable"] = true;
    } else if (const auto* add = std::get_if<AddNode>(&n)) {
      e["name"] = add->name;
      e["type"] = "add";
      if (!add->block.empty()) e["block"] = add->block;
    } else {
      const auto& p = std::get<PoolNode>(n);
      e["name"] = p.name;
      e["type"] = "pool";
      e["output_hw"] = p.output_hw;
    }
    arr.push_back(std::move(e));
  }
  return j;
}

}  // namespace lrd
