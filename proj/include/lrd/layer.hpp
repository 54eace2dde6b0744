#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace lrd {

enum class LayerKind { conv, linear };

/// What separates a layer from the next layer on the main path.
enum class Link {
  barrier,   // nonlinearity, residual add, pooling, or end of block
  direct,    // nothing: the two linear maps compose exactly
  foldable,  // an activation the layer-merging variant removes
};

/// Symbolic description of one weight layer.
struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::conv;
  std::size_t in_channels = 1;   // C
  std::size_t out_channels = 1;  // S
  std::size_t kernel = 1;        // k (1 for linear)
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
  bool has_bias = false;
  std::size_t input_hw = 1;  // square spatial size entering the layer

  // Model structure, filled by the model loader.
  std::string block;          // bottleneck id, empty outside blocks
  bool shortcut = false;      // projection on the residual path
  std::string next;           // next main-path weight layer in the same block
  Link link = Link::barrier;  // what sits between this layer and `next`

  [[nodiscard]] std::size_t output_hw() const;
  [[nodiscard]] bool is_pointwise() const { return kernel == 1; }
  /// Throws std::invalid_argument on C, S, k, stride < 1 or groups not dividing C and S.
  void validate() const;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

const char* to_string(LayerKind kind);
const char* to_string(Link link);

}  // namespace lrd
