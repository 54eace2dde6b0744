#pragma once

#include <optional>

#include "lrd/decompose.hpp"
#include "lrd/layer.hpp"
#include "lrd/nn.hpp"
#include "lrd/transforms.hpp"

namespace lrd {

// Executable forms of layers and factor stacks. Strides and padding follow
// the layer spec: Tucker puts them on the core, SVD puts the padding on the
// first factor and the stride on the second. Bias always rides on the last op.

nn::Stack original_stack(const LayerSpec& spec, const Tensor4& weights, const std::optional<Vector>& bias = {});
nn::Stack svd_stack(const LayerSpec& spec, const SvdFactors& f, const std::optional<Vector>& bias = {});
nn::Stack tucker_stack(const LayerSpec& spec, const TuckerFactors& f, const std::optional<Vector>& bias = {});
nn::Stack grouped_stack(const LayerSpec& spec, const GroupedConvStack& g, const std::optional<Vector>& bias = {});
nn::Stack factor_stack(const DecomposedLayer& d);

/// Sum over branches of each branch's own three-op stack.
nn::FeatureMap branch_sum_forward(const LayerSpec& spec, const BranchedTucker& b, const nn::FeatureMap& x,
                                  const std::optional<Vector>& bias = {});

/// Input of the right shape for a layer, batch n.
nn::FeatureMap input_for(const LayerSpec& spec, std::size_t batch = 1);

}  // namespace lrd
