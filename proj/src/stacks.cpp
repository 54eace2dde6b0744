#include "lrd/stacks.hpp"

namespace lrd {

namespace {

nn::ConvOp pointwise(const Matrix& m, std::size_t stride = 1, std::size_t padding = 0,
                     std::optional<Vector> bias = std::nullopt) {
  return nn::ConvOp{Tensor4::from_matrix(m), nn::ConvParams{stride, padding, 1}, std::move(bias)};
}

}  // namespace

nn::Stack original_stack(const LayerSpec& spec, const Tensor4& weights, const std::optional<Vector>& bias) {
  if (spec.kind == LayerKind::linear) return {nn::LinearOp{weights.as_matrix(), bias}};
  return {nn::ConvOp{weights, nn::ConvParams{spec.stride, spec.padding, spec.groups}, bias}};
}

nn::Stack svd_stack(const LayerSpec& spec, const SvdFactors& f, const std::optional<Vector>& bias) {
  if (spec.kind == LayerKind::linear) return {nn::LinearOp{f.w0, std::nullopt}, nn::LinearOp{f.w1, bias}};
  return {pointwise(f.w0, 1, spec.padding), pointwise(f.w1, spec.stride, 0, bias)};
}

nn::Stack tucker_stack(const LayerSpec& spec, const TuckerFactors& f, const std::optional<Vector>& bias) {
  return {pointwise(f.first), nn::ConvOp{f.core, nn::ConvParams{spec.stride, spec.padding, 1}, std::nullopt},
          pointwise(f.last, 1, 0, bias)};
}

nn::Stack grouped_stack(const LayerSpec& spec, const GroupedConvStack& g, const std::optional<Vector>& bias) {
  return {pointwise(g.first), nn::ConvOp{g.core, nn::ConvParams{spec.stride, spec.padding, g.groups}, std::nullopt},
          pointwise(g.last, 1, 0, bias)};
}

nn::Stack factor_stack(const DecomposedLayer& d) {
  struct Visitor {
    const DecomposedLayer& d;
    nn::Stack operator()(const Passthrough& p) const { return original_stack(d.original, p.weights, d.bias); }
    nn::Stack operator()(const SvdFactors& f) const { return svd_stack(d.original, f, d.bias); }
    nn::Stack operator()(const TuckerFactors& f) const { return tucker_stack(d.original, f, d.bias); }
  };
  return std::visit(Visitor{d}, d.factors);
}

nn::FeatureMap branch_sum_forward(const LayerSpec& spec, const BranchedTucker& b, const nn::FeatureMap& x,
                                  const std::optional<Vector>& bias) {
  nn::FeatureMap sum;
  for (const auto& br : b.branches) {
    nn::FeatureMap y = nn::run_stack(tucker_stack(spec, TuckerFactors{br.first, br.core, br.last}), x);
    if (sum.data.empty()) {
      sum = std::move(y);
      continue;
    }
    for (std::size_t i = 0; i < sum.data.size(); ++i) sum.data[i] += y.data[i];
  }
  if (bias) {
    const std::size_t plane = sum.height * sum.width;
    for (std::size_t n = 0; n < sum.batch; ++n)
      for (std::size_t s = 0; s < sum.channels; ++s)
        for (std::size_t q = 0; q < plane; ++q)
          sum.data[(n * sum.channels + s) * plane + q] += (*bias)(static_cast<Eigen::Index>(s));
  }
  return sum;
}

nn::FeatureMap input_for(const LayerSpec& spec, std::size_t batch) {
  if (spec.kind == LayerKind::linear) return nn::FeatureMap(batch, spec.in_channels, 1, 1);
  return nn::FeatureMap(batch, spec.in_channels, spec.input_hw, spec.input_hw);
}

}  // namespace lrd
